"""Command-line surface: simulate, estimate, study and fit subcommands.

Exit codes: 0 success, 2 usage or input error, 3 estimation non-convergence.
All file outputs are UTF-8; CSVs use CRLF line endings and full float64
precision so reruns with the same seed are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .descriptive import demean, histogram, normal_qq_points, sample_acov, sample_var
from .errors import DataError, DomainError, InitializationError, ParameterError
from .gmm import (
    GmmConfig,
    GmmResult,
    MomentConditionSet,
    default_conditions,
    transform,
    two_step_gmm,
    untransform,
)
from .moments import (
    intsupou_acov,
    intsupou_var,
    supou_acov,
    supou_var,
    sv_sqret_acov,
    sv_sqret_var,
)
from .params import ModelKind, ObservationSchedule, ParamVector, PiSpec
from .simulate import LevySpec, SimulationConfig, levy_moments, simulate_path

logger = logging.getLogger("supou.cli")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NONCONVERGED = 3

PARAM_NAMES = ("mu", "sigma2", "alpha_pi", "B")
WORKERS_ENV = "SUPOU_WORKERS"
HIST_BINS = 20


class CliError(Exception):
    """Input or configuration problem; carries the process exit code."""

    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _lag_list(text: str) -> Tuple[int, ...]:
    try:
        lags = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad lag list {text!r}") from exc
    if not lags:
        raise argparse.ArgumentTypeError("lag list is empty")
    return lags


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def _write_csv(path: str, header: Sequence[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path: str, payload: Dict) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def read_series(path: str) -> Tuple[Optional[List[str]], np.ndarray]:
    """Read a one-observation-per-line CSV: `value` or `date,value` rows."""
    if not os.path.exists(path):
        raise CliError(f"input file not found: {path}")
    dates: List[str] = []
    values: List[float] = []
    n_cols = None
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if lineno == 1:
                try:
                    float(row[-1])
                except ValueError:
                    continue  # header row
            if n_cols is None:
                n_cols = len(row)
                if n_cols not in (1, 2):
                    raise CliError(f"{path}:{lineno}: expected 1 or 2 columns, got {n_cols}")
            if len(row) != n_cols:
                raise CliError(f"{path}:{lineno}: inconsistent column count")
            try:
                values.append(float(row[-1]))
            except ValueError as exc:
                raise CliError(f"{path}:{lineno}: not a number: {row[-1]!r}") from exc
            if n_cols == 2:
                dates.append(row[0])
    if not values:
        raise CliError(f"no observations found in {path}")
    return (dates if dates else None), np.array(values)


def _model_kind(name: str) -> ModelKind:
    return ModelKind(name)


def _beta_from_args(args) -> ParamVector:
    try:
        return ParamVector(args.mu, args.sigma2, args.alpha_pi, args.B)
    except ParameterError as exc:
        raise CliError(f"invalid parameters: {exc}") from exc


def _levy_from_args(args, beta: ParamVector) -> LevySpec:
    explicit = [args.levy_rate, args.jump_shape, args.jump_rate]
    if any(v is not None for v in explicit):
        if any(v is None for v in explicit):
            raise CliError("--levy-rate, --jump-shape and --jump-rate must be given together")
        spec = LevySpec(args.levy_rate, args.jump_shape, args.jump_rate)
    else:
        spec = LevySpec.from_moments(beta.mu, beta.sigma2)
    mu, sigma2 = levy_moments(spec)
    for name, derived, wanted in (("mu", mu, beta.mu), ("sigma2", sigma2, beta.sigma2)):
        if abs(derived - wanted) > 1e-12 * max(abs(wanted), 1e-300):
            raise CliError(
                f"jump specification implies {name}={derived!r}, parameters say {wanted!r}"
            )
    return spec


def _conditions_from_args(args, kind: ModelKind) -> MomentConditionSet:
    if args.lags is not None:
        return MomentConditionSet(kind=kind, lags=args.lags, delta=args.delta)
    if args.m is not None:
        return MomentConditionSet(kind=kind, lags=tuple(range(1, args.m + 1)), delta=args.delta)
    return default_conditions(kind, delta=args.delta)


def _ensure_out_dir(args) -> str:
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def _manifest(args, extra: Dict) -> Dict:
    config = {
        key: (list(value) if isinstance(value, tuple) else value)
        for key, value in sorted(vars(args).items())
        if key != "func"
    }
    payload = {"version": __version__, "config": config}
    payload.update(extra)
    return payload


def _params_dict(beta: ParamVector) -> Dict[str, float]:
    return {"mu": beta.mu, "sigma2": beta.sigma2, "alpha_pi": beta.alpha_pi, "B": beta.B}


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    kind = _model_kind(args.model)
    beta = _beta_from_args(args)
    spec = _levy_from_args(args, beta)
    out_dir = _ensure_out_dir(args)
    schedule = ObservationSchedule(args.delta, args.n_obs)
    pi = PiSpec.from_params(beta)

    paths = []
    for p in range(args.n_paths):
        config = SimulationConfig(
            truncation_lead=args.truncation_lead,
            euler_substeps=args.euler_substeps,
            seed=args.seed + p,
        )
        sample = simulate_path(kind, spec, pi, schedule, config)
        filename = os.path.join(out_dir, f"path_{p:04d}.csv")
        sample.write_csv(filename)
        paths.append(os.path.basename(filename))
        logger.info("wrote %s (%d observations)", filename, schedule.n_obs)

    mu, sigma2 = levy_moments(spec)
    _write_json(
        os.path.join(out_dir, "manifest.json"),
        _manifest(args, {
            "command": "simulate",
            "derived_levy_moments": {"mu": mu, "sigma2": sigma2},
            "paths": paths,
        }),
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------

def _run_estimate(series: np.ndarray, kind: ModelKind,
                  conditions: MomentConditionSet, config: GmmConfig) -> GmmResult:
    data = demean(series) if kind is ModelKind.SV else series
    return two_step_gmm(data, kind, conditions=conditions, config=config)


def cmd_estimate(args) -> int:
    kind = _model_kind(args.model)
    _, series = read_series(args.input)
    conditions = _conditions_from_args(args, kind)
    config = GmmConfig(restart_seed=args.seed)
    out_dir = _ensure_out_dir(args)
    try:
        result = _run_estimate(series, kind, conditions, config)
    except (InitializationError, DataError, ParameterError) as exc:
        raise CliError(f"estimation failed: {exc}", code=EXIT_NONCONVERGED) from exc

    payload = result.to_dict(annualize_factor=args.annualize_factor)
    _write_json(os.path.join(out_dir, "estimate.json"), payload)
    _write_json(
        os.path.join(out_dir, "manifest.json"),
        _manifest(args, {"command": "estimate", "n_observations": int(series.size)}),
    )
    logger.info(
        "step-2 estimate %s (converged: %s)",
        _params_dict(result.step2_estimate), result.converged_step2,
    )
    return EXIT_OK if result.converged_step2 else EXIT_NONCONVERGED


# ---------------------------------------------------------------------------
# study
# ---------------------------------------------------------------------------

def _study_one_path(task: Dict) -> Dict:
    """One simulate-then-estimate replication; module-level for pickling."""
    beta_true = ParamVector(*task["beta"])
    kind = ModelKind(task["kind"])
    spec = LevySpec(*task["levy"])
    schedule = ObservationSchedule(task["delta"], task["n_obs"])
    path_seed = task["seed"]
    sim_config = SimulationConfig(
        truncation_lead=task["truncation_lead"],
        euler_substeps=task["euler_substeps"],
        seed=path_seed,
    )
    sample = simulate_path(kind, spec, PiSpec.from_params(beta_true), schedule, sim_config)

    conditions = MomentConditionSet(kind=kind, lags=tuple(task["lags"]), delta=task["delta"])
    config = GmmConfig(restart_seed=path_seed)
    # start in a log-scale neighbourhood of the truth, as in a recovery study
    start_rng = np.random.default_rng(np.random.SeedSequence(path_seed, spawn_key=(2,)))
    theta0 = transform(beta_true) + start_rng.uniform(
        -config.restart_radius, config.restart_radius, size=4
    )
    data = demean(sample.values) if kind is ModelKind.SV else sample.values
    result = two_step_gmm(data, kind, conditions=conditions, config=config,
                          start=untransform(theta0))
    record = {"path": task["index"], "seed": path_seed}
    record.update(result.to_dict())
    return record


def cmd_study(args) -> int:
    kind = _model_kind(args.model)
    beta = _beta_from_args(args)
    spec = _levy_from_args(args, beta)
    conditions = _conditions_from_args(args, kind)
    out_dir = _ensure_out_dir(args)
    workers = args.workers if args.workers is not None else int(
        os.environ.get(WORKERS_ENV, "1")
    )

    tasks = [
        {
            "index": p,
            "seed": args.seed + p,
            "kind": kind.value,
            "beta": (beta.mu, beta.sigma2, beta.alpha_pi, beta.B),
            "levy": (spec.rate, spec.jump_shape, spec.jump_rate),
            "delta": args.delta,
            "n_obs": args.n_obs,
            "lags": list(conditions.lags),
            "truncation_lead": args.truncation_lead,
            "euler_substeps": args.euler_substeps,
        }
        for p in range(args.n_paths)
    ]

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_study_one_path, tasks, chunksize=1))
    else:
        records = [_study_one_path(task) for task in tasks]
    records.sort(key=lambda rec: rec["path"])

    with open(os.path.join(out_dir, "results.jsonl"), "w", encoding="utf-8", newline="") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")

    header = ["path", "seed", "converged_step1", "converged_step2"]
    header += [f"step1_{name}" for name in PARAM_NAMES]
    header += [f"step2_{name}" for name in PARAM_NAMES]
    header += ["step1_objective", "step2_objective"]
    rows = []
    for rec in records:
        row = [rec["path"], rec["seed"], int(rec["converged_step1"]), int(rec["converged_step2"])]
        row += [_fmt(rec["step1_estimate"][name]) for name in PARAM_NAMES]
        row += [_fmt(rec["step2_estimate"][name]) for name in PARAM_NAMES]
        row += [_fmt(rec["step1_objective"]), _fmt(rec["step2_objective"])]
        rows.append(row)
    _write_csv(os.path.join(out_dir, "estimates.csv"), header, rows)

    converged = [rec for rec in records if rec["converged_step2"]]
    for name in PARAM_NAMES:
        values = np.array([rec["step2_estimate"][name] for rec in converged])
        if values.size >= 2:
            bins = histogram(values, HIST_BINS)
            _write_csv(
                os.path.join(out_dir, f"hist_{name}.csv"),
                ["left", "right", "count"],
                [[_fmt(lo), _fmt(hi), count] for lo, hi, count in bins],
            )
            qq = normal_qq_points(values)
            _write_csv(
                os.path.join(out_dir, f"qq_{name}.csv"),
                ["theoretical", "sample"],
                [[_fmt(a), _fmt(b)] for a, b in qq],
            )

    summary = {
        "command": "study",
        "model": kind.value,
        "n_paths": args.n_paths,
        "n_obs": args.n_obs,
        "true_params": _params_dict(beta),
        "converged_step1": sum(int(rec["converged_step1"]) for rec in records),
        "converged_step2": len(converged),
        "non_converged_paths": [rec["path"] for rec in records if not rec["converged_step2"]],
    }
    if converged:
        medians = {
            name: float(np.median([rec["step2_estimate"][name] for rec in converged]))
            for name in PARAM_NAMES
        }
        true_values = _params_dict(beta)
        summary["medians_step2"] = medians
        summary["median_abs_error_step2"] = {
            name: float(np.median([
                abs(rec["step2_estimate"][name] - true_values[name]) for rec in converged
            ]))
            for name in PARAM_NAMES
        }
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    _write_json(
        os.path.join(out_dir, "manifest.json"),
        _manifest(args, {"command": "study", "workers_resolved": workers}),
    )
    logger.info(
        "study complete: %d/%d paths converged in step 2",
        summary["converged_step2"], args.n_paths,
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def _model_curves(kind: ModelKind, beta: ParamVector, delta: float,
                  lags: Sequence[int]) -> Tuple[np.ndarray, float]:
    if kind is ModelKind.SUPOU:
        var = supou_var(beta)
        acov = np.array([supou_acov(beta, h * delta) for h in lags])
    elif kind is ModelKind.INTEGRATED:
        var = intsupou_var(beta, delta)
        acov = np.array([intsupou_acov(beta, delta, h) for h in lags])
    else:
        var = sv_sqret_var(beta, delta)
        acov = np.array([sv_sqret_acov(beta, delta, h) for h in lags])
    return acov, var


def cmd_fit(args) -> int:
    kind = _model_kind(args.model)
    dates, raw = read_series(args.input)
    if args.prices:
        if np.any(raw <= 0.0):
            raise CliError("price series must be strictly positive to take log returns")
        series = np.diff(np.log(raw))
        dates = dates[1:] if dates else None
    else:
        series = raw
    if series.size < 3:
        raise CliError("need at least 3 observations after differencing")
    fitted = demean(series) if kind is ModelKind.SV else series

    out_dir = _ensure_out_dir(args)
    rows = zip(dates, fitted) if dates else ((i + 1, v) for i, v in enumerate(fitted))
    _write_csv(
        os.path.join(out_dir, "series_used.csv"),
        ["date", "value"],
        [[label, _fmt(value)] for label, value in rows],
    )

    conditions = _conditions_from_args(args, kind)
    config = GmmConfig(restart_seed=args.seed)
    try:
        result = two_step_gmm(fitted, kind, conditions=conditions, config=config)
    except (InitializationError, DataError, ParameterError) as exc:
        raise CliError(f"fit failed: {exc}", code=EXIT_NONCONVERGED) from exc

    # empirical curves are for the estimation series (squared returns for SV)
    target = fitted * fitted if kind is ModelKind.SV else fitted
    lags = list(range(1, args.acf_lags + 1))
    emp_var = sample_var(target)
    emp_acov = np.array([sample_acov(target, h) for h in lags])
    for step, beta in (("step1", result.step1_estimate), ("step2", result.step2_estimate)):
        model_acov, model_var = _model_curves(kind, beta, args.delta, lags)
        _write_csv(
            os.path.join(out_dir, f"acf_{step}.csv"),
            ["lag", "empirical_acov", "model_acov", "empirical_acf", "model_acf"],
            [
                [h, _fmt(emp_acov[i]), _fmt(model_acov[i]),
                 _fmt(emp_acov[i] / emp_var), _fmt(model_acov[i] / model_var)]
                for i, h in enumerate(lags)
            ],
        )

    payload = result.to_dict(annualize_factor=args.annualize_factor)
    payload["acf_decay_exponent_step2"] = 1.0 - result.step2_estimate.alpha_pi
    _write_json(os.path.join(out_dir, "fit.json"), payload)
    _write_json(
        os.path.join(out_dir, "manifest.json"),
        _manifest(args, {"command": "fit", "n_observations": int(series.size)}),
    )
    logger.info(
        "fit complete: step-2 %s (converged: %s)",
        _params_dict(result.step2_estimate), result.converged_step2,
    )
    return EXIT_OK if result.converged_step2 else EXIT_NONCONVERGED


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_param_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mu", type=float, default=0.015)
    parser.add_argument("--sigma2", type=float, default=0.003)
    parser.add_argument("--alpha-pi", type=float, default=4.0, dest="alpha_pi")
    parser.add_argument("--B", type=float, default=-0.1)
    parser.add_argument("--levy-rate", type=float, default=None,
                        help="compound Poisson intensity (default: derived from mu, sigma2)")
    parser.add_argument("--jump-shape", type=float, default=None)
    parser.add_argument("--jump-rate", type=float, default=None)


def _add_sim_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n-obs", type=_positive_int, default=10_000)
    parser.add_argument("--truncation-lead", type=float, default=2000.0)
    parser.add_argument("--euler-substeps", type=_positive_int, default=20)


def _add_common_flags(parser: argparse.ArgumentParser, model_default: str) -> None:
    parser.add_argument("--model", choices=[k.value for k in ModelKind],
                        default=model_default)
    parser.add_argument("--delta", type=float, default=1.0)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", default="out")


def _add_estimation_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lags", type=_lag_list, default=None,
                        help="comma-separated lag set, e.g. 1,2,4,5")
    parser.add_argument("--m", type=_positive_int, default=None,
                        help="use lags 1..m (ignored when --lags is given)")
    parser.add_argument("--annualize-factor", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="supou",
        description="Simulate and estimate supOU, integrated supOU and supOU SV models.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    sim = commands.add_parser("simulate", help="write simulated path CSVs")
    _add_common_flags(sim, "supou")
    _add_param_flags(sim)
    _add_sim_flags(sim)
    sim.add_argument("--n-paths", type=_positive_int, default=1)
    sim.set_defaults(func=cmd_simulate)

    est = commands.add_parser("estimate", help="two-step GMM on one series")
    _add_common_flags(est, "supou")
    _add_estimation_flags(est)
    est.add_argument("--input", required=True)
    est.set_defaults(func=cmd_estimate)

    study = commands.add_parser("study", help="simulate-and-estimate recovery study")
    _add_common_flags(study, "supou")
    _add_param_flags(study)
    _add_sim_flags(study)
    _add_estimation_flags(study)
    study.add_argument("--n-paths", type=_positive_int, default=100)
    study.add_argument("--workers", type=_positive_int, default=None,
                       help=f"parallel workers (default: ${WORKERS_ENV} or 1)")
    study.set_defaults(func=cmd_study)

    fit = commands.add_parser("fit", help="fit empirical data and compare acfs")
    _add_common_flags(fit, "sv")
    _add_estimation_flags(fit)
    fit.add_argument("--input", required=True)
    mode = fit.add_mutually_exclusive_group(required=True)
    mode.add_argument("--prices", action="store_true",
                      help="input holds prices; log returns are taken first")
    mode.add_argument("--returns", action="store_true",
                      help="input already holds log returns")
    fit.add_argument("--acf-lags", type=_positive_int, default=20,
                     help="compare empirical and model acf up to this lag")
    fit.set_defaults(func=cmd_fit)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (DomainError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Two-step iterated GMM estimation for all three model kinds.

The moment function stacks the mean condition, the variance (for squared SV
returns: fourth moment) condition and one autocovariance condition per lag
in the lag set; its expectation under the stationary law vanishes exactly at
the true parameter.  Estimation minimizes the quadratic form g' W g of the
sample moments, first with the identity weighting, then with the inverse of
the estimated moment covariance from step one.  Optimization runs
unconstrained in log coordinates through a quasi-Newton (BFGS) minimizer
with central finite-difference gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import scipy.linalg

from .descriptive import sample_acf, sample_mean, sample_var
from .errors import (
    DataError,
    DomainError,
    InitializationError,
    ParameterError,
    SingularWeightingError,
    WeightingMatrixError,
)
from .moments import (
    _int_acov_units,
    _int_var_unit,
    intsupou_mean,
    intsupou_var,
    supou_acov,
    supou_mean,
    supou_var,
)
from .params import ModelKind, ParamVector

__all__ = [
    "MomentConditionSet",
    "GmmConfig",
    "GmmResult",
    "MinimizeResult",
    "default_conditions",
    "moment_function_supou",
    "moment_function_int",
    "moment_function_sv",
    "sample_moments",
    "objective",
    "estimate_weighting",
    "transform",
    "untransform",
    "minimize",
    "closed_form_init",
    "initial_estimate",
    "two_step_gmm",
]


@dataclass(frozen=True)
class MomentConditionSet:
    """Model kind, lag set and grid spacing defining the moment function.

    The moment dimension is d = 2 + len(lags); the window length is
    m + 1 with m = max(lags).
    """

    kind: ModelKind
    lags: Tuple[int, ...]
    delta: float = 1.0

    def __post_init__(self) -> None:
        lags = tuple(int(h) for h in self.lags)
        object.__setattr__(self, "lags", lags)
        if not lags or any(h < 1 for h in lags) or any(
            b <= a for a, b in zip(lags, lags[1:])
        ):
            raise DomainError(f"lags must be strictly increasing positive, got {self.lags}")
        if lags[-1] < 2:
            raise DomainError("the largest lag must be at least 2")
        if not (math.isfinite(self.delta) and self.delta > 0.0):
            raise DomainError(f"delta must be > 0, got {self.delta}")

    @property
    def m(self) -> int:
        return self.lags[-1]

    @property
    def d(self) -> int:
        return 2 + len(self.lags)


def default_conditions(kind: ModelKind, delta: float = 1.0) -> MomentConditionSet:
    """Default lag sets: {1,2,4,5} for supOU data, {1,...,5} otherwise."""
    lags = (1, 2, 4, 5) if kind is ModelKind.SUPOU else (1, 2, 3, 4, 5)
    return MomentConditionSet(kind=kind, lags=lags, delta=delta)


@dataclass(frozen=True)
class GmmConfig:
    """Optimizer and restart controls.

    objective_tolerance bounds the gradient norm relative to its value at
    the start; parameter_tolerance bounds the last step norm in the log
    coordinates.  restart_radius is the half-width of the uniform log-scale
    perturbation applied to restart points, seeded by restart_seed.
    max_iterations matches the effort a standard quasi-Newton routine
    spends by default; parameter_box is the half-width (log scale, around
    the starting anchor) of the compact parameter space searched, which the
    consistency theory assumes anyway.
    """

    max_iterations: int = 100
    gradient_step: float = 1e-6
    objective_tolerance: float = 1e-10
    parameter_tolerance: float = 1e-8
    restart_attempts: int = 5
    restart_radius: float = 0.5
    ridge_scale: float = 1e-10
    restart_seed: int = 0
    parameter_box: float = 6.0

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise DomainError("max_iterations must be >= 1")
        for name in ("gradient_step", "objective_tolerance", "parameter_tolerance",
                     "restart_radius", "parameter_box"):
            if getattr(self, name) <= 0.0:
                raise DomainError(f"{name} must be > 0")
        if self.restart_attempts < 0 or self.ridge_scale < 0.0:
            raise DomainError("restart_attempts and ridge_scale must be >= 0")


@dataclass(frozen=True)
class GmmResult:
    """Estimates and diagnostics of both GMM steps."""

    conditions: MomentConditionSet
    step1_estimate: ParamVector
    step2_estimate: ParamVector
    step1_objective: float
    step2_objective: float
    weighting: np.ndarray
    converged_step1: bool
    converged_step2: bool
    n_used: int
    restarts_used: int = 0

    def to_dict(self, annualize_factor: Optional[float] = None) -> Dict:
        """JSON-ready summary with a fixed field order."""
        from .params import annualize as _annualize

        def params_dict(beta: ParamVector) -> Dict[str, float]:
            return {
                "mu": beta.mu,
                "sigma2": beta.sigma2,
                "alpha_pi": beta.alpha_pi,
                "B": beta.B,
            }

        out: Dict = {
            "model": self.conditions.kind.value,
            "lags": list(self.conditions.lags),
            "delta": self.conditions.delta,
            "step1_estimate": params_dict(self.step1_estimate),
            "step2_estimate": params_dict(self.step2_estimate),
            "step1_objective": self.step1_objective,
            "step2_objective": self.step2_objective,
            "converged_step1": self.converged_step1,
            "converged_step2": self.converged_step2,
            "n_used": self.n_used,
            "restarts_used": self.restarts_used,
        }
        if annualize_factor is not None:
            out["annualize_factor"] = annualize_factor
            out["step2_estimate_annualized"] = params_dict(
                _annualize(self.step2_estimate, annualize_factor)
            )
        return out


# ---------------------------------------------------------------------------
# moment functions
# ---------------------------------------------------------------------------

def _estimation_series(data, kind: ModelKind) -> np.ndarray:
    x = np.ascontiguousarray(data, dtype=float)
    if x.ndim != 1:
        raise DataError("observations must form a 1-d series")
    if not np.all(np.isfinite(x)):
        raise DataError("observations contain non-finite values")
    return x * x if kind is ModelKind.SV else x


def _moment_targets(beta: ParamVector, conditions: MomentConditionSet) -> np.ndarray:
    """Model values of (E z, E z^2, E z_1 z_{1+h} ...) for the estimation series z."""
    kind, delta = conditions.kind, conditions.delta
    lags = np.asarray(conditions.lags, dtype=float)
    out = np.empty(conditions.d)
    if kind is ModelKind.SUPOU:
        mean = supou_mean(beta)
        var = supou_var(beta)
        out[0] = mean
        out[1] = mean * mean + var
        out[2:] = mean * mean + supou_acov(beta, lags * delta)
    else:
        mean = intsupou_mean(beta, delta)
        var = intsupou_var(beta, delta)
        out[0] = mean
        # squared SV returns have E(Y^4) = 3 E(V^2)
        out[1] = 3.0 * (var + mean * mean) if kind is ModelKind.SV else mean * mean + var
        out[2:] = mean * mean + beta.sigma2 * _int_acov_units(
            beta.alpha_pi, beta.B, delta, lags
        )
    return out


def _window_products(window: np.ndarray, conditions: MomentConditionSet) -> np.ndarray:
    if window.shape != (conditions.m + 1,):
        raise DataError(
            f"window must have length m+1 = {conditions.m + 1}, got {window.shape}"
        )
    head = [window[0], window[0] ** 2]
    tail = [window[0] * window[h] for h in conditions.lags]
    return np.array(head + tail)


def _moment_function(window, beta: ParamVector, conditions: MomentConditionSet,
                     kind: ModelKind) -> np.ndarray:
    if conditions.kind is not kind:
        raise DomainError(f"conditions are for kind {conditions.kind}, not {kind}")
    z = _estimation_series(window, kind)
    return _window_products(z, conditions) - _moment_targets(beta, conditions)


def moment_function_supou(window, beta: ParamVector,
                          conditions: MomentConditionSet) -> np.ndarray:
    """Moment vector of one supOU observation window (X_t, ..., X_{t+m})."""
    return _moment_function(window, beta, conditions, ModelKind.SUPOU)


def moment_function_int(window, beta: ParamVector,
                        conditions: MomentConditionSet) -> np.ndarray:
    """Moment vector of one integrated-process window (V_t, ..., V_{t+m})."""
    return _moment_function(window, beta, conditions, ModelKind.INTEGRATED)


def moment_function_sv(window, beta: ParamVector,
                       conditions: MomentConditionSet) -> np.ndarray:
    """Moment vector of one raw log-return window; squares are formed here."""
    return _moment_function(window, beta, conditions, ModelKind.SV)


def _data_moments(z: np.ndarray, conditions: MomentConditionSet) -> np.ndarray:
    """Sliding-window averages of the data products, using 1/(N-m)."""
    n = z.size - conditions.m
    if n < 1:
        raise DataError(
            f"need more than m = {conditions.m} observations, got {z.size}"
        )
    lead = z[:n]
    cols = [lead.mean(), (lead * lead).mean()]
    cols += [(lead * z[h:h + n]).mean() for h in conditions.lags]
    return np.array(cols)


def sample_moments(data, beta: ParamVector, conditions: MomentConditionSet) -> np.ndarray:
    """Average of the moment function over all N-m sliding windows."""
    z = _estimation_series(data, conditions.kind)
    return _data_moments(z, conditions) - _moment_targets(beta, conditions)


def _require_pd(W, d: int) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.shape != (d, d):
        raise WeightingMatrixError(f"weighting must be {d}x{d}, got {W.shape}")
    if not np.allclose(W, W.T, rtol=1e-9, atol=0.0):
        raise WeightingMatrixError("weighting matrix must be symmetric")
    try:
        np.linalg.cholesky(0.5 * (W + W.T))
    except np.linalg.LinAlgError as exc:
        raise WeightingMatrixError("weighting matrix must be positive definite") from exc
    return W


def objective(data, beta: ParamVector, W, conditions: MomentConditionSet) -> float:
    """GMM criterion g' W g for sample moments g and positive definite W."""
    W = _require_pd(W, conditions.d)
    g = sample_moments(data, beta, conditions)
    return float(g @ W @ g)


def estimate_weighting(data, beta1: ParamVector, conditions: MomentConditionSet,
                       ridge_scale: float = 1e-10) -> np.ndarray:
    """Inverse of the (ridge-regularized) moment covariance at the step-1 estimate.

    S = (1/n) sum_t f(window_t, beta1) f(window_t, beta1)'.  A trace-scaled
    ridge keeps S invertible in the near-singular cases that show up for
    large lag sets; if S stays non-invertible anyway, SingularWeightingError
    is raised.
    """
    z = _estimation_series(data, conditions.kind)
    n = z.size - conditions.m
    if n < conditions.d:
        raise DataError(f"need at least d = {conditions.d} windows, got {n}")
    lead = z[:n]
    columns = [lead, lead * lead] + [lead * z[h:h + n] for h in conditions.lags]
    F = np.column_stack(columns) - _moment_targets(beta1, conditions)
    S = (F.T @ F) / n
    if ridge_scale > 0.0:
        S = S + (ridge_scale * np.trace(S) / conditions.d) * np.eye(conditions.d)
    S = 0.5 * (S + S.T)
    try:
        chol = scipy.linalg.cho_factor(S)
        W = scipy.linalg.cho_solve(chol, np.eye(conditions.d))
    except scipy.linalg.LinAlgError as exc:
        raise SingularWeightingError(
            "moment covariance is singular beyond ridge regularization"
        ) from exc
    if not np.all(np.isfinite(W)):
        raise SingularWeightingError("moment covariance inversion produced non-finite values")
    return 0.5 * (W + W.T)


# ---------------------------------------------------------------------------
# unconstrained reparameterization
# ---------------------------------------------------------------------------

def transform(beta: ParamVector) -> np.ndarray:
    """Map to unconstrained coordinates (log mu, log sigma2, log(alpha-1), log(-B))."""
    if beta.mu <= 0.0:
        raise DomainError("transform requires mu > 0")
    return np.array([
        math.log(beta.mu),
        math.log(beta.sigma2),
        math.log(beta.alpha_pi - 1.0),
        math.log(-beta.B),
    ])


def untransform(theta) -> ParamVector:
    """Inverse of `transform`; every finite theta yields a valid ParamVector."""
    t = np.asarray(theta, dtype=float)
    if t.shape != (4,):
        raise DomainError(f"theta must have shape (4,), got {t.shape}")
    return ParamVector(
        mu=math.exp(t[0]),
        sigma2=math.exp(t[1]),
        alpha_pi=1.0 + math.exp(t[2]),
        B=-math.exp(t[3]),
    )


# ---------------------------------------------------------------------------
# quasi-Newton minimizer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MinimizeResult:
    theta: np.ndarray
    value: float
    converged: bool
    iterations: int
    evaluations: int


def _fd_gradient(fn: Callable, theta: np.ndarray, f0: float, step: float) -> np.ndarray:
    grad = np.empty(theta.size)
    for j in range(theta.size):
        h = step * max(1.0, abs(theta[j]))
        up = theta.copy()
        dn = theta.copy()
        up[j] += h
        dn[j] -= h
        f_up, f_dn = fn(up), fn(dn)
        if math.isfinite(f_up) and math.isfinite(f_dn):
            grad[j] = (f_up - f_dn) / (2.0 * h)
        elif math.isfinite(f_up):
            grad[j] = (f_up - f0) / h
        elif math.isfinite(f_dn):
            grad[j] = (f0 - f_dn) / h
        else:
            grad[j] = np.nan
    return grad


def minimize(objective_fn: Callable, theta0, config: GmmConfig) -> MinimizeResult:
    """BFGS with central finite differences and Armijo backtracking.

    Converged means both the gradient norm (relative to its starting
    magnitude, with an absolute floor of one) and the last step norm fell
    below the configured tolerances within max_iterations.  The absolute
    floor is deliberate: on badly scaled criteria whose dominant component
    dwarfs the rest, the run stops once that component is matched, which is
    how a standard quasi-Newton routine with default tolerances behaves.
    Non-finite objective values during the line search shrink the step; if
    no finite descent step exists at all, the routine stops with the
    convergence flag reflecting the gradient test.  The returned value
    never exceeds the objective at theta0.
    """
    theta = np.asarray(theta0, dtype=float).copy()
    f = float(objective_fn(theta))
    if not math.isfinite(f):
        raise DomainError("objective must be finite at the starting point")
    evals = 1
    dim = theta.size

    grad = _fd_gradient(objective_fn, theta, f, config.gradient_step)
    evals += 2 * dim
    if not np.all(np.isfinite(grad)):
        return MinimizeResult(theta, f, False, 0, evals)

    grad_tol = config.objective_tolerance * max(1.0, float(np.abs(grad).max()))
    step_norm = 0.0
    H = np.eye(dim)
    iterations = 0
    reset_used = False
    converged = bool(np.abs(grad).max() <= grad_tol)

    while not converged and iterations < config.max_iterations:
        direction = -H @ grad
        descent = float(grad @ direction)
        if not np.all(np.isfinite(direction)) or descent >= 0.0:
            H = np.eye(dim)
            direction = -grad
            descent = float(grad @ direction)

        alpha = 1.0
        accepted = False
        for _ in range(60):
            candidate = theta + alpha * direction
            f_new = float(objective_fn(candidate))
            evals += 1
            if math.isfinite(f_new) and f_new <= f + 1e-4 * alpha * descent:
                accepted = True
                break
            alpha *= 0.5

        if not accepted:
            if not reset_used:
                # one steepest-descent retry before declaring the point final
                H = np.eye(dim)
                reset_used = True
                iterations += 1
                continue
            converged = bool(np.abs(grad).max() <= grad_tol)
            break

        reset_used = False
        step = alpha * direction
        theta_new = theta + step
        grad_new = _fd_gradient(objective_fn, theta_new, f_new, config.gradient_step)
        evals += 2 * dim
        theta, f = theta_new, f_new
        iterations += 1
        if not np.all(np.isfinite(grad_new)):
            converged = False
            break

        delta_grad = grad_new - grad
        curvature = float(step @ delta_grad)
        if curvature > 1e-10 * np.linalg.norm(step) * np.linalg.norm(delta_grad):
            rho = 1.0 / curvature
            outer = np.outer(step, delta_grad)
            eye = np.eye(dim)
            H = (eye - rho * outer) @ H @ (eye - rho * outer.T) + rho * np.outer(step, step)
        grad = grad_new
        step_norm = float(np.abs(step).max())
        converged = bool(
            np.abs(grad).max() <= grad_tol and step_norm <= config.parameter_tolerance
        )

    return MinimizeResult(theta, f, converged, iterations, evals)


# ---------------------------------------------------------------------------
# closed-form initializer
# ---------------------------------------------------------------------------

def closed_form_init(sample_mean_value: float, sample_var_value: float,
                     rho_h1: float, rho_h2: float,
                     h1: float, h2: float) -> ParamVector:
    """Invert (mean, variance, rho(h1), rho(h2)) of a supOU process exactly.

    With c = log rho(h1) / log rho(h2), B is the unique negative root of
    (1 - B h2)^c + B h1 - 1, isolated by bisection; then
    alpha_pi = 1 - log rho(h1) / log(1 - B h1) and mu, sigma2 follow from
    the mean and variance equations.  Exact model moments are recovered to
    bisection tolerance.
    """
    if not (0.0 < h1 < h2):
        raise InitializationError(f"need 0 < h1 < h2, got {h1}, {h2}")
    if not (0.0 < rho_h2 < rho_h1 < 1.0):
        raise InitializationError(
            f"need 0 < rho(h2) < rho(h1) < 1, got {rho_h1}, {rho_h2}"
        )
    if sample_mean_value <= 0.0 or sample_var_value <= 0.0:
        raise InitializationError("mean and variance must be positive")

    c = math.log(rho_h1) / math.log(rho_h2)
    if c <= h1 / h2:
        raise InitializationError(
            "autocorrelation pair is not consistent with any (alpha_pi, B)"
        )

    def excess(b: float) -> float:
        return (1.0 - b * h2) ** c + b * h1 - 1.0

    hi = -1e-12
    if excess(hi) <= 0.0:
        raise InitializationError("no sign change near zero; degenerate inputs")
    lo = -1.0
    while excess(lo) > 0.0:
        lo *= 2.0
        if lo < -1e12:
            raise InitializationError("root bracketing failed")

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-16 * abs(mid):
            break
    B = 0.5 * (lo + hi)

    alpha_pi = 1.0 - math.log(rho_h1) / math.log1p(-B * h1)
    if alpha_pi <= 1.0:
        raise InitializationError(f"recovered alpha_pi = {alpha_pi} is not > 1")
    mu = -sample_mean_value * B * (alpha_pi - 1.0)
    sigma2 = -2.0 * sample_var_value * B * (alpha_pi - 1.0)
    return ParamVector(mu=mu, sigma2=sigma2, alpha_pi=alpha_pi, B=B)


def _rescale_for_kind(alpha_pi: float, B: float, mean: float, var: float,
                      kind: ModelKind, delta: float) -> ParamVector:
    # mu, sigma2 matching the kind's own mean/variance equations at (alpha, B)
    if kind is ModelKind.SUPOU:
        return ParamVector(
            mu=-mean * B * (alpha_pi - 1.0),
            sigma2=-2.0 * var * B * (alpha_pi - 1.0),
            alpha_pi=alpha_pi,
            B=B,
        )
    mu = -mean * B * (alpha_pi - 1.0) / delta
    unit_var = _int_var_unit(alpha_pi, B, delta)
    if kind is ModelKind.SV:
        var_v = (var - 2.0 * mean * mean) / 3.0
        if var_v <= 0.0:
            var_v = var / 3.0
        sigma2 = var_v / unit_var
    else:
        sigma2 = var / unit_var
    return ParamVector(mu=mu, sigma2=sigma2, alpha_pi=alpha_pi, B=B)


def _require_dispersion(mean: float, var: float) -> None:
    # a numerically constant series has variance at rounding level only
    if not (mean > 0.0 and var > (1e-12 * max(abs(mean), 1e-300)) ** 2):
        raise InitializationError("degenerate series: nonpositive mean or no dispersion")


def _moment_matched_start(data, conditions: MomentConditionSet) -> ParamVector:
    """Crude default start: fixed acf shape, mean/variance matched to the data."""
    z = _estimation_series(data, conditions.kind)
    mean, var = sample_mean(z), sample_var(z)
    _require_dispersion(mean, var)
    return _rescale_for_kind(4.0, -0.1 / conditions.delta, mean, var,
                             conditions.kind, conditions.delta)


def initial_estimate(data, conditions: MomentConditionSet) -> ParamVector:
    """Data-driven starting point from empirical moments.

    Applies the closed-form inversion to the empirical acf shape at lags 1
    and 2 (of squared returns for the SV kind), then rescales mu and sigma2
    through the kind's own mean/variance equations.  Falls back to a
    fixed-shape inversion at (alpha_pi=4, B=-0.1/delta) when the empirical
    acf is unusable; raises InitializationError when even that fails
    (degenerate data).
    """
    z = _estimation_series(data, conditions.kind)
    if z.size < 3:
        raise InitializationError("need at least 3 observations to initialize")
    mean, var = sample_mean(z), sample_var(z)
    _require_dispersion(mean, var)
    delta = conditions.delta
    try:
        rho1, rho2 = sample_acf(z, 1), sample_acf(z, 2)
        base = closed_form_init(mean, var, rho1, rho2, delta, 2.0 * delta)
        if conditions.kind is ModelKind.SUPOU:
            return base
        return _rescale_for_kind(base.alpha_pi, base.B, mean, var,
                                 conditions.kind, delta)
    except (InitializationError, ParameterError, DataError):
        return _moment_matched_start(data, conditions)


# ---------------------------------------------------------------------------
# two-step procedure
# ---------------------------------------------------------------------------

def _theta_objective(base: np.ndarray, W: np.ndarray,
                     conditions: MomentConditionSet,
                     box_center: Optional[np.ndarray] = None,
                     box_radius: float = np.inf) -> Callable:
    def fn(theta: np.ndarray) -> float:
        if box_center is not None and np.abs(theta - box_center).max() > box_radius:
            return np.inf
        try:
            beta = untransform(theta)
            g = base - _moment_targets(beta, conditions)
        except (ParameterError, DomainError, OverflowError, ZeroDivisionError):
            return np.inf
        if not np.all(np.isfinite(g)):
            return np.inf
        return float(g @ W @ g)

    return fn


def two_step_gmm(
    data,
    kind: ModelKind,
    conditions: Optional[MomentConditionSet] = None,
    config: GmmConfig = GmmConfig(),
    start: Optional[ParamVector] = None,
) -> GmmResult:
    """Two-step iterated GMM: identity weighting, then inverse moment covariance.

    When no start is given, step 1 begins from a crude point that matches
    only the sample mean and variance at a fixed acf shape; restarts use
    the closed-form initializer applied to the empirical moments, perturbed
    uniformly on the log scale (deterministically in restart_seed).  When a
    start is given (e.g. a recovery study seeding near the truth), it
    replaces both.  Step 2 starts from the step-1 estimate when that step
    converged to a plausible point; otherwise, and after any step-2
    failure, it falls back to the restart anchor (up to restart_attempts
    perturbations).  A result is always returned; failure to converge is
    reported through the flags, never silently.

    For the SV kind the data are raw log returns; demeaning them first is
    the caller's responsibility.
    """
    if conditions is None:
        conditions = default_conditions(kind)
    elif conditions.kind is not kind:
        raise DomainError(f"conditions are for kind {conditions.kind}, not {kind}")

    z = _estimation_series(data, kind)
    base = _data_moments(z, conditions)
    n_used = z.size - conditions.m

    # the compact parameter space is a log-scale box around the step-1 start;
    # restarts perturb the data-driven initializer when it falls inside it
    if start is not None:
        theta_center = transform(start)
        theta_anchor = theta_center
    else:
        theta_center = transform(_moment_matched_start(data, conditions))
        theta_anchor = transform(initial_estimate(data, conditions))
        if np.abs(theta_anchor - theta_center).max() > config.parameter_box:
            theta_anchor = theta_center
    rng = np.random.default_rng(np.random.SeedSequence(config.restart_seed))

    def perturbed() -> np.ndarray:
        return theta_anchor + rng.uniform(
            -config.restart_radius, config.restart_radius, size=4
        )

    # step 1: identity weighting
    identity = np.eye(conditions.d)
    obj1 = _theta_objective(base, identity, conditions,
                            box_center=theta_center, box_radius=config.parameter_box)
    theta_start = theta_center
    attempts = 0
    while not math.isfinite(obj1(theta_start)):
        if attempts >= config.restart_attempts:
            raise DataError("GMM objective is not finite at any candidate start")
        theta_start = perturbed()
        attempts += 1
    res1 = minimize(obj1, theta_start, config)
    beta1 = untransform(res1.theta)

    # step 2: inverse estimated moment covariance
    weighting = estimate_weighting(data, beta1, conditions, config.ridge_scale)
    obj2 = _theta_objective(base, weighting, conditions,
                            box_center=theta_center, box_radius=config.parameter_box)

    step1_usable = res1.converged and bool(
        np.abs(res1.theta - theta_center).max() <= config.parameter_box
    )
    candidates = [res1.theta if step1_usable else theta_anchor]
    candidates += [perturbed() for _ in range(config.restart_attempts)]

    # canonical second step starts from the first candidate; restarts only
    # replace it when the optimization fails to converge properly
    best: Optional[MinimizeResult] = None
    restarts_used = 0
    for i, candidate in enumerate(candidates):
        if not math.isfinite(obj2(candidate)):
            continue
        res = minimize(obj2, candidate, config)
        if best is None:
            best = res
            restarts_used = i
        if res.converged:
            best = res
            restarts_used = i
            break
    if best is None:
        raise DataError("step-2 objective is not finite at any candidate start")

    return GmmResult(
        conditions=conditions,
        step1_estimate=beta1,
        step2_estimate=untransform(best.theta),
        step1_objective=res1.value,
        step2_objective=best.value,
        weighting=weighting,
        converged_step1=res1.converged,
        converged_step2=best.converged,
        n_used=n_used,
        restarts_used=restarts_used,
    )

"""Exact simulation of supOU paths from the jump-sum representation.

A compound-Poisson driven supOU process is a sum of exponentially decaying
jump contributions

    X(t) = sum over jumps i with tau_i <= t of  U_i * exp(A_i (t - tau_i)),

each jump carrying its own mean-reversion rate A_i < 0 drawn from the
mirrored-Gamma law.  Realizing the jump triples (tau_i, U_i, A_i) on a
window that starts well before the observation horizon makes X, its
interval integrals and the Euler-discretized SV log returns all computable
from the same stream: X and the integrals in closed form per jump (no time
discretization), the log returns with exact volatility values at the Euler
substeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import DomainError, ParameterError
from .params import ModelKind, ObservationSchedule, PiSpec

__all__ = [
    "LevySpec",
    "JumpStream",
    "SimulationConfig",
    "PathSample",
    "levy_moments",
    "sample_jump_stream",
    "evaluate_supou",
    "integrate_supou",
    "simulate_sv_logreturns",
    "simulate_path",
]

# exp(x) underflows to exactly 0.0 in float64 below roughly -745; dropping a
# jump once its exponent is under -LOG_CUTOFF therefore reproduces the full
# sum value-for-value.
LOG_CUTOFF = 750.0

_TIME_CHUNK = 2048

JumpSampler = Callable[[np.random.Generator, int], np.ndarray]


@dataclass(frozen=True)
class LevySpec:
    """Compound Poisson specification: arrival rate and Gamma jump law.

    The jump law uses the rate parameterization, so jumps have mean
    jump_shape / jump_rate.  rate = 0 is allowed and produces an empty
    stream (a degenerate, identically-zero process).
    """

    rate: float
    jump_shape: float
    jump_rate: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.rate) and self.rate >= 0.0):
            raise ParameterError(f"rate must be >= 0, got {self.rate}")
        if not (math.isfinite(self.jump_shape) and self.jump_shape > 0.0):
            raise ParameterError(f"jump_shape must be > 0, got {self.jump_shape}")
        if not (math.isfinite(self.jump_rate) and self.jump_rate > 0.0):
            raise ParameterError(f"jump_rate must be > 0, got {self.jump_rate}")

    @classmethod
    def from_moments(cls, mu: float, sigma2: float, jump_shape: float = 3.0) -> "LevySpec":
        """Spec whose underlying Levy process has the given mean and variance rate.

        With the Gamma jump shape fixed, rate and jump_rate are determined:
        mu = rate * shape / jump_rate and sigma2 = rate * shape (shape+1) / jump_rate^2.
        """
        if mu <= 0.0 or sigma2 <= 0.0:
            raise ParameterError("mu and sigma2 must be > 0 to derive a jump spec")
        jump_rate = (jump_shape + 1.0) * mu / sigma2
        rate = mu * jump_rate / jump_shape
        return cls(rate=rate, jump_shape=jump_shape, jump_rate=jump_rate)


def levy_moments(spec: LevySpec) -> Tuple[float, float]:
    """(mu, sigma2) of the underlying Levy process at unit time.

    mu = rate * E[U], sigma2 = rate * E[U^2] for the Gamma jump law.
    """
    mean_jump = spec.jump_shape / spec.jump_rate
    second_moment = spec.jump_shape * (spec.jump_shape + 1.0) / spec.jump_rate**2
    return spec.rate * mean_jump, spec.rate * second_moment


@dataclass(frozen=True)
class SimulationConfig:
    """Simulation controls: burn-in window, Euler substeps and master seed."""

    truncation_lead: float = 2000.0
    euler_substeps: int = 20
    seed: int = 0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.truncation_lead) and self.truncation_lead > 0.0):
            raise DomainError(f"truncation_lead must be > 0, got {self.truncation_lead}")
        if self.euler_substeps < 1:
            raise DomainError(f"euler_substeps must be >= 1, got {self.euler_substeps}")


@dataclass(frozen=True)
class JumpStream:
    """Realized jump triples (tau_i, U_i, A_i) on [window_start, window_end]."""

    times: np.ndarray
    sizes: np.ndarray
    rates: np.ndarray
    window_start: float
    window_end: float

    def __post_init__(self) -> None:
        t, u, a = self.times, self.sizes, self.rates
        if not (t.shape == u.shape == a.shape) or t.ndim != 1:
            raise DomainError("times, sizes and rates must be 1-d arrays of equal length")
        if t.size:
            if np.any(np.diff(t) <= 0.0):
                raise DomainError("jump times must be strictly increasing")
            if t[0] < self.window_start or t[-1] > self.window_end:
                raise DomainError("jump times must lie inside the window")
            if np.any(u <= 0.0):
                raise DomainError("jump sizes must be positive")
            if np.any(a >= 0.0):
                raise DomainError("mean-reversion rates must be negative")

    def __len__(self) -> int:
        return int(self.times.size)

    def truncated(self, new_start: float) -> "JumpStream":
        """Drop all jumps before new_start (tightens the burn-in window)."""
        keep = self.times >= new_start
        return JumpStream(
            times=self.times[keep],
            sizes=self.sizes[keep],
            rates=self.rates[keep],
            window_start=new_start,
            window_end=self.window_end,
        )


@dataclass(frozen=True)
class PathSample:
    """Observations on an equidistant grid."""

    schedule: ObservationSchedule
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != (self.schedule.n_obs,):
            raise DomainError(
                f"values shape {self.values.shape} does not match n_obs={self.schedule.n_obs}"
            )

    def write_csv(self, path) -> None:
        """Write `t,value` rows with full float64 precision."""
        times = self.schedule.times()
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("t,value\r\n")
            for t, v in zip(times, self.values):
                fh.write(f"{t:.17g},{v:.17g}\r\n")


def _jump_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))


def _brownian_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))


def sample_jump_stream(
    spec: LevySpec,
    pi: PiSpec,
    window: Tuple[float, float],
    seed: int,
    jump_sampler: Optional[JumpSampler] = None,
) -> JumpStream:
    """Draw a compound-Poisson jump stream on the window.

    Arrivals are homogeneous Poisson with intensity spec.rate (exponential
    inter-arrival gaps), jump sizes come from the Gamma law of `spec` unless
    `jump_sampler(rng, n)` overrides them (the estimator is semiparametric,
    so any positive law with the right first two moments is admissible), and
    the mean-reversion rates are B * Gamma(alpha_pi, 1) draws.

    Deterministic given (spec, pi, window, seed).
    """
    start, end = float(window[0]), float(window[1])
    if not start < end:
        raise DomainError(f"window start must precede end, got {window}")

    rng = _jump_rng(seed)
    span = end - start
    if spec.rate == 0.0:
        empty = np.empty(0)
        return JumpStream(empty, empty.copy(), empty.copy(), start, end)

    expected = spec.rate * span
    block = int(expected + 6.0 * math.sqrt(expected + 1.0)) + 64
    arrivals = np.cumsum(rng.exponential(1.0 / spec.rate, size=block))
    while arrivals[-1] < span:
        extra = np.cumsum(rng.exponential(1.0 / spec.rate, size=block))
        arrivals = np.concatenate([arrivals, arrivals[-1] + extra])
    arrivals = arrivals[arrivals <= span]

    n = arrivals.size
    if jump_sampler is not None:
        sizes = np.asarray(jump_sampler(rng, n), dtype=float)
    else:
        sizes = rng.gamma(spec.jump_shape, 1.0 / spec.jump_rate, size=n)
    rates = pi.B * rng.gamma(pi.alpha_pi, 1.0, size=n)
    return JumpStream(start + arrivals, sizes, rates, start, end)


def _check_times_in_window(t: np.ndarray, jumps: JumpStream) -> None:
    if t.size == 0:
        return
    if np.any(np.diff(t) < 0.0):
        raise DomainError("evaluation times must be nondecreasing")
    if t[0] < jumps.window_start or t[-1] > jumps.window_end:
        raise DomainError(
            f"times [{t[0]}, {t[-1]}] fall outside the jump window "
            f"[{jumps.window_start}, {jumps.window_end}]"
        )


def evaluate_supou(jumps: JumpStream, times) -> np.ndarray:
    """Evaluate X(t) = sum of U_i exp(A_i (t - tau_i)) over jumps with tau_i <= t.

    Exact for the realized stream: the only terms skipped are those whose
    exponentials underflow to 0.0 in float64 anyway.  Times must be
    nondecreasing and inside the stream window.
    """
    t = np.ascontiguousarray(times, dtype=float)
    _check_times_in_window(t, jumps)
    out = np.zeros(t.size)
    if len(jumps) == 0 or t.size == 0:
        return out

    tau, sizes, rates = jumps.times, jumps.sizes, jumps.rates
    expiry = tau + LOG_CUTOFF / (-rates)
    for i0 in range(0, t.size, _TIME_CHUNK):
        tc = t[i0:i0 + _TIME_CHUNK]
        hi = int(np.searchsorted(tau, tc[-1], side="right"))
        if hi == 0:
            continue
        live = expiry[:hi] >= tc[0]
        if not live.any():
            continue
        tau_l, size_l, rate_l = tau[:hi][live], sizes[:hi][live], rates[:hi][live]
        dt = tc[:, None] - tau_l[None, :]
        exponent = np.where(dt >= 0.0, rate_l[None, :] * dt, -np.inf)
        out[i0:i0 + tc.size] = np.exp(exponent) @ size_l
    return out


def integrate_supou(jumps: JumpStream, schedule: ObservationSchedule) -> PathSample:
    """Integrals V_n of X over ((n-1)*delta, n*delta], in closed form per jump.

    A jump at tau contributes (U/A) (exp(A (b - tau)) - exp(A (max(a, tau) - tau)))
    to the integral over [a, b] when tau < b, and nothing otherwise; no
    discretization is involved.
    """
    edges = schedule.delta * np.arange(schedule.n_obs + 1)
    if edges[0] < jumps.window_start or edges[-1] > jumps.window_end:
        raise DomainError("integration intervals fall outside the jump window")
    values = np.zeros(schedule.n_obs)
    if len(jumps) == 0:
        return PathSample(schedule, values)

    tau, sizes, rates = jumps.times, jumps.sizes, jumps.rates
    expiry = tau + LOG_CUTOFF / (-rates)
    weight = sizes / rates
    lo_edges, hi_edges = edges[:-1], edges[1:]
    for i0 in range(0, schedule.n_obs, _TIME_CHUNK):
        a = lo_edges[i0:i0 + _TIME_CHUNK]
        b = hi_edges[i0:i0 + _TIME_CHUNK]
        hi = int(np.searchsorted(tau, b[-1], side="right"))
        if hi == 0:
            continue
        live = expiry[:hi] >= a[0]
        if not live.any():
            continue
        tau_l, rate_l, w_l = tau[:hi][live], rates[:hi][live], weight[:hi][live]
        started = tau_l[None, :] < b[:, None]
        lower = np.maximum(a[:, None], tau_l[None, :])
        exp_hi = np.where(started, rate_l[None, :] * (b[:, None] - tau_l[None, :]), -np.inf)
        exp_lo = np.where(started, rate_l[None, :] * (lower - tau_l[None, :]), -np.inf)
        values[i0:i0 + a.size] = (np.exp(exp_hi) - np.exp(exp_lo)) @ w_l
    return PathSample(schedule, values)


def simulate_sv_logreturns(
    jumps: JumpStream,
    schedule: ObservationSchedule,
    config: SimulationConfig,
) -> PathSample:
    """Euler-discretized log returns with the supOU process as volatility.

    The volatility is evaluated exactly (from the jump stream) at the left
    endpoint of each of the euler_substeps subintervals per observation
    interval; the Brownian increments come from a substream of config.seed
    that is independent of the jump draws.
    """
    n_sub = schedule.n_obs * config.euler_substeps
    dt = schedule.delta / config.euler_substeps
    sub_times = dt * np.arange(n_sub)
    vol = evaluate_supou(jumps, sub_times)
    shocks = _brownian_rng(config.seed).standard_normal(n_sub)
    increments = np.sqrt(vol) * math.sqrt(dt) * shocks
    returns = increments.reshape(schedule.n_obs, config.euler_substeps).sum(axis=1)
    return PathSample(schedule, returns)


def simulate_path(
    kind: ModelKind,
    spec: LevySpec,
    pi: PiSpec,
    schedule: ObservationSchedule,
    config: SimulationConfig,
    jump_sampler: Optional[JumpSampler] = None,
) -> PathSample:
    """Sample a jump stream on [-truncation_lead, horizon] and observe `kind` on it."""
    window = (-config.truncation_lead, schedule.horizon)
    jumps = sample_jump_stream(spec, pi, window, config.seed, jump_sampler=jump_sampler)
    if kind is ModelKind.SUPOU:
        return PathSample(schedule, evaluate_supou(jumps, schedule.times()))
    if kind is ModelKind.INTEGRATED:
        return integrate_supou(jumps, schedule)
    if kind is ModelKind.SV:
        return simulate_sv_logreturns(jumps, schedule, config)
    raise DomainError(f"unknown model kind {kind!r}")

"""Shiryaev statistic under a geometric change-point prior, in the log domain.

One recursion serves the centralized, isolated and distributed tests; the
mode only decides which sensors' log-likelihood ratios make up ``llr_sum``
at each step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import IdentityViolation, NonFinite, OutOfRange

MODES = ("centralized", "isolated", "distributed")
IDENTITY_TOL = 1e-6


@dataclass(frozen=True)
class DetectorMode:
    kind: str
    sensor: Optional[int] = None

    def __post_init__(self):
        if self.kind not in MODES:
            raise ValueError(f"unknown detector mode {self.kind!r}")
        if self.kind == "centralized" and self.sensor is not None:
            raise ValueError("centralized mode has no sensor")
        if self.kind != "centralized" and self.sensor is None:
            raise ValueError(f"{self.kind} mode needs a sensor index")

    def __str__(self):
        return self.kind if self.sensor is None else f"{self.kind}[{self.sensor}]"


@dataclass(frozen=True)
class DetectorConfig:
    rho: float
    threshold: float
    mode: DetectorMode = DetectorMode("centralized")

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise OutOfRange(f"rho must lie in (0, 1), got {self.rho!r}")
        if not self.threshold >= 0:
            raise OutOfRange(f"threshold must be >= 0, got {self.threshold!r}")

    @property
    def log_threshold(self) -> float:
        return math.log(self.threshold) if self.threshold > 0 else -math.inf


@dataclass(frozen=True)
class DetectorState:
    log_lambda: float = -math.inf
    step: int = 0

    @property
    def posterior(self) -> float:
        """Posterior probability that the change has already happened."""
        if self.log_lambda == -math.inf:
            return 0.0
        # p = L / (1 + L) = sigmoid(log L)
        return float(np.exp(-np.logaddexp(0.0, -self.log_lambda)))


def initial_state() -> DetectorState:
    return DetectorState()


def step(state: DetectorState, config: DetectorConfig, llr_sum: float) -> DetectorState:
    if not math.isfinite(llr_sum):
        raise NonFinite(f"llr_sum must be finite, got {llr_sum!r}")
    log_rho = math.log(config.rho)
    new = -math.log1p(-config.rho) + float(np.logaddexp(state.log_lambda, log_rho)) + llr_sum
    return DetectorState(new, state.step + 1)


def has_stopped(state: DetectorState, config: DetectorConfig) -> bool:
    return state.log_lambda >= config.log_threshold


def threshold_from_pfa(alpha: float) -> float:
    """Threshold that guarantees a false-alarm probability of at most ``alpha``."""
    if not 0 < alpha < 1:
        raise OutOfRange(f"target false-alarm probability must lie in (0, 1), got {alpha!r}")
    return (1 - alpha) / alpha


def run_statistic(llrs: Iterable[float], rho: float) -> list[float]:
    """log-statistic after each step for a sequence of per-step llr sums."""
    cfg = DetectorConfig(rho, 1.0)
    state = initial_state()
    out = []
    for x in llrs:
        state = step(state, cfg, float(x))
        out.append(state.log_lambda)
    return out


def stopping_time(llrs: Iterable[float], rho: float, threshold: float) -> Optional[int]:
    cfg = DetectorConfig(rho, threshold)
    state = initial_state()
    for x in llrs:
        state = step(state, cfg, float(x))
        if has_stopped(state, cfg):
            return state.step
    return None


@dataclass(frozen=True)
class Decomposition:
    """Random-walk plus nonlinear-term split of the log-statistic at step n:
    ``log L_n = log rho + w + l`` with ``w = z + n |log(1 - rho)|``."""

    n: int
    z: float
    w: float
    l: float
    log_lambda: float


def decompose(llrs: Iterable[float], rho: float, tol: float = IDENTITY_TOL) -> list[Decomposition]:
    """Split the statistic into the cumulative llr walk and the nonlinear term

        l_n = log(1 + sum_{k=1}^{n-1} (1-rho)^k exp(-z_k)),

    maintained as a running log-sum-exp, and check the reconstruction against
    the recursion at every step."""
    if not 0 < rho < 1:
        raise OutOfRange(f"rho must lie in (0, 1), got {rho!r}")
    cfg = DetectorConfig(rho, 1.0)
    log_rho = math.log(rho)
    drift = -math.log1p(-rho)
    state = initial_state()
    z = 0.0
    log_sum = 0.0  # log of 1 + sum_{k<n} (1-rho)^k exp(-z_k)
    out = []
    for n, x in enumerate(llrs, start=1):
        x = float(x)
        if n > 1:
            log_sum = float(np.logaddexp(log_sum, -(n - 1) * drift - z))
        z += x
        state = step(state, cfg, x)
        w = z + n * drift
        rebuilt = log_rho + w + log_sum
        if abs(rebuilt - state.log_lambda) > tol * max(1.0, abs(state.log_lambda)):
            raise IdentityViolation(
                f"step {n}: log rho + W + l = {rebuilt!r} but recursion gives {state.log_lambda!r}"
            )
        out.append(Decomposition(n, z, w, log_sum, state.log_lambda))
    return out

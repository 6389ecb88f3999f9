"""Pre/post-change observation densities, log-likelihood ratios and
Kullback-Leibler information numbers (all in nats).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.stats import norm

from .errors import DegenerateBound, InvalidDensity, NondistinguishablePair, OutOfSupport
from .gossip import SubsetDistribution, mask_weights
from .markov import BoundParams

KL_FLOOR = 1e-12
NORMALIZATION_TOL = 1e-6


@dataclass(frozen=True)
class Gaussian:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise InvalidDensity(f"Gaussian variance must be > 0, got {self.variance!r}")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return -0.5 * (x - self.mean) ** 2 / self.variance - 0.5 * math.log(2 * math.pi * self.variance)

    def ppf(self, u):
        return norm.ppf(u, loc=self.mean, scale=self.std)

    def support(self):
        return (-math.inf, math.inf)


@dataclass(frozen=True)
class Tabulated:
    """Density given by log-values on a uniform grid, linearly interpolated
    in the log domain and zero outside the grid."""

    grid: np.ndarray
    log_density: np.ndarray
    _cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        logd = np.asarray(self.log_density, dtype=float)
        if grid.ndim != 1 or grid.size < 3 or grid.shape != logd.shape:
            raise InvalidDensity("tabulated density needs matching 1-d grid and log-density arrays (>= 3 points)")
        steps = np.diff(grid)
        if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            raise InvalidDensity("tabulated grid must be uniform and increasing")
        if np.any(np.isnan(logd)):
            raise InvalidDensity("tabulated log-density contains NaN")
        pdf = np.exp(logd)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * steps)])
        if abs(cdf[-1] - 1.0) > NORMALIZATION_TOL:
            raise InvalidDensity(f"tabulated density integrates to {cdf[-1]!r}, not 1")
        for arr in (grid, logd, cdf):
            arr.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "log_density", logd)
        object.__setattr__(self, "_cdf", cdf / cdf[-1])

    def support(self):
        return (float(self.grid[0]), float(self.grid[-1]))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.support()
        out = np.interp(x, self.grid, self.log_density)
        return np.where((x < lo) | (x > hi), -np.inf, out)

    def ppf(self, u):
        return np.interp(u, self._cdf, self.grid)


Density = Union[Gaussian, Tabulated]


def _gaussian_kl(p: Gaussian, q: Gaussian) -> float:
    return 0.5 * (math.log(q.variance / p.variance) + (p.variance + (p.mean - q.mean) ** 2) / q.variance - 1.0)


def _quadrature_kl(p: Density, q: Density) -> tuple[float, float]:
    """D(p, q) by trapezoid on ``p``'s grid, with a Richardson error estimate
    from the half-resolution rule."""
    if isinstance(p, Gaussian):
        lo, hi = q.support()
        if math.isfinite(lo) or math.isfinite(hi):
            return math.inf, 0.0
        raise InvalidDensity("quadrature KL needs at least one tabulated density")
    grid = np.asarray(p.grid)
    lp = np.asarray(p.log_density)
    lq = q.logpdf(grid)
    w = np.exp(lp)
    if np.any((w > 0) & ~np.isfinite(lq)):
        return math.inf, 0.0
    integrand = np.where(w > 0, (lp - lq) * w, 0.0)
    fine = float(trapezoid(integrand, grid))
    if grid.size >= 5:
        coarse = float(trapezoid(integrand[::2], grid[::2]))
        err = abs(fine - coarse) / 3.0
    else:
        err = math.nan
    return fine, err


def divergence(p: Density, q: Density) -> tuple[float, float]:
    """``(D(p, q), error estimate)``; the estimate is 0 for closed forms."""
    if isinstance(p, Gaussian) and isinstance(q, Gaussian):
        return _gaussian_kl(p, q), 0.0
    return _quadrature_kl(p, q)


@dataclass(frozen=True)
class SensorDensityPair:
    pre_change: Density
    post_change: Density

    def __post_init__(self):
        forward, _ = divergence(self.post_change, self.pre_change)
        backward, _ = divergence(self.pre_change, self.post_change)
        for name, val in (("D(f1, f0)", forward), ("D(f0, f1)", backward)):
            if not math.isfinite(val):
                raise NondistinguishablePair(f"{name} is infinite")
            if val <= KL_FLOOR:
                raise NondistinguishablePair(f"{name} = {val!r} is not positive")

    @property
    def gaussian(self) -> bool:
        return isinstance(self.pre_change, Gaussian) and isinstance(self.post_change, Gaussian)

    def sample(self, post, rng: np.random.Generator, size=None):
        """Draw observations; ``post`` (bool or bool array) selects f1 over f0."""
        if self.gaussian:
            z = rng.standard_normal(size)
            f0, f1 = self.pre_change, self.post_change
            return np.where(post, f1.mean + f1.std * z, f0.mean + f0.std * z)
        u = rng.random(size)
        return np.where(post, self.post_change.ppf(u), self.pre_change.ppf(u))


def kl_number(pair: SensorDensityPair) -> float:
    """D(f1, f0) in nats."""
    val, _ = divergence(pair.post_change, pair.pre_change)
    if val <= KL_FLOOR:
        raise NondistinguishablePair(f"D(f1, f0) = {val!r}")
    return val


def log_likelihood_ratio(pair: SensorDensityPair, x):
    """log f1(x) - log f0(x), from log-densities directly."""
    l1 = pair.post_change.logpdf(x)
    l0 = pair.pre_change.logpdf(x)
    if not (np.all(np.isfinite(l1)) and np.all(np.isfinite(l0))):
        raise OutOfSupport("observation outside the support of a tabulated density")
    out = l1 - l0
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ObservationModel:
    sensors: tuple

    @property
    def node_count(self) -> int:
        return len(self.sensors)

    def kls(self) -> np.ndarray:
        return np.array([kl_number(p) for p in self.sensors])

    def centralized_kl(self) -> float:
        return float(self.kls().sum())


def gaussian_mean_shift_model(means: Sequence[float], variance: float = 1.0) -> ObservationModel:
    return ObservationModel(tuple(SensorDensityPair(Gaussian(0.0, variance), Gaussian(m, variance)) for m in means))


@dataclass
class KLSummary:
    per_sensor: np.ndarray
    centralized: float
    distributed: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.per_sensor <= 0):
            raise ValueError("per-sensor KL numbers must be positive")
        if abs(self.centralized - float(np.sum(self.per_sensor))) > 1e-12:
            raise ValueError("centralized KL must equal the per-sensor sum")

    def add_distributed(self, owner: int, gamma: float, value: float, tol: float = 1e-12):
        if not (self.per_sensor[owner] - tol <= value <= self.centralized + tol):
            raise ValueError(f"distributed KL {value!r} outside [{self.per_sensor[owner]!r}, {self.centralized!r}]")
        self.distributed[(owner, float(gamma))] = value

    @classmethod
    def from_model(cls, model: ObservationModel) -> "KLSummary":
        kls = model.kls()
        return cls(kls, float(kls.sum()))


def distributed_kl(sd: SubsetDistribution, kls: Sequence[float]) -> float:
    """Reach-set weighted partial sum of per-sensor KL numbers."""
    kls = np.asarray(kls, dtype=float)
    if 1 << kls.size != sd.probs.size:
        raise ValueError("KL array length does not match the subset distribution")
    return float(sd.probs @ mask_weights(kls))


def distributed_kl_bounds(kls: Sequence[float], owner: int, bp: BoundParams, gamma: float) -> tuple[float, float]:
    """Asymptotic (large ``gamma``) lower and upper bounds on the distributed
    KL number, returned verbatim at any ``gamma``."""
    if not (0 < bp.beta <= bp.alpha < 1):
        raise DegenerateBound(f"bound parameters alpha={bp.alpha!r}, beta={bp.beta!r}")
    kls = np.asarray(kls, dtype=float)
    total = float(kls.sum())
    others = np.delete(kls, owner)
    lower = total - float(others.max()) * math.exp(gamma * bp.upper_rate)
    upper = total - float(others.min()) * math.exp(gamma * bp.lower_rate)
    return lower, upper

"""Monte Carlo harness for false-alarm probability versus detection delay,
decay-rate regression, and the exact gossip-layer sweeps.

Trials are grouped into fixed-size blocks. Each block draws from its own
generator seeded by ``(master_seed, detector, threshold index, run kind,
block index)``, and block results are integer counts and sums, so the
output does not depend on how many worker processes run the blocks.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .detector import DetectorConfig, DetectorMode, has_stopped, initial_state, step
from .errors import DegenerateFit, NotEnumerable, TooLarge, ZeroFalseAlarms
from .gossip import (
    incomplete_probability,
    propagate,
    sample_period,
    sample_reach_masks,
    subset_distribution_exact,
    subset_distribution_mc,
)
from .markov import bound_params
from .obsmodel import ObservationModel, distributed_kl, distributed_kl_bounds, log_likelihood_ratio
from .topology import Graph, averaged_matrix

log = logging.getLogger(__name__)

PFA_RUN, CADD_RUN = 0, 1
_MODE_CODES = {"centralized": 0, "isolated": 1, "distributed": 2}


def log_spaced_thresholds(lo_exp: float = 1.0, hi_exp: float = 4.0, count: int = 7) -> tuple:
    return tuple(float(10.0**e) for e in np.linspace(lo_exp, hi_exp, count))


@dataclass(frozen=True)
class ExperimentConfig:
    graph: Graph
    distribution: object
    model: ObservationModel
    rho: float = 0.1
    gamma: float = 6.0
    modes: tuple = ()
    thresholds: tuple = field(default_factory=log_spaced_thresholds)
    trials_per_threshold: int = 100_000
    max_horizon: int = 2_000
    master_seed: Optional[int] = None
    censor_cap: float = 1e-3
    horizon_limit: int = 64_000
    block_size: int = 4096
    window: int = 15
    gamma_grid: tuple = tuple(float(g) for g in range(0, 61, 2))
    tail_eps: float = 1e-10

    def __post_init__(self):
        if self.model.node_count != self.graph.node_count:
            raise ValueError("observation model and graph disagree on the number of sensors")
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ValueError("thresholds must be strictly increasing")

    @property
    def node_count(self) -> int:
        return self.graph.node_count

    def all_modes(self) -> tuple:
        if self.modes:
            return self.modes
        n = self.node_count
        return (
            (DetectorMode("centralized"),)
            + tuple(DetectorMode("isolated", i) for i in range(n))
            + tuple(DetectorMode("distributed", i) for i in range(n))
        )

    def detector(self, mode: DetectorMode, threshold: float) -> DetectorConfig:
        return DetectorConfig(self.rho, threshold, mode)


@dataclass(frozen=True)
class TrialOutcome:
    change_time: int
    stop_time: Optional[int]

    @property
    def censored(self) -> bool:
        return self.stop_time is None

    @property
    def false_alarm(self) -> bool:
        return not self.censored and self.stop_time < self.change_time

    @property
    def delay(self) -> Optional[int]:
        if self.censored or self.false_alarm:
            return None
        return self.stop_time - self.change_time


def _sensor_columns(mode: DetectorMode, n: int) -> list[int]:
    return [mode.sensor] if mode.kind == "isolated" else list(range(n))


def run_trial(
    config: ExperimentConfig,
    mode: DetectorMode,
    threshold: float,
    rng: np.random.Generator,
    forced_change_time: Optional[int] = None,
    horizon: Optional[int] = None,
) -> TrialOutcome:
    """One trial through the scalar detector recursion.

    Draws from ``rng`` in the same order as :func:`simulate_block`, so a
    one-trial block with the same generator state gives the same outcome.
    """
    horizon = config.max_horizon if horizon is None else horizon
    det = config.detector(mode, threshold)
    n = config.node_count
    cols = _sensor_columns(mode, n)
    change = int(forced_change_time) if forced_change_time is not None else int(rng.geometric(config.rho))
    state = initial_state()
    for t in range(1, horizon + 1):
        post = t >= change
        llrs = {}
        for c in cols:
            pair = config.model.sensors[c]
            llrs[c] = float(log_likelihood_ratio(pair, pair.sample(post, rng)))
        if mode.kind == "distributed":
            period = sample_period(config.distribution, config.gamma, rng)
            reach = propagate(period, mode.sensor, n)
            llr_sum = 0.0
            for c in cols:
                if c in reach:
                    llr_sum += llrs[c]
        else:
            llr_sum = 0.0
            for c in cols:
                llr_sum += llrs[c]
        state = step(state, det, llr_sum)
        if has_stopped(state, det):
            return TrialOutcome(change, t)
    return TrialOutcome(change, None)


def simulate_block(
    config: ExperimentConfig,
    mode: DetectorMode,
    threshold: float,
    n_trials: int,
    rng: np.random.Generator,
    forced_change_time: Optional[int] = None,
    horizon: Optional[int] = None,
):
    """Vectorized trials. Returns ``(change_times, stop_times, censored)``;
    stop time is 0 where censored."""
    horizon = config.max_horizon if horizon is None else horizon
    n = config.node_count
    cols = _sensor_columns(mode, n)
    if forced_change_time is not None:
        change = np.full(n_trials, int(forced_change_time), dtype=np.int64)
    else:
        change = rng.geometric(config.rho, n_trials).astype(np.int64)
    drift = -math.log1p(-config.rho)
    log_rho = math.log(config.rho)
    log_a = math.log(threshold) if threshold > 0 else -math.inf
    log_l = np.full(n_trials, -np.inf)
    stop = np.zeros(n_trials, dtype=np.int64)
    alive = np.arange(n_trials)
    for t in range(1, horizon + 1):
        if alive.size == 0:
            break
        post = t >= change[alive]
        llrs = []
        for c in cols:
            pair = config.model.sensors[c]
            llrs.append(log_likelihood_ratio(pair, pair.sample(post, rng, alive.size)))
        llr_sum = np.zeros(alive.size)
        if mode.kind == "distributed":
            masks = sample_reach_masks(config.distribution, config.gamma, mode.sensor, alive.size, rng)
            for c, llr in zip(cols, llrs):
                llr_sum = llr_sum + np.where((masks >> c) & 1 == 1, llr, 0.0)
        else:
            for llr in llrs:
                llr_sum = llr_sum + llr
        updated = drift + np.logaddexp(log_l[alive], log_rho) + llr_sum
        log_l[alive] = updated
        hit = updated >= log_a
        stop[alive[hit]] = t
        alive = alive[~hit]
    censored = np.zeros(n_trials, dtype=bool)
    censored[alive] = True
    return change, stop, censored


def block_seed(master_seed: int, mode: DetectorMode, threshold_index: int, kind: int, block: int) -> np.random.SeedSequence:
    sensor = -1 if mode.sensor is None else mode.sensor
    key = (_MODE_CODES[mode.kind], sensor + 1, threshold_index, kind, block)
    return np.random.SeedSequence(master_seed, spawn_key=key)


@dataclass(frozen=True)
class _BlockTask:
    config: ExperimentConfig
    mode: DetectorMode
    threshold_index: int
    kind: int
    block: int
    size: int
    horizon: int


def _run_block(task: _BlockTask) -> dict:
    cfg = task.config
    rng = np.random.default_rng(block_seed(cfg.master_seed, task.mode, task.threshold_index, task.kind, task.block))
    forced = 1 if task.kind == CADD_RUN else None
    change, stop, censored = simulate_block(
        cfg, task.mode, cfg.thresholds[task.threshold_index], task.size, rng, forced, task.horizon
    )
    ok = ~censored
    false_alarm = ok & (stop < change)
    detected = ok & ~false_alarm
    delay = (stop - change)[detected]
    return {
        "n": int(task.size),
        "censored": int(censored.sum()),
        "false_alarms": int(false_alarm.sum()),
        "detected": int(detected.sum()),
        "delay_sum": int(delay.sum()),
        "delay_sq": int((delay * delay).sum()),
    }


def _merge(parts: Sequence[dict]) -> dict:
    out = {k: 0 for k in parts[0]}
    for p in parts:
        for k, v in p.items():
            out[k] += v
    return out


def _blocks(config: ExperimentConfig):
    full, rest = divmod(config.trials_per_threshold, config.block_size)
    sizes = [config.block_size] * full + ([rest] if rest else [])
    return list(enumerate(sizes))


def _map(executor, fn, tasks):
    if executor is None:
        return [fn(t) for t in tasks]
    return list(executor.map(fn, tasks))


def _run_kind(config, mode, threshold_index, kind, executor) -> tuple[dict, int]:
    horizon = config.max_horizon
    while True:
        tasks = [_BlockTask(config, mode, threshold_index, kind, b, s, horizon) for b, s in _blocks(config)]
        agg = _merge(_map(executor, _run_block, tasks))
        if agg["censored"] <= config.censor_cap * agg["n"]:
            return agg, horizon
        if horizon * 2 > config.horizon_limit:
            log.warning(
                "%s A=%g: %d of %d trials censored at horizon %d (cap %g); censored trials excluded",
                mode, config.thresholds[threshold_index], agg["censored"], agg["n"], horizon, config.censor_cap,
            )
            return agg, horizon
        horizon *= 2


@dataclass(frozen=True)
class RatePoint:
    threshold: float
    cadd1: float
    cadd1_se: float
    pfa: float
    pfa_se: float
    pfa_trials: int
    cadd_trials: int
    false_alarms: int
    add: float = math.nan
    add_se: float = math.nan
    censored: int = 0
    horizon: int = 0

    @property
    def log_pfa(self) -> float:
        return math.log(self.pfa) if self.pfa > 0 else -math.inf

    @property
    def log_pfa_se(self) -> float:
        # delta method on the binomial proportion
        if self.pfa <= 0:
            return math.inf
        return math.sqrt((1 - self.pfa) / (self.pfa_trials * self.pfa))


def _mean_se(total: int, total_sq: int, count: int) -> tuple[float, float]:
    if count == 0:
        return math.nan, math.nan
    mean = total / count
    if count < 2:
        return mean, math.nan
    var = (total_sq - count * mean * mean) / (count - 1)
    return mean, math.sqrt(max(var, 0.0) / count)


def estimate_point(config: ExperimentConfig, mode: DetectorMode, threshold_index: int, executor=None) -> RatePoint:
    pfa_agg, h1 = _run_kind(config, mode, threshold_index, PFA_RUN, executor)
    cadd_agg, h2 = _run_kind(config, mode, threshold_index, CADD_RUN, executor)
    n_pfa = pfa_agg["n"] - pfa_agg["censored"]
    pfa = pfa_agg["false_alarms"] / n_pfa if n_pfa else math.nan
    pfa_se = math.sqrt(pfa * (1 - pfa) / n_pfa) if n_pfa else math.nan
    cadd, cadd_se = _mean_se(cadd_agg["delay_sum"], cadd_agg["delay_sq"], cadd_agg["detected"])
    add, add_se = _mean_se(pfa_agg["delay_sum"], pfa_agg["delay_sq"], pfa_agg["detected"])
    return RatePoint(
        threshold=config.thresholds[threshold_index],
        cadd1=cadd,
        cadd1_se=cadd_se,
        pfa=pfa,
        pfa_se=pfa_se,
        pfa_trials=n_pfa,
        cadd_trials=cadd_agg["detected"],
        false_alarms=pfa_agg["false_alarms"],
        add=add,
        add_se=add_se,
        censored=pfa_agg["censored"] + cadd_agg["censored"],
        horizon=max(h1, h2),
    )


def estimate_pfa_cadd(config: ExperimentConfig, mode: DetectorMode, executor=None, keep_empty: bool = False) -> list[RatePoint]:
    """One :class:`RatePoint` per threshold. Points without a single false
    alarm have no finite log-PFA and are dropped with a warning unless
    ``keep_empty``."""
    if config.master_seed is None:
        raise ValueError("a master seed is required for Monte Carlo estimation")
    points = []
    for k in range(len(config.thresholds)):
        pt = estimate_point(config, mode, k, executor)
        if pt.false_alarms == 0 and not keep_empty:
            log.warning("%s", ZeroFalseAlarms(f"{mode} A={pt.threshold:g}: no false alarm in {pt.pfa_trials} trials; point dropped").one_line())
            continue
        points.append(pt)
    return points


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    slope_stderr: float
    r_squared: float
    points: int


def fit_decay_rate(points: Sequence[RatePoint]) -> DecayFit:
    """Weighted least squares of log-PFA on CADD_1, weights the inverse
    delta-method variance of log-PFA. The slope standard error is inflated by
    the root reduced chi-square when the scatter exceeds the weights."""
    pts = [p for p in points if p.pfa > 0 and math.isfinite(p.cadd1)]
    if len(pts) < 3:
        raise DegenerateFit(f"need at least 3 points with false alarms, got {len(pts)}")
    x = np.array([p.cadd1 for p in pts])
    y = np.array([p.log_pfa for p in pts])
    se = np.array([p.log_pfa_se for p in pts])
    if x.max() - x.min() < 1.0:
        raise DegenerateFit(f"CADD spread {x.max() - x.min():.3g} is below one period")
    w = np.where(se > 0, 1.0 / np.maximum(se, 1e-300) ** 2, 1.0)
    if not np.all(se > 0):
        w = np.ones_like(x)
    design = np.column_stack([x, np.ones_like(x)])
    xtw = design.T * w
    cov = np.linalg.inv(xtw @ design)
    slope, intercept = cov @ (xtw @ y)
    resid = y - (slope * x + intercept)
    dof = len(pts) - 2
    chi2 = float(np.sum(w * resid**2))
    scale = max(1.0, chi2 / dof) if dof > 0 else 1.0
    ybar = np.sum(w * y) / np.sum(w)
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    r2 = 1.0 - chi2 / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(slope), float(intercept), float(math.sqrt(cov[0, 0] * scale)), r2, len(pts))


def exact_distributed_kl(config: ExperimentConfig, owner: int, gamma: float) -> float:
    sd = subset_distribution_exact(config.distribution, gamma, owner, config.tail_eps)
    return distributed_kl(sd, config.model.kls())


def target_rate(config: ExperimentConfig, mode: DetectorMode) -> float:
    """Asymptotic slope of log-PFA against CADD_1 for ``mode``."""
    kls = config.model.kls()
    if mode.kind == "centralized":
        info = float(kls.sum())
    elif mode.kind == "isolated":
        info = float(kls[mode.sensor])
    else:
        try:
            info = exact_distributed_kl(config, mode.sensor, config.gamma)
        except (NotEnumerable, TooLarge):
            return math.nan
    return -(info - math.log1p(-config.rho))


@dataclass
class FirstLayerResult:
    mode: DetectorMode
    points: list
    fit: Optional[DecayFit]
    target: float


def first_layer(config: ExperimentConfig, modes: Optional[Sequence[DetectorMode]] = None, workers: int = 1) -> list[FirstLayerResult]:
    """Rate points and decay fit per detector. Points without false alarms
    are kept in the result but never enter the fit."""
    modes = config.all_modes() if modes is None else modes
    executor = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        out = []
        for mode in modes:
            points = estimate_pfa_cadd(config, mode, executor, keep_empty=True)
            for pt in points:
                if pt.false_alarms == 0:
                    log.warning("%s", ZeroFalseAlarms(f"{mode} A={pt.threshold:g}: no false alarm in {pt.pfa_trials} trials; excluded from fit").one_line())
            try:
                fit = fit_decay_rate(points)
            except DegenerateFit as exc:
                log.warning("%s: %s", mode, exc)
                fit = None
            out.append(FirstLayerResult(mode, points, fit, target_rate(config, mode)))
        return out
    finally:
        if executor is not None:
            executor.shutdown()


def _subset_distribution(config: ExperimentConfig, gamma: float, owner: int, stream: int):
    try:
        return subset_distribution_exact(config.distribution, gamma, owner, config.tail_eps)
    except (NotEnumerable, TooLarge):
        if config.master_seed is None:
            raise ValueError("Monte Carlo fallback for the subset distribution needs a master seed")
        rng = np.random.default_rng(np.random.SeedSequence(config.master_seed, spawn_key=(7, owner, stream)))
        return subset_distribution_mc(config.distribution, gamma, owner, config.trials_per_threshold, rng)


def second_layer_curve(
    config: ExperimentConfig, gamma_grid: Sequence[float], owner: int = 0, window: Optional[int] = None
) -> list[dict]:
    """Per ``gamma``: log of the probability that some observation is missing
    at ``owner``, divided by ``gamma``, next to the hitting-time rate lines."""
    window = config.window if window is None else window
    bp = bound_params(averaged_matrix(config.distribution), owner, window)
    rows = []
    for k, gamma in enumerate(gamma_grid):
        sd = _subset_distribution(config, gamma, owner, k)
        inc = incomplete_probability(sd)
        rate = math.log(inc) / gamma if inc > 0 and gamma > 0 else (-math.inf if gamma > 0 else math.nan)
        rows.append(
            {
                "gamma": float(gamma),
                "owner": owner,
                "incomplete_probability": inc,
                "rate": rate,
                "upper_rate": bp.upper_rate,
                "lower_rate": bp.lower_rate,
                "window": window,
                "method": sd.method,
            }
        )
    return rows


def kl_convergence_sweep(
    config: ExperimentConfig, gamma_grid: Sequence[float], owner: int = 0, window: Optional[int] = None
) -> list[dict]:
    window = config.window if window is None else window
    kls = config.model.kls()
    bp = bound_params(averaged_matrix(config.distribution), owner, window)
    rows = []
    for k, gamma in enumerate(gamma_grid):
        sd = _subset_distribution(config, gamma, owner, 1000 + k)
        lower, upper = distributed_kl_bounds(kls, owner, bp, gamma)
        rows.append(
            {
                "gamma": float(gamma),
                "owner": owner,
                "exact_dkl": distributed_kl(sd, kls),
                "thm4_lower": lower,
                "thm4_upper": upper,
                "centralized_kl": float(kls.sum()),
            }
        )
    return rows

"""Invariant suite behind ``gossipqcd validate``.

Only properties that hold for every admissible config are checked here. The
large-``gamma`` rate and KL bounds are asymptotic statements and are reported
by ``second-layer`` and ``kl-sweep`` instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .detector import decompose, run_statistic
from .experiments import ExperimentConfig, exact_distributed_kl
from .gossip import EXACT_NODE_CAP, subset_distribution_exact
from .markov import tail_curve
from .topology import averaged_matrix, check_irreducible_aperiodic


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def batch_log_statistic(llrs, rho: float) -> float:
    """Closed-form log-statistic after ``len(llrs)`` steps:
    ``log sum_k rho (1-rho)^(k-1) exp(sum_{t>=k} x_t) - n log(1-rho)``."""
    x = np.asarray(llrs, dtype=float)
    n = x.size
    k = np.arange(1, n + 1)
    suffix = np.cumsum(x[::-1])[::-1]
    terms = math.log(rho) + (k - 1) * math.log1p(-rho) + suffix
    return float(logsumexp(terms) - n * math.log1p(-rho))


def _exact_ok(cfg: ExperimentConfig) -> bool:
    return getattr(cfg.distribution, "enumerated", False) and cfg.node_count <= EXACT_NODE_CAP


def _check_graph(cfg):
    return cfg.graph.connected, f"{cfg.node_count} nodes, {len(cfg.graph.edges)} edges"


def _check_matchings(cfg):
    dist = cfg.distribution
    if not dist.enumerated:
        return True, "sequential sampler (no explicit law)"
    ok = all(m.respects(cfg.graph) for m, _ in dist.entries)
    total = float(sum(w for _, w in dist.entries))
    return ok and abs(total - 1) < 1e-12, f"{len(dist.entries)} matchings, weight sum {total:.17g}"


def _check_averaged(cfg):
    if not cfg.distribution.enumerated:
        return True, "skipped: sequential sampler"
    a = averaged_matrix(cfg.distribution).entries
    sym = float(np.abs(a - a.T).max())
    rows = float(np.abs(a.sum(axis=1) - 1).max())
    ok = sym < 1e-12 and rows < 1e-12 and check_irreducible_aperiodic(averaged_matrix(cfg.distribution))
    return ok, f"asymmetry {sym:.3g}, row-sum error {rows:.3g}"


def _check_kl(cfg):
    kls = cfg.model.kls()
    return bool(np.all(kls > 0)), "KL " + ", ".join(f"{v:.6g}" for v in kls)


def _check_tails(cfg):
    if not cfg.distribution.enumerated:
        return True, "skipped: sequential sampler"
    a = averaged_matrix(cfg.distribution)
    w = cfg.window
    worst = 0.0
    for target in range(cfg.node_count):
        curve = tail_curve(a, target, 4 * w)
        if np.any(np.diff(curve, axis=0) > 1e-15):
            return False, f"tail increases for target {target}"
        alpha, beta = curve[w].max(), curve[w].min()
        for k in range(1, 5):
            hi = curve[k * w].max() - alpha**k
            lo = beta**k - curve[k * w].min()
            worst = max(worst, hi, lo)
    return worst <= 1e-12, f"max submultiplicativity excess {worst:.3g}"


def _check_subsets(cfg):
    if not _exact_ok(cfg):
        return True, "skipped: no exact law"
    for owner in range(cfg.node_count):
        sd = subset_distribution_exact(cfg.distribution, cfg.gamma, owner, cfg.tail_eps)
        if abs(sd.probs.sum() - 1) > 1e-10:
            return False, f"owner {owner}: mass {sd.probs.sum()!r}"
    return True, f"gamma {cfg.gamma:g}, all owners"


def _check_dkl(cfg):
    if not _exact_ok(cfg):
        return True, "skipped: no exact law"
    kls = cfg.model.kls()
    total = float(kls.sum())
    for owner in range(cfg.node_count):
        prev = -math.inf
        for g in cfg.gamma_grid:
            v = exact_distributed_kl(cfg, owner, g)
            if not (kls[owner] - 1e-12 <= v <= total + 1e-12):
                return False, f"owner {owner} gamma {g:g}: {v!r} outside [{kls[owner]!r}, {total!r}]"
            if v < prev - 1e-12:
                return False, f"owner {owner}: decreases at gamma {g:g}"
            prev = v
    return True, f"{len(cfg.gamma_grid)} gammas, all owners"


def _check_recursion(cfg):
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        x = rng.normal(0, 2, 5)
        worst = max(worst, abs(run_statistic(x, cfg.rho)[-1] - batch_log_statistic(x, cfg.rho)))
    return worst < 1e-9, f"max deviation {worst:.3g}"


def _check_decomposition(cfg):
    rng = np.random.default_rng(1)
    for _ in range(20):
        decompose(rng.normal(0, 1, 50), cfg.rho, tol=1e-9)
    return True, "20 runs of 50 steps"


CHECKS: list[tuple[str, Callable]] = [
    ("graph_connected", _check_graph),
    ("matching_law", _check_matchings),
    ("averaged_matrix", _check_averaged),
    ("kl_positive", _check_kl),
    ("hitting_tails", _check_tails),
    ("subset_normalization", _check_subsets),
    ("distributed_kl_sandwich", _check_dkl),
    ("recursion_vs_batch", _check_recursion),
    ("decomposition_identity", _check_decomposition),
]


def run_invariant_suite(cfg: ExperimentConfig) -> list[CheckResult]:
    out = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn(cfg)
        except Exception as exc:  # a raised module error is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail))
    return out

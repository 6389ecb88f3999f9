"""Exact hitting-time tails of the pointer chain and the bound parameters
derived from them.

``P(T_j > k)`` for a chain with kernel ``A`` started at ``j`` and absorbed at
``target`` is ``(Q^k 1)_j`` where ``Q`` is ``A`` with the target's row and
column deleted (the taboo matrix).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateBound, NotIrreducible
from .topology import AveragedMatrix

DEFAULT_WINDOW = 15


@dataclass(frozen=True)
class HittingTailTable:
    target: int
    horizon: int
    # tail[k] is P(T_{others[k]} > horizon)
    others: tuple
    tail: np.ndarray

    def __getitem__(self, j: int) -> float:
        return float(self.tail[self.others.index(j)])

    def as_dict(self) -> dict:
        return {j: float(t) for j, t in zip(self.others, self.tail)}


@dataclass(frozen=True)
class BoundParams:
    target: int
    window: int
    alpha: float
    beta: float

    @property
    def upper_rate(self) -> float:
        return math.log(self.alpha) / self.window

    @property
    def lower_rate(self) -> float:
        return math.log(self.beta) / self.window


def _taboo(a_bar: AveragedMatrix, target: int):
    n = a_bar.size
    if not 0 <= target < n:
        raise IndexError(f"target {target} out of range for {n} states")
    others = tuple(j for j in range(n) if j != target)
    q = a_bar.entries[np.ix_(others, others)]
    return others, q


def _check_reaches(a_bar: AveragedMatrix, target: int):
    # every state must be able to reach the target, otherwise some tail stays at 1
    pattern = a_bar.entries > 0
    reached = {target}
    frontier = [target]
    while frontier:
        v = frontier.pop()
        for u in np.flatnonzero(pattern[:, v]):
            if int(u) not in reached:
                reached.add(int(u))
                frontier.append(int(u))
    if len(reached) != a_bar.size:
        missing = sorted(set(range(a_bar.size)) - reached)
        raise NotIrreducible(f"states {missing} never reach target {target}")


def hitting_tail(a_bar: AveragedMatrix, target: int, horizon: int) -> HittingTailTable:
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    _check_reaches(a_bar, target)
    others, q = _taboo(a_bar, target)
    v = np.ones(len(others))
    for _ in range(horizon):
        v = q @ v
    return HittingTailTable(target, horizon, others, v)


def tail_curve(a_bar: AveragedMatrix, target: int, horizon: int) -> np.ndarray:
    """Tails for every horizon ``0..horizon``; row ``k`` holds P(T_j > k)."""
    _check_reaches(a_bar, target)
    others, q = _taboo(a_bar, target)
    out = np.empty((horizon + 1, len(others)))
    v = np.ones(len(others))
    out[0] = v
    for k in range(1, horizon + 1):
        v = q @ v
        out[k] = v
    return out


def bound_params(a_bar: AveragedMatrix, target: int, window: int = DEFAULT_WINDOW) -> BoundParams:
    """Worst and best case tail over starting states at horizon ``window``.

    Raises ``DegenerateBound`` when ``alpha`` reaches 1 (the upper rate would
    be 0) or ``beta`` is exactly 0 (the lower rate would be minus infinity).
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    table = hitting_tail(a_bar, target, window)
    alpha = float(table.tail.max())
    beta = float(table.tail.min())
    if alpha >= 1.0:
        raise DegenerateBound(f"alpha = {alpha!r} at window {window}: tail does not decay")
    if beta <= 0.0:
        raise DegenerateBound(f"beta = 0 at window {window}: lower rate is -inf")
    return BoundParams(target, window, alpha, beta)


def bounds_vs_window(a_bar: AveragedMatrix, target: int, windows: Sequence[int]) -> list[BoundParams]:
    return [bound_params(a_bar, target, int(w)) for w in windows]

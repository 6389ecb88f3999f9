"""Gossip periods: Poisson round counts, matching draws, pointer propagation
and the distribution of the set of observations a sensor ends up holding.

Within a period every sensor starts with its own observation. In each round
paired sensors swap the observation they currently hold,
``s_m(i) = s_{m-1}(partner_m(i))``, and sensor ``i`` keeps a copy of every
observation that passes through it. Subsets of sensors are integer bit masks
``nu`` in ``[0, 2**N)``; bit ``j`` set means sensor ``j``'s observation is
available.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.stats import poisson

from .errors import InvalidEps, NotEnumerable, TooLarge
from .topology import Graph, Matching, MatchingDistribution

log = logging.getLogger(__name__)

EXACT_NODE_CAP = 8
DEFAULT_TAIL_EPS = 1e-10
SUM_TOL = 1e-10


def popcount_table(n: int) -> np.ndarray:
    masks = np.arange(1 << n)
    return np.array([bin(m).count("1") for m in masks], dtype=np.int64)


def mask_members(mask: int, n: int) -> list[int]:
    return [j for j in range(n) if mask >> j & 1]


@dataclass(frozen=True)
class ReachSet:
    bits: int
    owner: int

    def __post_init__(self):
        if not self.bits >> self.owner & 1:
            raise ValueError("reach set must contain its owner")

    def __contains__(self, j: int) -> bool:
        return bool(self.bits >> j & 1)

    def members(self) -> list[int]:
        return [j for j in range(self.bits.bit_length()) if self.bits >> j & 1]


@dataclass(frozen=True)
class GossipPeriod:
    matchings: tuple

    @property
    def round_count(self) -> int:
        return len(self.matchings)


class SequentialMatchingSampler:
    """Matching law for graphs too large to enumerate.

    Repeatedly picks a uniformly random unmatched node and pairs it with a
    uniformly random choice among its unmatched neighbours and itself. The
    induced law over matchings is not written down anywhere, so exact
    computations refuse it.
    """

    enumerated = False

    def __init__(self, graph: Graph):
        self.graph = graph
        self._nbrs = [graph.neighbors(i) for i in range(graph.node_count)]

    @property
    def node_count(self) -> int:
        return self.graph.node_count

    def sample(self, rng: np.random.Generator) -> Matching:
        n = self.graph.node_count
        partner = [-1] * n
        unmatched = list(range(n))
        while unmatched:
            u = unmatched.pop(int(rng.integers(len(unmatched))))
            options = [u] + [v for v in self._nbrs[u] if partner[v] == -1]
            v = options[int(rng.integers(len(options)))]
            partner[u] = v
            partner[v] = u
            if v != u:
                unmatched.remove(v)
        return Matching(tuple(partner))


def sample_round_count(gamma: float, rng: np.random.Generator) -> int:
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    return int(rng.poisson(gamma))


def sample_period(dist, gamma: float, rng: np.random.Generator) -> GossipPeriod:
    m = sample_round_count(gamma, rng)
    return GossipPeriod(tuple(dist.sample(rng) for _ in range(m)))


def propagate_all(period: GossipPeriod, node_count: int) -> list[int]:
    """Reach-set masks for every sensor after one period."""
    s = list(range(node_count))
    masks = [1 << i for i in range(node_count)]
    for matching in period.matchings:
        p = matching.partner
        s = [s[p[i]] for i in range(node_count)]
        for i in range(node_count):
            grown = masks[i] | (1 << s[i])
            assert grown & masks[i] == masks[i]
            masks[i] = grown
    return masks


def propagate(period: GossipPeriod, owner: int, node_count: int | None = None) -> ReachSet:
    if node_count is None:
        if not period.matchings:
            return ReachSet(1 << owner, owner)
        node_count = period.matchings[0].node_count
    return ReachSet(propagate_all(period, node_count)[owner], owner)


def sample_reach_masks(dist, gamma: float, owner: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized equivalent of ``propagate(sample_period(...), owner)`` for
    ``size`` independent periods. Consumes the generator in the same order as
    the scalar path, so ``size == 1`` reproduces it exactly."""
    n = dist.node_count
    rounds = rng.poisson(gamma, size)
    masks = np.full(size, 1 << owner, dtype=np.int64)
    if size == 0 or rounds.max(initial=0) == 0:
        return masks
    if not dist.enumerated:
        for t in range(size):
            period = GossipPeriod(tuple(dist.sample(rng) for _ in range(int(rounds[t]))))
            masks[t] = propagate(period, owner, n).bits
        return masks
    partners = dist.partners
    # longest periods first, so the trials still gossiping in round r are a prefix
    order = np.argsort(-rounds, kind="stable")
    active = np.bincount(rounds, minlength=int(rounds.max()) + 1)[::-1].cumsum()[::-1][1:]
    s = np.tile(np.arange(n, dtype=np.int64), (size, 1))
    sorted_masks = masks[order]
    for cnt in active:
        k = dist.sample_index(rng, int(cnt))
        head = np.take_along_axis(s[:cnt], partners[k], axis=1)
        s[:cnt] = head
        sorted_masks[:cnt] |= np.left_shift(1, head[:, owner])
    masks[order] = sorted_masks
    return masks


@dataclass(frozen=True)
class SubsetDistribution:
    owner: int
    mean_rounds: float
    probs: np.ndarray
    method: str = "exact"
    truncated_mass: float = 0.0
    trials: int = 0
    stderr: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        p = self.probs
        if abs(p.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"subset probabilities sum to {p.sum()!r}")
        masks = np.arange(p.size)
        if np.any(p[(masks >> self.owner & 1) == 0] != 0):
            raise ValueError("probability mass on a subset missing its owner")

    @property
    def node_count(self) -> int:
        return int(self.probs.size).bit_length() - 1

    @property
    def full_mask(self) -> int:
        return self.probs.size - 1


def incomplete_probability(sd: SubsetDistribution) -> float:
    """Probability that some observation is missing at the owner."""
    # summed directly rather than 1 - p[full] to keep precision when tiny
    return float(sd.probs[: sd.full_mask].sum())


def _unseen_chain(dist: MatchingDistribution, owner: int):
    """Reachable states and averaged one-round kernel of the chain whose state
    records, for each observation not yet seen by ``owner``, the sensor
    currently holding it (-1 once seen)."""
    n = dist.node_count
    partners = [tuple(int(x) for x in row) for row in dist.partners]
    weights = [float(w) for w in dist.weights]
    start = tuple(-1 if j == owner else j for j in range(n))
    index = {start: 0}
    states = [start]
    rows, cols, vals = [], [], []
    head = 0
    while head < len(states):
        state = states[head]
        for p, w in zip(partners, weights):
            nxt = []
            for loc in state:
                if loc < 0:
                    nxt.append(-1)
                else:
                    moved = p[loc]
                    nxt.append(-1 if moved == owner else moved)
            nxt = tuple(nxt)
            if nxt not in index:
                index[nxt] = len(states)
                states.append(nxt)
            rows.append(head)
            cols.append(index[nxt])
            vals.append(w)
        head += 1
    size = len(states)
    kernel = sparse.csr_matrix((vals, (rows, cols)), shape=(size, size))
    masks = np.array([sum(1 << j for j, loc in enumerate(st) if loc < 0) for st in states], dtype=np.int64)
    return kernel, masks


def subset_distribution_exact(
    dist, gamma: float, owner: int, tail_eps: float = DEFAULT_TAIL_EPS
) -> SubsetDistribution:
    """Reach-set law at ``owner`` for Poisson(``gamma``) rounds, exact up to
    truncating the round count where its upper tail drops below ``tail_eps``.
    The truncated tail mass is lumped onto the last computed round count."""
    if not getattr(dist, "enumerated", False):
        raise NotEnumerable("exact subset distribution needs an enumerated matching law")
    n = dist.node_count
    if n > EXACT_NODE_CAP:
        raise TooLarge(f"exact subset distribution is capped at {EXACT_NODE_CAP} nodes, got {n}")
    if not (0 < tail_eps <= 1e-6):
        raise InvalidEps(f"tail_eps must lie in (0, 1e-6], got {tail_eps!r}")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    kernel, masks = _unseen_chain(dist, owner)
    kt = kernel.T.tocsr()
    v = np.zeros(kernel.shape[0])
    v[0] = 1.0
    acc = np.zeros_like(v)
    m = 0
    while True:
        acc += poisson.pmf(m, gamma) * v
        tail = float(poisson.sf(m, gamma))
        if tail < tail_eps:
            acc += tail * v
            break
        v = kt @ v
        m += 1
    probs = np.bincount(masks, weights=acc, minlength=1 << n)
    return SubsetDistribution(owner, float(gamma), probs, "exact", truncated_mass=tail)


def incomplete_after_rounds(dist, owner: int, max_rounds: int) -> np.ndarray:
    """``out[m]`` is the probability that some observation is missing at
    ``owner`` after exactly ``m`` rounds, for ``m = 0..max_rounds``."""
    if not getattr(dist, "enumerated", False):
        raise NotEnumerable("fixed-round probabilities need an enumerated matching law")
    if dist.node_count > EXACT_NODE_CAP:
        raise TooLarge(f"exact computation is capped at {EXACT_NODE_CAP} nodes, got {dist.node_count}")
    kernel, masks = _unseen_chain(dist, owner)
    kt = kernel.T.tocsr()
    incomplete = masks != (1 << dist.node_count) - 1
    v = np.zeros(kernel.shape[0])
    v[0] = 1.0
    out = np.empty(max_rounds + 1)
    for m in range(max_rounds + 1):
        out[m] = v[incomplete].sum()
        v = kt @ v
    return out


def subset_distribution_mc(
    dist, gamma: float, owner: int, trials: int, rng: np.random.Generator, chunk: int = 65536
) -> SubsetDistribution:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    n = dist.node_count
    counts = np.zeros(1 << n, dtype=np.int64)
    done = 0
    while done < trials:
        size = min(chunk, trials - done)
        masks = sample_reach_masks(dist, gamma, owner, size, rng)
        counts += np.bincount(masks, minlength=1 << n)
        done += size
    probs = counts / trials
    stderr = np.sqrt(probs * (1 - probs) / trials)
    return SubsetDistribution(owner, float(gamma), probs, "mc", trials=trials, stderr=stderr)


def total_variation(a: SubsetDistribution, b: SubsetDistribution) -> float:
    return 0.5 * float(np.abs(a.probs - b.probs).sum())


def mask_weights(values: Sequence[float]) -> np.ndarray:
    """``out[nu]`` is the sum of ``values[j]`` over the members of subset ``nu``."""
    vals = np.asarray(values, dtype=float)
    n = vals.size
    masks = np.arange(1 << n)
    bits = (masks[:, None] >> np.arange(n)) & 1
    return bits @ vals

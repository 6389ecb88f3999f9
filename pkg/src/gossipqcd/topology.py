"""Sensor network graphs, matching-type communication patterns and the
averaged matrix of a matching distribution.

A matching is stored as a partner array: ``partner[i]`` is the node that
``i`` talks to in a round, with ``partner[i] == i`` meaning ``i`` stays
silent. Every matching is an involution whose non-trivial pairs are edges of
the graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    DisconnectedGraph,
    EmptySupport,
    InvalidEdge,
    InvalidMatching,
    TooLarge,
)

PROB_TOL = 1e-12
ENUMERATION_CAP = 12


@dataclass(frozen=True)
class Graph:
    node_count: int
    edges: frozenset
    connected: bool = field(init=False)

    def __post_init__(self):
        if self.node_count < 2:
            raise InvalidEdge(f"node_count must be >= 2, got {self.node_count}")
        for i, j in self.edges:
            if not (0 <= i < j < self.node_count):
                raise InvalidEdge(f"edge ({i}, {j}) is not a normalized in-range pair")
        object.__setattr__(self, "connected", _is_connected(self.node_count, self.edges))

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    def neighbors(self, i: int) -> list[int]:
        return sorted({b if a == i else a for a, b in self.edges if i in (a, b)})

    def adjacency(self) -> np.ndarray:
        """0/1 adjacency matrix with unit diagonal (self-communication)."""
        adj = np.eye(self.node_count, dtype=np.int64)
        for i, j in self.edges:
            adj[i, j] = adj[j, i] = 1
        return adj


def _is_connected(n: int, edges: Iterable[tuple[int, int]]) -> bool:
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in edges:
        parent[find(i)] = find(j)
    return len({find(x) for x in range(n)}) == 1


def build_graph(node_count: int, edges: Sequence[Sequence[int]]) -> Graph:
    """Validate an undirected edge list and return a connected :class:`Graph`.

    Raises ``InvalidEdge`` on self-loops, duplicates or out-of-range indices and
    ``DisconnectedGraph`` if some pair of nodes has no connecting path.
    """
    if node_count < 2:
        raise InvalidEdge(f"node_count must be >= 2, got {node_count}")
    seen = set()
    for pair in edges:
        if len(pair) != 2:
            raise InvalidEdge(f"edge {pair!r} is not a pair")
        i, j = int(pair[0]), int(pair[1])
        if not (0 <= i < node_count and 0 <= j < node_count):
            raise InvalidEdge(f"edge ({i}, {j}) out of range for {node_count} nodes")
        if i == j:
            raise InvalidEdge(f"self-loop ({i}, {j}) is implicit and must not be listed")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise InvalidEdge(f"duplicate edge {key}")
        seen.add(key)
    graph = Graph(node_count, frozenset(seen))
    if not graph.connected:
        raise DisconnectedGraph(f"graph with {node_count} nodes and {len(seen)} edges is not connected")
    return graph


def complete_graph(n: int) -> Graph:
    return build_graph(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def path_graph(n: int) -> Graph:
    return build_graph(n, [(i, i + 1) for i in range(n - 1)])


@dataclass(frozen=True)
class Matching:
    partner: tuple

    def __post_init__(self):
        p = self.partner
        n = len(p)
        for i, j in enumerate(p):
            if not (0 <= j < n) or p[j] != i:
                raise InvalidMatching(f"partner array {list(p)} is not an involution")

    @property
    def node_count(self) -> int:
        return len(self.partner)

    def respects(self, graph: Graph) -> bool:
        if self.node_count != graph.node_count:
            return False
        return all(j == i or graph.has_edge(i, j) for i, j in enumerate(self.partner))

    def permutation_matrix(self) -> np.ndarray:
        n = self.node_count
        mat = np.zeros((n, n))
        mat[np.arange(n), list(self.partner)] = 1.0
        return mat

    @classmethod
    def identity(cls, n: int) -> "Matching":
        return cls(tuple(range(n)))


def enumerate_matchings(graph: Graph, cap: int = ENUMERATION_CAP) -> list[Matching]:
    """All edge-respecting involutions of ``graph``, in lexicographic order of
    their partner arrays. The identity (nobody talks) is always included."""
    n = graph.node_count
    if n > cap:
        raise TooLarge(f"{n} nodes exceeds the matching enumeration cap of {cap}")
    nbrs = [set(graph.neighbors(i)) for i in range(n)]
    out: list[tuple] = []
    partner = [-1] * n

    def rec(u: int):
        while u < n and partner[u] != -1:
            u += 1
        if u == n:
            out.append(tuple(partner))
            return
        partner[u] = u
        rec(u + 1)
        for v in range(u + 1, n):
            if partner[v] == -1 and v in nbrs[u]:
                partner[u], partner[v] = v, u
                rec(u + 1)
                partner[v] = -1
        partner[u] = -1

    rec(0)
    out.sort()
    return [Matching(p) for p in out]


@dataclass(frozen=True)
class MatchingDistribution:
    """A finite law over matchings, stored as parallel arrays for fast
    vectorized sampling."""

    entries: tuple
    graph: Graph

    def __post_init__(self):
        if not self.entries:
            raise EmptySupport("matching distribution has no entries")
        weights = np.array([w for _, w in self.entries], dtype=float)
        if np.any(weights <= 0):
            raise InvalidMatching("matching weights must be strictly positive")
        if abs(weights.sum() - 1.0) > PROB_TOL:
            raise InvalidMatching(f"matching weights sum to {weights.sum()!r}, not 1")
        for m, _ in self.entries:
            if not m.respects(self.graph):
                raise InvalidMatching(f"matching {list(m.partner)} does not respect the graph")
        partners = np.array([m.partner for m, _ in self.entries], dtype=np.int64)
        cdf = np.cumsum(weights)
        cdf[-1] = 1.0
        partners.setflags(write=False)
        weights.setflags(write=False)
        cdf.setflags(write=False)
        object.__setattr__(self, "_partners", partners)
        object.__setattr__(self, "_weights", weights)
        object.__setattr__(self, "_cdf", cdf)

    enumerated = True

    @property
    def node_count(self) -> int:
        return self.graph.node_count

    @property
    def partners(self) -> np.ndarray:
        return self._partners

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def cdf(self) -> np.ndarray:
        return self._cdf

    def sample_index(self, rng: np.random.Generator, size=None):
        u = rng.random(size)
        idx = np.searchsorted(self._cdf, u, side="right")
        return np.minimum(idx, len(self.entries) - 1)

    def sample(self, rng: np.random.Generator) -> Matching:
        return self.entries[int(self.sample_index(rng))][0]


def uniform_distribution(matchings: Sequence[Matching], graph: Graph | None = None) -> MatchingDistribution:
    if not matchings:
        raise EmptySupport("cannot build a uniform distribution over zero matchings")
    if graph is None:
        n = matchings[0].node_count
        edges = {(min(i, j), max(i, j)) for m in matchings for i, j in enumerate(m.partner) if i != j}
        graph = Graph(n, frozenset(edges))
    w = 1.0 / len(matchings)
    return MatchingDistribution(tuple((m, w) for m in matchings), graph)


def explicit_distribution(graph: Graph, entries: Sequence[tuple[Sequence[int], float]]) -> MatchingDistribution:
    return MatchingDistribution(tuple((Matching(tuple(int(x) for x in p)), float(w)) for p, w in entries), graph)


@dataclass(frozen=True)
class AveragedMatrix:
    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("averaged matrix must be square")
        if np.any(a < -PROB_TOL) or np.any(a > 1 + PROB_TOL):
            raise ValueError("averaged matrix entries must lie in [0, 1]")
        if not np.allclose(a, a.T, atol=PROB_TOL, rtol=0):
            raise ValueError("averaged matrix must be symmetric")
        if np.max(np.abs(a.sum(axis=1) - 1)) > PROB_TOL or np.max(np.abs(a.sum(axis=0) - 1)) > PROB_TOL:
            raise ValueError("averaged matrix must be doubly stochastic")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def size(self) -> int:
        return self.entries.shape[0]


def averaged_matrix(dist: MatchingDistribution) -> AveragedMatrix:
    """Expected permutation matrix under the matching law."""
    n = dist.node_count
    a = np.zeros((n, n))
    rows = np.arange(n)
    for m, w in dist.entries:
        a[rows, list(m.partner)] += w
    return AveragedMatrix(a)


def check_irreducible_aperiodic(a_bar: AveragedMatrix) -> bool:
    """True iff the chain with kernel ``a_bar`` has one communicating class and
    period 1 (gcd of cycle lengths computed from BFS levels)."""
    pattern = a_bar.entries > 0
    n = pattern.shape[0]
    ncomp, _ = connected_components(csr_matrix(pattern), directed=True, connection="strong")
    if ncomp != 1:
        return False
    level = [-1] * n
    level[0] = 0
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(pattern[u]):
                if level[v] == -1:
                    level[v] = level[u] + 1
                    nxt.append(int(v))
        frontier = nxt
    period = 0
    for u in range(n):
        for v in np.flatnonzero(pattern[u]):
            period = math.gcd(period, level[u] + 1 - level[v])
    return period == 1

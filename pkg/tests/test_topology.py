import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gossipqcd.errors import DisconnectedGraph, EmptySupport, InvalidEdge, InvalidMatching
from gossipqcd.topology import (
    AveragedMatrix,
    Matching,
    averaged_matrix,
    build_graph,
    check_irreducible_aperiodic,
    complete_graph,
    enumerate_matchings,
    explicit_distribution,
    path_graph,
    uniform_distribution,
)

from . import oracles


@st.composite
def connected_graphs(draw, max_nodes=6):
    n = draw(st.integers(2, max_nodes))
    # random spanning tree, then extra edges
    edges = {(draw(st.integers(0, i - 1)), i) for i in range(1, n)}
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    edges |= set(draw(st.lists(st.sampled_from(pairs), max_size=len(pairs))))
    return build_graph(n, sorted(edges))


class TestGraph:
    def test_minimal_connected(self):
        g = build_graph(2, [(0, 1)])
        assert g.connected and g.has_edge(1, 0)

    def test_empty_edges_disconnected(self):
        with pytest.raises(DisconnectedGraph):
            build_graph(3, [])

    def test_k5(self):
        g = build_graph(5, [(i, j) for i in range(5) for j in range(i + 1, 5)])
        assert g == complete_graph(5)
        assert len(g.edges) == 10

    @pytest.mark.parametrize("edges", [[(0, 0)], [(0, 5)], [(-1, 1)]])
    def test_invalid_edges(self, edges):
        with pytest.raises(InvalidEdge):
            build_graph(3, edges + [(0, 1), (1, 2)])


class TestMatchings:
    def test_k2(self):
        assert [m.partner for m in enumerate_matchings(complete_graph(2))] == [(0, 1), (1, 0)]

    def test_path3(self):
        got = sorted(m.partner for m in enumerate_matchings(path_graph(3)))
        assert got == [(0, 1, 2), (0, 2, 1), (1, 0, 2)]

    def test_k3(self):
        assert len(enumerate_matchings(complete_graph(3))) == 4

    def test_k5_count(self):
        # 1 + C(5,2) + 5 * 3 perfect-on-four
        assert len(enumerate_matchings(complete_graph(5))) == 26

    def test_rejects_non_involution(self):
        with pytest.raises(InvalidMatching):
            Matching((1, 2, 0))

    @settings(max_examples=60, deadline=None)
    @given(connected_graphs())
    def test_count_matches_brute_force(self, g):
        got = sorted(m.partner for m in enumerate_matchings(g))
        assert got == oracles.brute_force_matchings(g.node_count, g.edges)


class TestDistribution:
    def test_uniform_weights(self):
        d = uniform_distribution(enumerate_matchings(complete_graph(3)))
        assert np.allclose(d.weights, 0.25)
        d2 = uniform_distribution(enumerate_matchings(complete_graph(2)))
        assert np.allclose(d2.weights, 0.5)

    def test_single_matching(self):
        d = uniform_distribution([Matching.identity(3)], complete_graph(3))
        assert d.weights[0] == 1.0

    def test_empty(self):
        with pytest.raises(EmptySupport):
            uniform_distribution([])

    def test_weights_must_sum_to_one(self):
        with pytest.raises(InvalidMatching):
            explicit_distribution(complete_graph(2), [((0, 1), 0.5), ((1, 0), 0.4)])

    def test_edge_respect(self):
        with pytest.raises(InvalidMatching):
            explicit_distribution(path_graph(3), [((2, 1, 0), 1.0)])

    @settings(max_examples=30, deadline=None)
    @given(connected_graphs(5), st.integers(0, 2**32 - 1))
    def test_samples_are_valid(self, g, seed):
        d = uniform_distribution(enumerate_matchings(g), g)
        rng = np.random.default_rng(seed)
        for _ in range(20):
            m = d.sample(rng)
            assert all(m.partner[m.partner[i]] == i for i in range(g.node_count))
            assert m.respects(g)

    def test_sampling_frequencies(self):
        g = path_graph(3)
        d = explicit_distribution(g, [((0, 1, 2), 0.2), ((1, 0, 2), 0.3), ((0, 2, 1), 0.5)])
        idx = d.sample_index(np.random.default_rng(5), 100_000)
        freq = np.bincount(idx, minlength=3) / 100_000
        se = np.sqrt(d.weights * (1 - d.weights) / 100_000)
        assert np.all(np.abs(freq - d.weights) < 4 * se)


class TestAveragedMatrix:
    def test_k2(self):
        a = averaged_matrix(uniform_distribution(enumerate_matchings(complete_graph(2))))
        assert np.allclose(a.entries, 0.5)

    def test_identity(self):
        a = averaged_matrix(uniform_distribution([Matching.identity(3)], complete_graph(3)))
        assert np.array_equal(a.entries, np.eye(3))

    def test_path3(self):
        a = averaged_matrix(uniform_distribution(enumerate_matchings(path_graph(3))))
        expected = np.array([[2, 1, 0], [1, 1, 1], [0, 1, 2]]) / 3
        assert np.allclose(a.entries, expected, atol=1e-15)

    def test_k5(self):
        a = averaged_matrix(uniform_distribution(enumerate_matchings(complete_graph(5))))
        assert np.allclose(np.diag(a.entries), 10 / 26)
        assert np.allclose(a.entries[~np.eye(5, dtype=bool)], 4 / 26)

    @settings(max_examples=40, deadline=None)
    @given(connected_graphs(8), st.integers(0, 2**32 - 1))
    def test_symmetric_doubly_stochastic(self, g, seed):
        ms = enumerate_matchings(g)
        w = np.random.default_rng(seed).random(len(ms)) + 0.01
        w /= w.sum()
        w[-1] = 1 - w[:-1].sum()
        d = explicit_distribution(g, [(m.partner, x) for m, x in zip(ms, w)])
        a = averaged_matrix(d).entries
        assert np.abs(a - a.T).max() <= 1e-12
        assert np.abs(a.sum(axis=0) - 1).max() <= 1e-12
        assert np.allclose(a, oracles.averaged_matrix(d.partners, d.weights), atol=1e-14)


class TestIrreducibility:
    def test_identity(self):
        assert not check_irreducible_aperiodic(AveragedMatrix(np.eye(3)))

    def test_k2(self):
        assert check_irreducible_aperiodic(AveragedMatrix(np.full((2, 2), 0.5)))

    def test_swap_has_period_two(self):
        assert not check_irreducible_aperiodic(AveragedMatrix(np.array([[0.0, 1.0], [1.0, 0.0]])))

    def test_walk_on_even_cycle_is_periodic(self):
        # bipartite: returns only at even times
        a = np.zeros((4, 4))
        for i in range(4):
            a[i, (i + 1) % 4] = a[i, (i - 1) % 4] = 0.5
        assert not check_irreducible_aperiodic(AveragedMatrix(a))

    @settings(max_examples=40, deadline=None)
    @given(connected_graphs(6))
    def test_uniform_over_all_matchings(self, g):
        assert check_irreducible_aperiodic(averaged_matrix(uniform_distribution(enumerate_matchings(g), g)))

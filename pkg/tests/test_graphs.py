"""Graph containers and samplers."""

import numpy as np
import pytest

from nar_lab.errors import GenerationError, ParameterError
from nar_lab.graphs import (Graph, induced_subgraph, is_connected, line_graph,
                            sample_er, sample_k_regular, sample_two_community_pair)
from nar_lab.rng import Rng


class TestGraphValidation:
    def test_rejects_self_loop(self):
        with pytest.raises(ParameterError):
            Graph(n=3, edges=[(1, 1, 1.0)])

    def test_rejects_out_of_range(self):
        with pytest.raises(ParameterError):
            Graph(n=3, edges=[(0, 3, 1.0)])

    def test_rejects_duplicate(self):
        with pytest.raises(ParameterError):
            Graph(n=3, edges=[(0, 1, 1.0), (0, 1, 2.0)])

    def test_undirected_requires_low_high_storage(self):
        with pytest.raises(ParameterError):
            Graph(n=3, edges=[(2, 0, 1.0)], directed=False)
        # directed graphs keep any orientation
        Graph(n=3, edges=[(2, 0, 1.0)], directed=True)

    def test_rejects_non_finite_weight(self):
        with pytest.raises(ParameterError):
            Graph(n=2, edges=[(0, 1, float("nan"))])

    def test_rejects_empty_node_set(self):
        with pytest.raises(ParameterError):
            Graph(n=0, edges=[])


class TestGraphViews:
    def test_adjacency_symmetric_when_undirected(self):
        g = Graph(n=3, edges=[(0, 1, 1.0), (1, 2, 1.0)])
        a = g.adjacency()
        assert np.array_equal(a, a.T)
        assert a[0, 1] == 1 and a[0, 2] == 0

    def test_adjacency_directed(self):
        g = Graph(n=2, edges=[(1, 0, 1.0)], directed=True)
        a = g.adjacency()
        assert a[1, 0] == 1 and a[0, 1] == 0

    def test_weight_matrix_absent_marker(self):
        g = Graph(n=3, edges=[(0, 1, 0.25)])
        w = g.weight_matrix()
        assert w[0, 1] == 0.25 and w[1, 0] == 0.25
        assert np.isinf(w[0, 2]) and w[0, 0] == 0.0

    def test_edge_index_both_ways_when_undirected(self):
        g = Graph(n=3, edges=[(0, 2, 1.0)])
        idx = g.edge_index()
        assert idx[(0, 2)] == 0 and idx[(2, 0)] == 0


class TestSamplers:
    def test_er_reproducible(self):
        g1 = sample_er(10, 0.4, Rng(3))
        g2 = sample_er(10, 0.4, Rng(3))
        assert g1.edges == g2.edges

    def test_er_edge_count_concentrates(self):
        # 200 draws of G(16, 0.5): mean edge count near n(n-1)p/2 = 60
        rng = Rng(5)
        counts = [sample_er(16, 0.5, rng.child(i)).m for i in range(200)]
        assert 57.0 < float(np.mean(counts)) < 63.0

    def test_er_canonical_storage(self):
        g = sample_er(12, 0.5, Rng(7))
        assert all(u < v for u, v, _ in g.edges)

    def test_er_extremes(self):
        assert sample_er(6, 0.0, Rng(1)).m == 0
        assert sample_er(6, 1.0, Rng(1)).m == 15

    def test_er_rejects_bad_p(self):
        with pytest.raises(ParameterError):
            sample_er(5, 1.5, Rng(0))

    def test_k_regular_degrees_exact(self):
        rng = Rng(11)
        for i in range(20):
            g = sample_k_regular(16, 4, rng.child(i))
            deg = np.zeros(16, dtype=int)
            for u, v, _ in g.edges:
                deg[u] += 1
                deg[v] += 1
            assert np.all(deg == 4)

    def test_k_regular_simple(self):
        g = sample_k_regular(12, 3, Rng(13))
        seen = set()
        for u, v, _ in g.edges:
            assert u != v and (u, v) not in seen
            seen.add((u, v))

    def test_k_regular_infeasible(self):
        # nk must be even
        with pytest.raises((ParameterError, GenerationError)):
            sample_k_regular(5, 3, Rng(0))


class TestTwoCommunityPairs:
    def test_structural_invariant(self):
        rng = Rng(17)
        for i in range(40):
            pair = sample_two_community_pair(8, 0.6, rng.child(i))
            ei_s = pair.single.edge_index()
            ei_d = pair.double.edge_index()
            assert pair.probe_edge in ei_s and pair.probe_edge in ei_d
            # exactly one more cross edge in the double graph
            assert pair.double.m == pair.single.m + 1
            side = pair.communities
            cross_s = [e for e in pair.single.edges if side[e[0]] != side[e[1]]]
            cross_d = [e for e in pair.double.edges if side[e[0]] != side[e[1]]]
            assert len(cross_s) == 1 and len(cross_d) == 2
            assert is_connected(pair.single) and is_connected(pair.double)

    def test_reproducible(self):
        a = sample_two_community_pair(6, 0.7, Rng(23))
        b = sample_two_community_pair(6, 0.7, Rng(23))
        assert a.single.edges == b.single.edges and a.double.edges == b.double.edges


class TestTransforms:
    def test_induced_subgraph_keeps_internal_edges(self):
        g = Graph(n=5, edges=[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (0, 4, 1.0)])
        sub = induced_subgraph(g, [0, 1, 2])
        assert sub.n == 3
        assert sorted((u, v) for u, v, _ in sub.edges) == [(0, 1), (1, 2)]

    def test_induced_subgraph_relabels_contiguously(self):
        g = Graph(n=5, edges=[(1, 3, 0.5)])
        sub = induced_subgraph(g, [1, 3])
        assert sub.n == 2 and sub.edges == [(0, 1, 0.5)]

    def test_line_graph_adjacency_shares_endpoint(self):
        # path 0-1-2-3: line nodes (01),(12),(23); consecutive ones touch
        g = Graph(n=4, edges=[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)])
        lg = line_graph(g)
        assert lg.n == 3
        assert sorted(lg.edges) == [(0, 1), (1, 2)]

    def test_line_graph_of_triangle_is_triangle(self):
        g = Graph(n=3, edges=[(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)])
        lg = line_graph(g)
        assert lg.n == 3 and len(lg.edges) == 3

    def test_line_graph_random_cross_check(self):
        rng = Rng(29)
        for i in range(15):
            g = sample_er(9, 0.4, rng.child(i))
            lg = line_graph(g)
            assert lg.n == g.m
            pairs = set()
            for a in range(g.m):
                ua, va, _ = g.edges[a]
                for b in range(a + 1, g.m):
                    ub, vb, _ = g.edges[b]
                    if {ua, va} & {ub, vb}:
                        pairs.add((a, b))
            assert {tuple(sorted(e)) for e in lg.edges} == pairs

    def test_is_connected(self):
        assert is_connected(Graph(n=3, edges=[(0, 1, 1.0), (1, 2, 1.0)]))
        assert not is_connected(Graph(n=3, edges=[(0, 1, 1.0)]))
        assert is_connected(Graph(n=1, edges=[]))

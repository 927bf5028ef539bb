import numpy as np
import pytest

from dcanet.errors import DomainError, ParseError
from dcanet.graphs import (
    Graph,
    build_pair,
    gen_power_law_graph,
    hub_knockout,
    neighborhood,
    read_edge_list,
    write_edge_list,
)
from dcanet.numerics import extreme_eigenvalues


class TestGraphType:
    def test_edges_normalized(self):
        g = Graph(4, frozenset({(3, 1), (0, 2)}))
        assert g.edges == frozenset({(1, 3), (0, 2)})

    def test_self_loop_rejected(self):
        with pytest.raises(DomainError):
            Graph(4, frozenset({(1, 1)}))

    def test_out_of_range_rejected(self):
        with pytest.raises(DomainError):
            Graph(3, frozenset({(0, 3)}))

    def test_degrees(self):
        g = Graph(4, frozenset({(0, 1), (0, 2), (0, 3)}))
        assert list(g.degrees()) == [3, 1, 1, 1]

    def test_neighborhood(self):
        g = Graph(5, frozenset({(0, 1), (1, 3), (2, 4)}))
        assert neighborhood(g, 1) == frozenset({0, 3})
        assert neighborhood(g, 4) == frozenset({2})
        with pytest.raises(DomainError):
            neighborhood(g, 5)


class TestPowerLawGraph:
    def test_exact_edge_count(self):
        for seed in range(5):
            g = gen_power_law_graph(50, 100, 5.0, seed)
            assert len(g.edges) == 100
            assert all(0 <= a < b < 50 for a, b in g.edges)

    def test_deterministic(self):
        a = gen_power_law_graph(30, 60, 5.0, 12)
        b = gen_power_law_graph(30, 60, 5.0, 12)
        c = gen_power_law_graph(30, 60, 5.0, 13)
        assert a.edges == b.edges
        assert a.edges != c.edges

    def test_minimal_case(self):
        g = gen_power_law_graph(2, 1, 5.0, 0)
        assert g.edges == frozenset({(0, 1)})

    def test_parameter_validation(self):
        with pytest.raises(DomainError):
            gen_power_law_graph(1, 1, 5.0, 0)
        with pytest.raises(DomainError):
            gen_power_law_graph(5, 0, 5.0, 0)
        with pytest.raises(DomainError):
            gen_power_law_graph(5, 11, 5.0, 0)
        with pytest.raises(DomainError):
            gen_power_law_graph(5, 4, 1.0, 0)

    def test_heavy_tail_produces_hubs(self):
        # At this density the rescaled sequence should give at least one
        # node several times the mean degree in most draws.
        maxima = []
        for seed in range(10):
            g = gen_power_law_graph(50, 100, 5.0, seed)
            maxima.append(int(g.degrees().max()))
        assert max(maxima) >= 8


class TestHubKnockout:
    def test_edge_count_preserved(self):
        g = gen_power_law_graph(40, 80, 5.0, 3)
        h = hub_knockout(g, hub_pool=20, knockout=8, seed=4)
        assert len(h.edges) == len(g.edges)
        assert h.p == g.p

    def test_zero_knockout_is_identity(self):
        g = gen_power_law_graph(20, 30, 5.0, 5)
        h = hub_knockout(g, hub_pool=10, knockout=0, seed=9)
        assert h.edges == g.edges

    def test_deterministic(self):
        g = gen_power_law_graph(40, 80, 5.0, 6)
        a = hub_knockout(g, 20, 8, seed=1)
        b = hub_knockout(g, 20, 8, seed=1)
        c = hub_knockout(g, 20, 8, seed=2)
        assert a.edges == b.edges
        assert a.edges != c.edges

    def test_rewires_top_degree_nodes(self):
        g = gen_power_law_graph(40, 80, 5.0, 7)
        h = hub_knockout(g, hub_pool=5, knockout=5, seed=2)
        # All five pool members were knocked out, so any of their g-edges
        # present in h must be randomly re-added ones; the bulk vanish.
        deg = g.degrees()
        pool = sorted(range(g.p), key=lambda i: (-deg[i], i))[:5]
        removed = {e for e in g.edges if e[0] in pool or e[1] in pool}
        assert len(removed & h.edges) < len(removed)

    def test_validation(self):
        g = gen_power_law_graph(10, 12, 5.0, 0)
        with pytest.raises(DomainError):
            hub_knockout(g, 5, 6, seed=0)
        with pytest.raises(DomainError):
            hub_knockout(g, 11, 2, seed=0)


class TestBuildPair:
    def test_empty_graphs_give_scaled_identity(self):
        g = Graph(4, frozenset())
        m1, m2 = build_pair(g, g, magnitude=0.5, min_eig=0.1, seed=0)
        assert np.array_equal(m1.omega, 0.1 * np.eye(4))
        assert np.array_equal(m2.omega, 0.1 * np.eye(4))

    def test_support_matches_graphs(self):
        g1 = gen_power_law_graph(25, 40, 5.0, 1)
        g2 = hub_knockout(g1, 12, 5, seed=2)
        m1, m2 = build_pair(g1, g2, 0.5, 0.1, seed=3)
        for model, graph in ((m1, g1), (m2, g2)):
            off = np.abs(np.triu(model.omega, 1)) > 0
            edges = {(int(a), int(b)) for a, b in zip(*np.nonzero(off))}
            assert edges == set(graph.edges)

    def test_shared_edges_share_values(self):
        g1 = gen_power_law_graph(25, 40, 5.0, 4)
        g2 = hub_knockout(g1, 12, 5, seed=5)
        m1, m2 = build_pair(g1, g2, 0.5, 0.1, seed=6)
        for a, b in g1.edges & g2.edges:
            assert m1.omega[a, b] == m2.omega[a, b]
        for a, b in g2.edges - g1.edges:
            assert abs(m2.omega[a, b]) == 0.5

    def test_minimum_eigenvalue_hit(self):
        g1 = gen_power_law_graph(30, 60, 5.0, 7)
        g2 = hub_knockout(g1, 15, 6, seed=8)
        for model in build_pair(g1, g2, 0.5, 0.1, seed=9):
            lo, _ = extreme_eigenvalues(model.omega)
            assert abs(lo - 0.1) < 1e-8

    def test_sigma_is_inverse(self):
        g1 = gen_power_law_graph(15, 25, 5.0, 10)
        m1, _ = build_pair(g1, g1, 0.5, 0.1, seed=11)
        assert np.max(np.abs(m1.omega @ m1.sigma - np.eye(15))) < 1e-8
        assert np.array_equal(m1.sigma, m1.sigma.T)

    def test_validation(self):
        g = Graph(3, frozenset())
        with pytest.raises(DomainError):
            build_pair(g, Graph(4, frozenset()), 0.5, 0.1, seed=0)
        with pytest.raises(DomainError):
            build_pair(g, g, 0.0, 0.1, seed=0)
        with pytest.raises(DomainError):
            build_pair(g, g, 0.5, -0.1, seed=0)


class TestSerialization:
    def test_round_trip(self):
        g = gen_power_law_graph(12, 15, 5.0, 13)
        assert read_edge_list(write_edge_list(g)) == g

    def test_format(self):
        g = Graph(3, frozenset({(0, 2), (0, 1)}))
        assert write_edge_list(g) == "p=3\n0,1\n0,2\n"

    def test_parse_errors(self):
        with pytest.raises(ParseError):
            read_edge_list("0,1\n")
        with pytest.raises(ParseError):
            read_edge_list("p=three\n")
        with pytest.raises(ParseError):
            read_edge_list("p=3\n1,1\n")
        with pytest.raises(ParseError):
            read_edge_list("p=3\n0,4\n")
        with pytest.raises(ParseError):
            read_edge_list("p=3\n0,1\n1,0\n")
        with pytest.raises(ParseError):
            read_edge_list("p=3\n0;1\n")

import numpy as np
import pytest

from dcanet.dca import (
    CvPolicy,
    DcaConfig,
    FixedPolicy,
    NodeTestResult,
    dca_network,
    differential_edges,
    estimate_common_neighborhood,
    partners_at,
)
from dcanet.dca import test_node as run_node_test
from dcanet.errors import DomainError, ZeroVarianceColumn
from dcanet.inference import PValueSet, sidak_level
from dcanet.numerics import sample_mvn


def _toy_data(toy, n, seed):
    x1 = sample_mvn(toy["sigma1"], n, seed=seed)
    x2 = sample_mvn(toy["sigma2"], n, seed=seed + 1)
    return x1, x2


class TestConfig:
    def test_defaults(self):
        cfg = DcaConfig()
        assert cfg.alpha == 0.1
        assert isinstance(cfg.lambda_policy, CvPolicy)

    def test_validation(self):
        with pytest.raises(DomainError):
            DcaConfig(alpha=0.0)
        with pytest.raises(DomainError):
            DcaConfig(estimation_mode="half")
        with pytest.raises(DomainError):
            DcaConfig(test_kind="pairwise")
        with pytest.raises(DomainError):
            DcaConfig(edge_rule="xor")
        with pytest.raises(DomainError):
            DcaConfig(test_kind="group", perms=50)
        with pytest.raises(DomainError):
            DcaConfig(seed=-1)
        with pytest.raises(DomainError):
            CvPolicy(folds=1)
        with pytest.raises(DomainError):
            FixedPolicy(lam1=-0.1, lam2=0.1)


class TestCommonNeighborhood:
    def test_toy_recovery(self, toy):
        # In the first population every pair is conditionally dependent,
        # in the second only (0, 1) is, so the intersections are {1}, {0}
        # and empty.
        hits = 0
        for seed in range(40, 45):
            x1, x2 = _toy_data(toy, 10_000, seed=seed)
            cfg = DcaConfig(seed=7)
            expected = [frozenset({1}), frozenset({0}), frozenset()]
            got = []
            for j in range(3):
                common, (t1, t2) = estimate_common_neighborhood(x1, x2, j, cfg)
                got.append(common)
                assert t1.shape == x1.shape
            hits += got == expected
        assert hits >= 4

    def test_identical_datasets_intersection_is_support(self, toy):
        from dcanet.lasso import estimated_neighborhood, lasso_cd

        x1, _ = _toy_data(toy, 800, seed=39)
        cfg = DcaConfig(lambda_policy=FixedPolicy(lam1=0.1, lam2=0.1))
        common, _ = estimate_common_neighborhood(x1, x1.copy(), 0, cfg)
        assert common == estimated_neighborhood(lasso_cd(x1, 0, 0.1))

    def test_naive_returns_full_rows(self, toy):
        x1, x2 = _toy_data(toy, 200, seed=41)
        _, (t1, t2) = estimate_common_neighborhood(x1, x2, 0, DcaConfig())
        assert t1.shape[0] == 200 and t2.shape[0] == 200

    def test_split_partitions_rows(self, toy):
        x1, x2 = _toy_data(toy, 201, seed=42)
        cfg = DcaConfig(estimation_mode="split", seed=3)
        _, (t1, t2) = estimate_common_neighborhood(x1, x2, 0, cfg)
        # Odd n: estimation keeps the extra row, the test half gets floor.
        assert t1.shape[0] == 100 and t2.shape[0] == 100

    def test_split_halves_are_disjoint(self, toy):
        x1, x2 = _toy_data(toy, 100, seed=43)
        cfg = DcaConfig(estimation_mode="split", seed=5)
        _, (t1, _) = estimate_common_neighborhood(x1, x2, 0, cfg)
        # Every test row must be an original row, used exactly once.
        seen = {tuple(row) for row in t1}
        pool = {tuple(row) for row in x1}
        assert seen <= pool and len(seen) == 50

    def test_fixed_policy_respected(self, toy):
        x1, x2 = _toy_data(toy, 500, seed=44)
        huge = FixedPolicy(lam1=10.0, lam2=10.0)
        common, _ = estimate_common_neighborhood(x1, x2, 0, DcaConfig(lambda_policy=huge))
        assert common == frozenset()


class TestNodeTest:
    def test_toy_node_two_rejected(self, toy):
        # Node 2 keeps both partners in the first population and loses
        # them in the second; with an empty common neighborhood the
        # individual tests must flag it.
        hits = 0
        for seed in range(50, 60):
            x1, x2 = _toy_data(toy, 500, seed=seed)
            res = run_node_test(x1, x2, 2, frozenset(), DcaConfig())
            hits += res.reject
            assert res.candidates == (0, 1)
        assert hits >= 9

    def test_toy_node_two_full_pipeline(self, toy):
        # End to end at large n: estimation first, then the node test.
        from dcanet.dca import estimate_common_neighborhood as est

        hits = 0
        for seed in range(30, 36):
            x1, x2 = _toy_data(toy, 10_000, seed=seed)
            cfg = DcaConfig(seed=seed)
            common, (t1, t2) = est(x1, x2, 2, cfg)
            res = run_node_test(t1, t2, 2, common, cfg)
            hits += res.reject
        assert hits >= 5

    def test_empty_candidates_trivial(self, toy):
        x1, x2 = _toy_data(toy, 100, seed=60)
        res = run_node_test(x1, x2, 0, frozenset({1, 2}), DcaConfig())
        assert res.node_pvalue == 1.0
        assert not res.reject
        assert res.candidates == ()
        assert res.pvalues.pvalues.shape == (0,)

    def test_labels_cover_both_populations(self, toy):
        x1, x2 = _toy_data(toy, 200, seed=61)
        res = run_node_test(x1, x2, 0, frozenset({1}), DcaConfig())
        assert res.candidates == (2,)
        assert res.pvalues.labels == ((1, 2), (2, 2))

    def test_node_pvalue_is_min_adjusted(self, toy):
        x1, x2 = _toy_data(toy, 300, seed=62)
        res = run_node_test(x1, x2, 1, frozenset({0}), DcaConfig())
        assert res.node_pvalue == pytest.approx(float(np.min(res.pvalues.adjusted)))
        assert res.reject == (res.node_pvalue <= sidak_level(0.1))

    def test_group_mode(self, toy):
        x1, x2 = _toy_data(toy, 400, seed=63)
        cfg = DcaConfig(test_kind="group", perms=199, seed=11)
        res = run_node_test(x1, x2, 2, frozenset(), cfg)
        assert res.pvalues.labels == ((1, None), (2, None))
        assert res.differential_partners == frozenset()
        smallest = float(np.min(res.pvalues.pvalues))
        assert res.node_pvalue == pytest.approx(1.0 - (1.0 - smallest) ** 2)
        assert res.reject

    def test_group_mode_deterministic(self, toy):
        x1, x2 = _toy_data(toy, 200, seed=64)
        cfg = DcaConfig(test_kind="group", perms=199, seed=12)
        a = run_node_test(x1, x2, 0, frozenset({1}), cfg)
        b = run_node_test(x1, x2, 0, frozenset({1}), cfg)
        assert np.array_equal(a.pvalues.pvalues, b.pvalues.pvalues)


class TestEdgeHelpers:
    @staticmethod
    def _fake_result(node, labels, adjusted):
        pset = PValueSet(
            labels=tuple(labels),
            pvalues=np.asarray(adjusted, dtype=float),
            adjusted=np.asarray(adjusted, dtype=float),
        )
        return NodeTestResult(
            node=node,
            common_neighborhood=frozenset(),
            candidates=tuple(k for _, k in labels),
            pvalues=pset,
            reject=True,
            node_pvalue=float(np.min(adjusted)),
            differential_partners=frozenset(),
        )

    def test_or_and_rules(self):
        lo = sidak_level(0.1) / 2
        # Node 0 names 1; node 1 names 0; node 2 names 0 unreciprocated.
        results = [
            self._fake_result(0, [(1, 1), (1, 2)], [lo, 0.9]),
            self._fake_result(1, [(1, 0)], [lo]),
            self._fake_result(2, [(1, 0)], [lo]),
        ]
        either = differential_edges(results, "or", 0.1)
        both = differential_edges(results, "and", 0.1)
        assert either == frozenset({(0, 1), (0, 2)})
        assert both == frozenset({(0, 1)})
        assert both <= either

    def test_partners_at_respects_level(self):
        res = self._fake_result(0, [(1, 1), (2, 2)], [0.02, 0.2])
        assert partners_at(res, 0.1) == frozenset({1})
        assert partners_at(res, 0.9) == frozenset({1, 2})

    def test_error_nodes_have_no_partners(self):
        res = self._fake_result(0, [(1, 1)], [0.001])
        marked = NodeTestResult(
            node=0,
            common_neighborhood=frozenset(),
            candidates=(),
            pvalues=res.pvalues,
            reject=False,
            node_pvalue=1.0,
            differential_partners=frozenset(),
            error="boom",
        )
        assert partners_at(marked, 0.1) == frozenset()

    def test_bad_rule(self):
        with pytest.raises(DomainError):
            differential_edges([], "xor", 0.1)


class TestNetwork:
    def test_toy_network_individual(self, toy):
        # Edges (0,2) and (1,2) exist only in the first population while
        # (0,1) is common, so the OR rule should name the former pair
        # and not the latter.
        hits_edges = 0
        hits_01_absent = 0
        for seed in range(70, 75):
            x1, x2 = _toy_data(toy, 10_000, seed=seed)
            res = dca_network(x1, x2, DcaConfig(seed=1))
            assert len(res.nodes) == 3
            hits_edges += res.differential_edges >= {(0, 2), (1, 2)}
            hits_01_absent += (0, 1) not in res.differential_edges
        assert hits_edges >= 4
        assert hits_01_absent >= 4

    def test_same_model_per_node_calibration(self):
        # Both populations share one precision matrix, so every node is
        # null and rejection frequencies must sit near the level.
        from dcanet.dca import estimate_common_neighborhood as est
        from dcanet.graphs import Graph, build_pair
        from dcanet.numerics import invert_spd

        g = Graph(10, [(j, j + 1) for j in range(9)] + [(0, 9), (2, 7)])
        model, _ = build_pair(g, g, 0.5, 0.1, seed=0)
        sigma = invert_spd(model.omega)
        reps = 100
        rejections = np.zeros(10)
        for rep in range(reps):
            x1 = sample_mvn(sigma, 400, seed=3000 + 2 * rep)
            x2 = sample_mvn(sigma, 400, seed=3001 + 2 * rep)
            cfg = DcaConfig(seed=rep)
            for j in range(10):
                common, (t1, t2) = est(x1, x2, j, cfg)
                rejections[j] += run_node_test(t1, t2, j, common, cfg).reject
        assert np.all(rejections / reps <= 0.15)

    def test_complete_equal_models_network_level(self):
        from dcanet.graphs import Graph, build_pair
        from dcanet.numerics import invert_spd

        g = Graph(3, [(0, 1), (0, 2), (1, 2)])
        model, _ = build_pair(g, g, 0.5, 0.1, seed=1)
        sigma = invert_spd(model.omega)
        hits = 0
        reps = 200
        for rep in range(reps):
            x1 = sample_mvn(sigma, 300, seed=7000 + 2 * rep)
            x2 = sample_mvn(sigma, 300, seed=7001 + 2 * rep)
            hits += dca_network(x1, x2, DcaConfig(seed=rep)).network_reject
        assert hits / reps <= 0.1 + 0.05

    def test_null_network_mostly_quiet(self):
        # Same distribution in both populations: rejections should be rare.
        sigma = np.eye(4)
        hits = 0
        for seed in range(80, 90):
            x1 = sample_mvn(sigma, 300, seed=seed)
            x2 = sample_mvn(sigma, 300, seed=seed + 100)
            res = dca_network(x1, x2, DcaConfig(seed=2))
            hits += res.network_reject
        assert hits <= 3

    def test_deterministic(self, toy):
        x1, x2 = _toy_data(toy, 300, seed=71)
        cfg = DcaConfig(estimation_mode="split", seed=9)
        a = dca_network(x1, x2, cfg)
        b = dca_network(x1, x2, cfg)
        assert a.differential_nodes == b.differential_nodes
        for ra, rb in zip(a.nodes, b.nodes):
            assert ra.node_pvalue == rb.node_pvalue
            assert ra.common_neighborhood == rb.common_neighborhood

    def test_threads_match_serial(self, toy):
        x1, x2 = _toy_data(toy, 300, seed=72)
        cfg = DcaConfig(seed=4)
        serial = dca_network(x1, x2, cfg, threads=1)
        parallel = dca_network(x1, x2, cfg, threads=3)
        for ra, rb in zip(serial.nodes, parallel.nodes):
            assert ra.node_pvalue == rb.node_pvalue
        assert serial.differential_nodes == parallel.differential_nodes

    def test_zero_variance_column_excluded(self, toy):
        x1, x2 = _toy_data(toy, 300, seed=73)
        x1 = np.column_stack([x1, np.ones(300)])
        x2 = np.column_stack([x2, np.full(300, 2.0)])
        with pytest.warns(ZeroVarianceColumn):
            res = dca_network(x1, x2, DcaConfig(seed=5))
        assert res.nodes[3].error is not None
        for r in res.nodes[:3]:
            assert r.error is None
            assert 3 not in r.candidates
            assert 3 not in r.common_neighborhood
        assert 3 not in res.differential_nodes

    def test_error_nodes_skipped_not_fatal(self):
        # A tiny penalty makes the estimated neighborhoods huge, leaving
        # too few residual degrees of freedom, which must surface as
        # per-node error markers rather than an exception.
        rng = np.random.default_rng(90)
        x1 = rng.standard_normal((24, 30))
        x2 = rng.standard_normal((24, 30))
        cfg = DcaConfig(lambda_policy=FixedPolicy(lam1=1e-4, lam2=1e-4))
        res = dca_network(x1, x2, cfg)
        assert any(r.error is not None for r in res.nodes)

    def test_split_mode_tests_held_out_half(self, toy):
        x1, x2 = _toy_data(toy, 400, seed=74)
        res = dca_network(x1, x2, DcaConfig(estimation_mode="split", seed=6))
        assert len(res.nodes) == 3

    def test_group_mode_has_no_edges(self, toy):
        x1, x2 = _toy_data(toy, 300, seed=75)
        cfg = DcaConfig(test_kind="group", perms=99, seed=7)
        res = dca_network(x1, x2, cfg)
        assert res.differential_edges == frozenset()

    def test_and_rule_runs_at_alpha(self, toy):
        x1, x2 = _toy_data(toy, 1000, seed=76)
        res_or = dca_network(x1, x2, DcaConfig(edge_rule="or", seed=8))
        res_and = dca_network(x1, x2, DcaConfig(edge_rule="and", seed=8))
        same_level_or = differential_edges(res_and.nodes, "or", 0.1)
        assert res_and.differential_edges <= same_level_or

    def test_input_validation(self):
        good = np.random.default_rng(0).standard_normal((30, 3))
        with pytest.raises(DomainError):
            dca_network(good, good[:, :2], DcaConfig())
        with pytest.raises(DomainError):
            dca_network(good[:, :1], good[:, :1], DcaConfig())
        with pytest.raises(DomainError):
            dca_network(good[:10], good, DcaConfig())
        bad = good.copy()
        bad[0, 0] = np.nan
        with pytest.raises(DomainError):
            dca_network(bad, good, DcaConfig())

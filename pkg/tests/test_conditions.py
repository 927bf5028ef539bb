import math

import numpy as np
import pytest

from dcanet.conditions import (
    ConditionReport,
    a2_quantities,
    a3_quantities,
    condition_report,
    population_coefficients,
    restricted_eigenvalue,
)
from dcanet.errors import DimensionTooLarge, DomainError


def random_spd(rng, d):
    b = rng.standard_normal((d + 3, d))
    return b.T @ b / (d + 3) + 0.05 * np.eye(d)


@pytest.fixture
def leaky_sigma():
    # Regression of variable 0 on {1,2} with a third predictor that is
    # correlated 0.6 with both: the dual at coordinate 3 equals 1.2 for
    # any penalty, so the noiseless fit always over-selects it.
    c = np.array([[1.0, 0.0, 0.6], [0.0, 1.0, 0.6], [0.6, 0.6, 1.0]])
    beta = np.array([1.0, 1.0, 0.0])
    sig = np.zeros((4, 4))
    sig[1:, 1:] = c
    sig[0, 0] = beta @ c @ beta + 0.25
    sig[0, 1:] = c @ beta
    sig[1:, 0] = c @ beta
    return sig


class TestPopulationCoefficients:
    def test_toy_values(self, toy):
        beta = population_coefficients(toy["omega1"], 0)
        assert np.allclose(beta, [-0.5, -0.5], atol=1e-15)

    def test_zero_column(self, toy):
        assert np.allclose(population_coefficients(toy["omega2"], 2), 0.0, atol=1e-15)

    def test_validation(self, toy):
        with pytest.raises(DomainError):
            population_coefficients(toy["omega1"], 3)


class TestA2:
    def test_worked_example(self, toy):
        got = a2_quantities(toy["omega1"], 0, 0.1, 100)
        expected = (
            0.2,
            math.sqrt(math.log(3) / 100) * 2 / 0.1,
            0.1 * math.sqrt(2) / 0.5,
        )
        for g, e in zip(got, expected):
            assert g == pytest.approx(e, abs=1e-12)
        assert got[1] == pytest.approx(2.0963, abs=1e-4)
        assert got[2] == pytest.approx(0.28284, abs=1e-5)

    def test_empty_support(self, toy):
        first, second, third = a2_quantities(toy["omega2"], 2, 0.1, 100)
        assert first == 0.0 and second == 0.0
        assert math.isinf(third)

    def test_lambda_linearity(self, toy):
        base = a2_quantities(toy["omega1"], 1, 0.07, 250)
        double = a2_quantities(toy["omega1"], 1, 0.14, 250)
        assert double[0] == 2.0 * base[0]
        assert double[2] == 2.0 * base[2]

    def test_validation(self, toy):
        with pytest.raises(DomainError):
            a2_quantities(toy["omega1"], 0, 0.0, 100)
        with pytest.raises(DomainError):
            a2_quantities(toy["omega1"], 0, 0.1, 0)


class TestA3:
    def test_zero_column(self, toy):
        sup, margin, third = a3_quantities(toy["sigma2"], 2, 0.3)
        assert sup == 0.0 and margin == 1.0
        assert math.isinf(third)

    def test_small_lambda_covers_support(self, toy):
        sup, margin, third = a3_quantities(toy["sigma1"], 0, 0.05)
        assert 0.0 < margin <= 1.0
        assert sup + margin == 1.0

    def test_above_lambda_max(self, toy):
        # The zero fit leaves tau = sigma_{-j,j} / lambda.
        sup, margin, third = a3_quantities(toy["sigma1"], 0, 0.6)
        assert sup == pytest.approx(0.5 / 0.6, abs=1e-15)
        assert math.isinf(third)

    def test_margin_complement_exact(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            sigma = random_spd(rng, 5)
            lam = float(rng.uniform(0.01, 0.6))
            sup, margin, _ = a3_quantities(sigma, 0, lam)
            assert sup + margin == 1.0

    def test_false_selection_reported(self, leaky_sigma):
        sup, margin, third = a3_quantities(leaky_sigma, 0, 0.2)
        assert math.isfinite(third)
        # The rescaled dual at the falsely selected coordinate solves
        # C v = (1,1,1), whose last entry is -5/7.
        assert third == pytest.approx(5.0 / 7.0, abs=1e-6)


class TestRestrictedEigenvalue:
    def test_identity_is_one(self):
        for d, sup in ((5, [0]), (6, [0, 3]), (8, [1, 4, 6])):
            val = restricted_eigenvalue(np.eye(d), sup, 3.0)
            assert val == pytest.approx(1.0, abs=1e-6)

    def test_floor_on_random_spd(self):
        rng = np.random.default_rng(33)
        for _ in range(15):
            d = int(rng.integers(3, 11))
            a = random_spd(rng, d)
            q = int(rng.integers(1, min(3, d - 1) + 1))
            sup = sorted(rng.choice(d, size=q, replace=False).tolist())
            floor = np.linalg.eigvalsh(a)[0]
            assert restricted_eigenvalue(a, sup, 3.0) >= floor - 1e-6

    def test_toy_sigma_bounded_below(self, toy):
        val = restricted_eigenvalue(toy["sigma1"], [0], 3.0)
        assert val >= 0.5 - 1e-6

    def test_duplicated_columns_collapse(self):
        rng = np.random.default_rng(7)
        b = rng.standard_normal((20, 5))
        b[:, 3] = b[:, 2]
        a = b.T @ b / 20
        assert restricted_eigenvalue(a, [2], 3.0) <= 1e-8

    def test_full_support_is_min_eigenvalue(self, toy):
        sub = toy["sigma1"][np.ix_([1, 2], [1, 2])]
        val = restricted_eigenvalue(sub, [0, 1], 3.0)
        assert val == pytest.approx(np.linalg.eigvalsh(sub)[0], abs=1e-12)

    def test_deterministic(self):
        rng = np.random.default_rng(55)
        a = random_spd(rng, 7)
        assert restricted_eigenvalue(a, [1, 5], 3.0) == restricted_eigenvalue(a, [1, 5], 3.0)

    def test_dimension_cap(self):
        with pytest.raises(DimensionTooLarge):
            restricted_eigenvalue(np.eye(16), [0], 3.0)

    def test_validation(self):
        with pytest.raises(DomainError):
            restricted_eigenvalue(np.eye(5), [], 3.0)
        with pytest.raises(DomainError):
            restricted_eigenvalue(np.eye(5), [7], 3.0)
        with pytest.raises(DomainError):
            restricted_eigenvalue(np.eye(5), [0], 0.0)


class TestConditionReport:
    def test_toy_bundle(self, toy):
        rep = condition_report(toy["sigma1"], 0, 0.1, 100)
        assert isinstance(rep, ConditionReport)
        assert rep.q == 2
        assert rep.b_min == pytest.approx(0.5, abs=1e-12)
        assert rep.a2_terms[0] == pytest.approx(0.2, abs=1e-12)
        assert rep.a3_terms[0] + rep.a3_terms[1] == 1.0
        # With both off-target nodes in the support the cone search
        # degenerates to the plain minimum eigenvalue of the submatrix.
        sub = toy["sigma1"][np.ix_([1, 2], [1, 2])]
        assert rep.re_constant == pytest.approx(np.linalg.eigvalsh(sub)[0], abs=1e-9)

    def test_disconnected_node(self, toy):
        rep = condition_report(toy["sigma2"], 2, 0.1, 100)
        assert rep.q == 0
        assert math.isinf(rep.b_min)
        assert rep.re_constant is None

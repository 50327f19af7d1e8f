import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from bernstein_select import bounds
from bernstein_select.bounds import (KAPPA, PartitionTree, bernstein_quantile, bernstein_tail,
                                     build_proof_tree, chaining_h, chaining_threshold,
                                     chi_threshold, constant_ck, covering_bound, covering_greedy,
                                     distance_matrix, h_constant_check, net_is_covering,
                                     net_is_separated, proof_recipe_h, remainder_r,
                                     sup_bound_norm, sup_norm_tail, truncated_moment_bound)


def chain_series_oracle(log_nk, v, b):
    """mpmath evaluation of sum_k 2^-k (v sqrt(2 L_k) + b L_k)."""
    def term(k):
        L = (k + 1) * mpmath.log(2) + log_nk(k)
        return mpmath.mpf(2) ** (-k) * (v * mpmath.sqrt(2 * L) + b * L)
    return float(mpmath.nsum(term, [0, mpmath.inf]))


def test_kappa():
    assert KAPPA == 18.0


class TestBernstein:
    def test_quantile_examples(self):
        assert bernstein_quantile(1, 0, 1) == pytest.approx(math.sqrt(2))
        assert bernstein_quantile(0, 1, 2) == 2.0
        assert bernstein_quantile(2, 0.5, 3) == pytest.approx(math.sqrt(12) + 1.5)

    def test_tail_examples(self):
        assert bernstein_tail(1, 0, 0) == 1.0
        assert bernstein_tail(1, 0, math.sqrt(2)) == pytest.approx(math.exp(-1))
        assert bernstein_tail(1, 1, 2) == pytest.approx(math.exp(-4 / 6))
        assert bernstein_tail(1, 1, 2) == pytest.approx(0.5134, abs=1e-4)

    def test_negative_input(self):
        with pytest.raises(ValueError):
            bernstein_quantile(-1, 0, 1)

    def test_inversion_subgaussian(self, rng):
        for _ in range(100):
            v2, u = rng.uniform(0.01, 5), rng.uniform(0.01, 10)
            x = bernstein_quantile(v2, 0.0, u)
            assert bernstein_tail(v2, 0.0, x) == pytest.approx(math.exp(-u), rel=1e-12)

    def test_tail_form_is_weaker(self, rng):
        # at the quantile, x^2 - 2u(v^2 + cx) = -c^2 u^2, so the tail form
        # lands between e^-u and e^-u/2
        for _ in range(100):
            v2, c, u = rng.uniform(0.01, 5), rng.uniform(0.01, 3), rng.uniform(0.01, 10)
            t = bernstein_tail(v2, c, bernstein_quantile(v2, c, u))
            assert math.exp(-u) * (1 - 1e-12) <= t <= math.exp(-u / 2) * (1 + 1e-12)

    def test_tail_form_inverse(self, rng):
        for _ in range(100):
            v2, c, u = rng.uniform(0.01, 5), rng.uniform(0, 3), rng.uniform(0.01, 10)
            x = c * u + math.sqrt(c * c * u * u + 2 * v2 * u)
            assert bernstein_tail(v2, c, x) == pytest.approx(math.exp(-u), rel=1e-10)


class TestSupBoundNorm:
    def test_examples(self):
        assert sup_bound_norm(1, 0, 1, 0) == 18.0
        for D, x in [(1, 0.5), (8, 2.0), (50, 10.0)]:
            assert sup_bound_norm(1, 0, D, x) == pytest.approx(18 * math.sqrt(D + x), rel=1e-15)

    def test_bounded_regrouping(self):
        # kappa sqrt(D + x) <= kappa (sqrt(D) + sqrt(x)) by concavity
        a, l2 = 1.0, 0.25
        for D in (1, 4, 9):
            for x in (0.0, 0.5, 3.0):
                lhs = sup_bound_norm(1, a * l2, D, x)
                assert lhs <= bounds.bounded_threshold_b1(D, x, a, l2) + 1e-12
                assert KAPPA * math.sqrt(D + x) <= bounds.bounded_threshold_b2(D, x, 1.0) + 1e-12

    def test_needs_dimension(self):
        with pytest.raises(ValueError):
            sup_bound_norm(1, 0, 0, 1)


class TestChi:
    def test_examples(self):
        assert chi_threshold(1, 0, 5, 1, 0) == 324.0
        assert chi_threshold(1, 0, 5, 7, 2.5) == pytest.approx(324 * 9.5)
        assert chi_threshold(1, 1, 2, 3, 1) == pytest.approx(1584.0)

    def test_sup_norm_tail(self):
        assert sup_norm_tail(1, 1, 0, 0, 10) == 20.0
        assert sup_norm_tail(1, 1, 0, math.sqrt(2), 10) == pytest.approx(20 * math.exp(-1))
        assert sup_norm_tail(0.5, 1, 1, 2, 8) == pytest.approx(16 * math.exp(-8 / 3))

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0, 10), st.floats(0, 10), st.floats(0.01, 3), st.floats(0, 2))
    def test_monotone_in_x(self, x1, x2, sigma, c):
        lo, hi = sorted((x1, x2))
        assert chi_threshold(sigma, c, 1.0, 3, lo) <= chi_threshold(sigma, c, 1.0, 3, hi)
        assert sup_bound_norm(sigma, c, 3, lo) <= sup_bound_norm(sigma, c, 3, hi)
        assert sup_norm_tail(0.5, sigma, c, lo, 16) >= sup_norm_tail(0.5, sigma, c, hi, 16)
        assert bernstein_tail(sigma ** 2, c, lo) >= bernstein_tail(sigma ** 2, c, hi)
        assert bernstein_quantile(sigma ** 2, c, lo) <= bernstein_quantile(sigma ** 2, c, hi)


class TestTruncatedMoment:
    def test_phi_one(self):
        # alpha = 1/2, beta = 0: phi(x0) = x0^2 = 1 at x0 = 1
        val, phi = truncated_moment_bound(3.0, 0.5, 0.0, 1.0, 1)
        assert phi == pytest.approx(1.0)
        assert val == pytest.approx(3.0 * math.exp(-1) * (1 + math.e))

    def test_dominates_integral(self):
        a, alpha, beta, x0, p = 2 * 16, 0.25, 0.25, 3.0, 2
        phi = lambda x: x * x / (2 * (alpha + beta * x))
        integral, _ = integrate.quad(lambda x: p * x ** (p - 1) * a * math.exp(-phi(x)), x0, np.inf)
        envelope = x0 ** p * a * math.exp(-phi(x0)) + integral
        assert truncated_moment_bound(a, alpha, beta, x0, p)[0] >= envelope

    def test_monotone_in_x0(self):
        xs = np.linspace(3.0, 40.0, 200)
        vals = [truncated_moment_bound(5.0, 0.25, 0.25, x, 2)[0] for x in xs]
        assert np.all(np.diff(vals) <= 0)

    def test_precondition(self):
        with pytest.raises(ValueError, match="phi"):
            truncated_moment_bound(1.0, 1.0, 1.0, 0.5, 1)


class TestConstants:
    def test_ck(self):
        assert constant_ck(2) == 10.0
        assert constant_ck(3) == pytest.approx(4.125)
        assert 1 < constant_ck(1e6) < 1.001
        with pytest.raises(ValueError, match="K must exceed 1"):
            constant_ck(1.0)

    def test_remainder_c_zero(self):
        R = remainder_r("general", 1.5, 0.0, 2.0, u=1.0, lambda_bar_inf=1.0, z=math.inf)
        assert R == pytest.approx(KAPPA ** 2 * 1.5 ** 2 * 2.0)

    def test_remainder_empty(self):
        assert remainder_r("general", 1.0, 1.0, 0.0, u=1.0, lambda_bar_inf=1.0, z=math.inf) == 0.0

    def test_histogram_remainder_routes_agree(self):
        sigma, c, a, b, n, Sigma = 1.0, 1.0, 1.0, 1.0, 100, 1.0
        u = (c + sigma) * (b + 2) / a
        closed = remainder_r("histogram", sigma, c, Sigma, a=a, exp_b=b, n=n)
        general = remainder_r("general", sigma, c, Sigma, u=u, lambda_bar_inf=1.0, z=b * math.log(n))
        assert closed == pytest.approx(general, rel=1e-12)
        assert closed == pytest.approx(KAPPA ** 2 * (1 + 2 * u / KAPPA) + 2 * (2 * 3) ** 2 / 100, rel=1e-12)

    def test_family_remainders(self):
        s = 1.5
        R = remainder_r("piecewise_poly", 1.0, 0.5, 0.0, a=2.0, exp_b=1.0, d=1, n=50)
        assert R == pytest.approx(4 * s * s * 9 / (4 * 50))
        R = remainder_r("trigonometric", 1.0, 0.5, 0.0, a=2.0, exp_b=1.0, dbar=2, n=50)
        assert R == pytest.approx(4 * 9 * s * s / (4 * 5 * 50))

    def test_gaussian_remainder(self):
        assert bounds.corollary_remainder(2, 1, 1) == pytest.approx(8 * 324)


class TestChaining:
    def test_single_cell_series(self):
        for v, b in [(1.0, 0.0), (0.0, 1.0), (0.7, 0.3)]:
            tree = build_proof_tree(np.zeros((5, 2)), v, b)
            assert tree.cell_counts() == [1] * len(tree.levels)
            expected = chain_series_oracle(lambda k: 0, v, b)
            assert chaining_h(tree) == pytest.approx(expected, rel=1e-12)

    def test_b_zero_drops_linear_part(self):
        full = chain_series_oracle(lambda k: 0, 1.0, 1.0)
        assert proof_recipe_h(3, 1.0, 0.0) + proof_recipe_h(3, 0.0, 1.0) == pytest.approx(
            proof_recipe_h(3, 1.0, 1.0), rel=1e-13)
        assert chain_series_oracle(lambda k: 0, 1.0, 0.0) < full

    @pytest.mark.parametrize("D", [1, 2, 7, 50])
    def test_proof_recipe_against_oracle(self, D):
        logn = lambda k: 2 * D * mpmath.log(9) + 2 * k * D * mpmath.log(5)
        for v, b in [(1, 0), (0, 1), (1, 1)]:
            assert proof_recipe_h(D, v, b) == pytest.approx(chain_series_oracle(logn, v, b), rel=1e-12)

    def test_recipe_values(self):
        assert proof_recipe_h(1, 0, 1) == pytest.approx(17.999238681320875, rel=1e-13)
        assert proof_recipe_h(1, 1, 0) < 14

    def test_h_constant_check(self):
        rep = h_constant_check(1, 1, 0)
        assert rep.passed and rep.value < 14
        assert h_constant_check(1, 0, 1).value < 18
        assert h_constant_check(4, 2, 0).values["v_part"] == pytest.approx(
            2 * h_constant_check(4, 1, 0).values["v_part"], rel=1e-14)
        with pytest.raises(ValueError):
            h_constant_check(1, 0, 0)

    def test_one_dim_grid_tree(self):
        P = np.linspace(-1, 1, 41)
        for v, b in [(1.0, 0.0), (1.0, 1.0), (0.5, 0.2)]:
            tree = build_proof_tree(P, v, b)
            assert chaining_h(tree) <= sup_bound_norm(v, b, 1, 0)

    def test_nesting_and_certificates_on_clouds(self, rng):
        for _ in range(5):
            P = rng.uniform(-1, 1, (30, 2))
            tree = build_proof_tree(P, 2.0 * math.sqrt(2), 2.0)
            assert tree.problems() == []
            for k in range(1, len(tree.levels)):
                for cell in tree.cells(k):
                    assert len(np.unique(tree.levels[k - 1][cell])) == 1

    def test_invalid_tree_rejected(self):
        D = distance_matrix(np.array([0.0, 1.0]))
        with pytest.raises(ValueError, match="diameter"):
            PartitionTree((np.zeros(2), np.zeros(2)), D, np.zeros_like(D), 1.0, 0.0)
        with pytest.raises(ValueError, match="inside"):
            PartitionTree((np.zeros(3), np.array([0, 0, 1]), np.array([0, 1, 1])),
                          distance_matrix(np.zeros(3)), np.zeros((3, 3)), 1.0, 0.0)

    def test_n_k(self):
        tree = build_proof_tree(np.linspace(0, 1, 9), 1.0, 0.0)
        counts = tree.cell_counts()
        assert tree.n_k(0) == counts[0] * counts[1]
        assert tree.n_k(100) == counts[-1] ** 2

    def test_threshold(self):
        assert chaining_threshold(3.0, 1.0, 0.5, 2.0) == pytest.approx(3 + 2 * 2 + 2)


class TestCovering:
    def test_interval_grid(self):
        P = np.linspace(-1, 1, 101)
        net = covering_greedy(P, 0.5)
        assert len(net) <= covering_bound(0.5, 1) == 5
        assert net_is_separated(P, net, 0.5) and net_is_covering(P, net, 0.5)

    def test_large_delta(self):
        P = np.linspace(-1, 1, 11)
        assert len(covering_greedy(P, 2.5)) == 1

    def test_disc(self, rng):
        r = np.sqrt(rng.random(200))
        t = rng.uniform(0, 2 * np.pi, 200)
        P = np.column_stack([r * np.cos(t), r * np.sin(t)])
        net = covering_greedy(P, 0.25)
        assert len(net) <= 81
        assert net_is_separated(P, net, 0.25) and net_is_covering(P, net, 0.25)

    def test_insertion_order(self):
        P = np.array([0.0, 0.3, 0.6, 0.9])
        assert covering_greedy(P, 0.5).tolist() == [0, 2]
        assert covering_greedy(P[::-1], 0.5).tolist() == [0, 2]

    def test_other_norms(self, rng):
        P = rng.uniform(-1, 1, (50, 3))
        for norm in ("linf", "l1"):
            net = covering_greedy(P, 0.5, norm)
            assert net_is_separated(P, net, 0.5, norm) and net_is_covering(P, net, 0.5, norm)
        custom = covering_greedy(P, 0.5, lambda p, q: float(np.linalg.norm(p - q)))
        assert custom.tolist() == covering_greedy(P, 0.5).tolist()

    def test_bad_delta(self):
        with pytest.raises(ValueError):
            covering_greedy(np.zeros(3), 0.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), D=st.integers(1, 3), delta=st.sampled_from([1.0, 0.5, 0.25]))
def test_covering_law(seed, D, delta):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((120, D))
    P = g / np.linalg.norm(g, axis=1, keepdims=True) * rng.random((120, 1)) ** (1 / D)
    net = covering_greedy(P, delta)
    assert net_is_separated(P, net, delta) and net_is_covering(P, net, delta)
    assert len(net) <= covering_bound(delta, D)

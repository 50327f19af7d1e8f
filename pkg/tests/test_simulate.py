import math
import warnings

import numpy as np
import pytest
from scipy import stats

from bernstein_select import noise
from bernstein_select.bounds import chi_threshold
from bernstein_select.linalg import Subspace, lambda2
from bernstein_select.models import (IntervalPartition, ModelCollection, TheoryConditionWarning,
                                     build_histogram_collection, histogram_basis,
                                     piecewise_poly_basis, trig_basis)
from bernstein_select.simulate import (BLOCK, chi_mean, chi_tail_experiment, clopper_pearson,
                                       counter_example, default_u, estimate_tail,
                                       mean_sup_check, mixture_increment_check,
                                       oracle_experiment, run_blocks, sup_bound_experiment,
                                       sup_norm_tail_experiment, tail_estimate)

REPS = 10_000


def hist_space(n, k):
    return histogram_basis(n, IntervalPartition.regular(n, k))


class TestTailEstimate:
    def test_constant_samplers(self):
        zero = estimate_tail(lambda rng, k: np.zeros(k), 1.0, 1000, seed=1)
        assert zero.exceed == 0 and zero.ci_lo == 0.0
        assert zero.ci_hi == pytest.approx(1 - 0.025 ** (1 / 1000), rel=1e-9)
        assert zero.ci_hi < 3.7 / 1000
        two = estimate_tail(lambda rng, k: np.full(k, 2.0), 1.0, 1000, seed=1)
        assert two.exceed == 1000 and two.point == 1.0 and two.ci_hi == 1.0

    def test_fair_coin(self):
        est = estimate_tail(lambda rng, k: rng.random(k), 0.5, 100_000, seed=4)
        assert est.ci_lo <= 0.5 <= est.ci_hi

    def test_clopper_pearson_oracle(self):
        k, n = 7, 200
        lo, hi = clopper_pearson(k, n)
        assert lo == pytest.approx(stats.beta.ppf(0.025, k, n - k + 1), rel=1e-9)
        assert hi == pytest.approx(stats.beta.ppf(0.975, k + 1, n - k), rel=1e-9)

    def test_contains_point(self):
        for k in (0, 1, 50, 99, 100):
            e = tail_estimate(k, 100, 0.0)
            assert e.ci_lo <= e.point <= e.ci_hi

    def test_count_range(self):
        with pytest.raises(ValueError):
            tail_estimate(5, 4, 0.0)


class TestRunBlocks:
    def test_order_and_thread_independence(self):
        fn = lambda rng, k, b: (b, k, rng.standard_normal(k).sum())
        one = run_blocks(fn, 3 * BLOCK + 17, seed=9, threads=1)
        many = run_blocks(fn, 3 * BLOCK + 17, seed=9, threads=4)
        assert one == many
        assert [r[1] for r in one] == [BLOCK, BLOCK, BLOCK, 17]


class TestChiTail:
    def test_gaussian_desk_case(self):
        S = hist_space(128, 8)
        spec = noise.gaussian(1.0)
        rep = chi_tail_experiment(S, spec, [0.0, 1.0], default_u(S, spec), reps=REPS, seed=1)
        assert rep["pass"]
        assert [r["exceed"] for r in rep["rows"]] == [0, 0]
        assert rep["rows"][0]["bound"] == 1.0

    def test_laplace(self):
        S = hist_space(64, 4)
        spec = noise.laplace(1.0)
        rep = chi_tail_experiment(S, spec, [2.0], default_u(S, spec), reps=REPS, seed=2)
        assert rep["pass"] and rep["rows"][0]["ci_hi"] <= math.exp(-2)

    def test_thresholds(self):
        S = hist_space(64, 4)
        spec = noise.centered_poisson(1.0)
        u = default_u(S, spec)
        rep = chi_tail_experiment(S, spec, [0.5, 3.0], u, reps=REPS, seed=3)
        for r in rep["rows"]:
            assert r["threshold"] == chi_threshold(spec.sigma, spec.c, u, 4, r["x"])

    def test_reps_minimum(self):
        with pytest.raises(ValueError):
            chi_tail_experiment(hist_space(16, 2), noise.gaussian(), [1.0], 1.0, reps=100)

    def test_reproducible_across_threads(self):
        S = trig_basis(64, range(5), 2)
        spec = noise.laplace(1.0)
        a = chi_tail_experiment(S, spec, [0.5], 1.0, reps=REPS, seed=5, threads=1)
        b = chi_tail_experiment(S, spec, [0.5], 1.0, reps=REPS, seed=5, threads=3)
        assert a == b


class TestSupNorm:
    def test_level_two_n_over_e(self):
        S = hist_space(128, 8)
        spec = noise.gaussian(1.0)
        x = math.sqrt(2) * lambda2(S)
        rep = sup_norm_tail_experiment(S, spec, [0.0, x], reps=REPS, seed=6)
        assert rep["rows"][0]["bound"] == 256
        assert rep["rows"][1]["bound"] == pytest.approx(256 / math.e)
        assert rep["rows"][1]["vacuous"] and rep["pass"]

    def test_tighter_lambda(self):
        spec = noise.gaussian(1.0)
        coarse, fine = hist_space(128, 8), hist_space(128, 32)
        assert lambda2(coarse) == pytest.approx(0.25)
        a = sup_norm_tail_experiment(coarse, spec, [1.5, 2.0], reps=REPS, seed=7)
        b = sup_norm_tail_experiment(fine, spec, [1.5, 2.0], reps=REPS, seed=7)
        assert all(ra["bound"] < rb["bound"] for ra, rb in zip(a["rows"], b["rows"]))
        assert a["pass"] and b["pass"]


class TestSupBound:
    def test_three_cases(self):
        for S, spec in [(hist_space(128, 8), noise.gaussian(1.0)),
                        (hist_space(64, 4), noise.laplace(1.0)),
                        (trig_basis(128, range(5), 2), noise.centered_poisson(1.0))]:
            rep = sup_bound_experiment(S, spec, [0.0, 1.0, 2.0], default_u(S, spec), reps=REPS, seed=8)
            assert rep["pass"]
            assert all(r["threshold_le_z"] for r in rep["rows"])
            assert rep["rows"][0]["bound"] == 1.0


class TestMeanSup:
    def test_chi_mean_values(self):
        assert chi_mean(4) == pytest.approx(1.8800, abs=1e-4)
        assert chi_mean(1) == pytest.approx(math.sqrt(2 / math.pi), rel=1e-14)
        assert chi_mean(0) == 0.0
        assert chi_mean(9, 2.0) == pytest.approx(2 * stats.chi(9).mean(), rel=1e-12)

    @pytest.mark.parametrize("D", [1, 4])
    def test_gaussian(self, D):
        S = Subspace.coordinate(16, range(1, D + 1))
        rep = mean_sup_check(S, noise.gaussian(1.0), reps=REPS, seed=10)
        assert rep["pass"] and rep["matches_exact"] and rep["below_sqrt_D"]

    def test_zero_space(self):
        rep = mean_sup_check(Subspace.zero(8), noise.gaussian(1.0), reps=REPS, seed=1)
        assert rep["mean"] == 0.0 and rep["pass"]

    def test_non_gaussian_has_no_exact(self):
        rep = mean_sup_check(hist_space(32, 4), noise.bounded_uniform(math.sqrt(3)), reps=REPS, seed=2)
        assert rep["exact_mean"] is None and rep["pass"]


class TestOracleExperiment:
    def test_zero_signal_zero_model(self):
        C = ModelCollection.from_spaces({"zero": Subspace.zero(16)})
        rep = oracle_experiment(C, noise.gaussian(1.0), np.zeros(16), reps=1000, seed=1)
        assert rep["lhs"] == 0.0 and rep["pass"]

    def test_histogram_small(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TheoryConditionWarning)
            C = build_histogram_collection(64, IntervalPartition.regular(64, 4))
        f = np.repeat([2.0, -1.0, 1.0, -2.0], 16)
        a = oracle_experiment(C, noise.centered_poisson(1.0), f, reps=1000, seed=3, threads=1,
                              true_label=IntervalPartition.regular(64, 4).label)
        b = oracle_experiment(C, noise.centered_poisson(1.0), f, reps=1000, seed=3, threads=2,
                              true_label=IntervalPartition.regular(64, 4).label)
        assert a == b
        assert a["pass"] and a["lhs"] <= a["rhs"]
        assert len(a["per_model"]) == 8
        assert sum(r["selected"] for r in a["per_model"]) == pytest.approx(1.0)
        assert 0.0 <= a["recovery_rate"] <= 1.0

    def test_signal_length(self):
        C = ModelCollection.from_spaces({"zero": Subspace.zero(16)})
        with pytest.raises(ValueError):
            oracle_experiment(C, noise.gaussian(1.0), np.zeros(8), reps=1000)


class TestCounterExample:
    def test_violation(self):
        rep = counter_example(10_000, reps=REPS, seed=1)
        assert rep["p"] == 0.5
        row = rep["rows"][0]
        assert row["x"] == pytest.approx(math.log(4))
        assert row["ci_lo"] > 0.25 and rep["violation_found"]
        assert rep["control_pass"] and rep["pass"]

    def test_no_violation_far_threshold(self):
        rep = counter_example(100, p=1.0, C=1000.0, reps=REPS, seed=2)
        assert rep["rows"][0]["exceed"] == 0
        assert not rep["violation_found"]

    def test_increments(self):
        lams = np.linspace(-20, 20, 81)
        dists = np.linspace(0, 3, 31)
        for p in (0.1, 0.5, 1.0):
            assert mixture_increment_check(p, lams, dists)

    def test_bad_p(self):
        with pytest.raises(ValueError):
            counter_example(10, p=0.0)


@pytest.mark.parametrize("spec", noise.presets(), ids=lambda s: s.kind)
@pytest.mark.parametrize("family", ["histogram", "piecewise_poly", "trigonometric"])
def test_dominance_suite(spec, family):
    n = 128
    if family == "histogram":
        S = hist_space(n, 8)
    elif family == "piecewise_poly":
        S = piecewise_poly_basis(n, IntervalPartition.regular(n, 4), 1)
    else:
        S = trig_basis(n, range(5), 2)
    xs = [0.5, 1.0, 2.0, 3.0]
    chi = chi_tail_experiment(S, spec, xs, default_u(S, spec), reps=REPS, seed=11)
    sup = sup_norm_tail_experiment(S, spec, xs, reps=REPS, seed=12)
    assert chi["pass"] and sup["pass"]
    assert all(r["exceed"] == 0 for r in chi["rows"])

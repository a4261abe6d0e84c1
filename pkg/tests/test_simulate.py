import math

import numpy as np
import pytest

from seblocks.partition import Sample, fit_partition, make_plan
from seblocks.simulate import (
    NULL_CASE,
    ScenarioSpec,
    TestConfig,
    ar_covariance,
    coverage_diagnostic,
    frequency_uniformity_check,
    generate_scenario,
    run_power_study,
)


class TestScenarioSpec:
    def test_covariance_structure(self):
        sig = ar_covariance(3)
        assert sig[0, 0] == 1.0
        assert sig[0, 1] == pytest.approx(0.35)
        assert sig[0, 2] == pytest.approx(0.1225)
        np.linalg.cholesky(sig)  # positive definite

    def test_validation(self):
        with pytest.raises(ValueError):
            ScenarioSpec(scenario=7, c=1.0)
        with pytest.raises(ValueError):
            ScenarioSpec(scenario=3, c=0.0)
        with pytest.raises(ValueError):
            ScenarioSpec(scenario=5, c=1.5)

    def test_mixture_weight_boundaries_allowed(self):
        ScenarioSpec(scenario=5, c=1.0, m=10, n=10)
        ScenarioSpec(scenario=2, c=0.0, m=10, n=10)


class TestGenerators:
    def test_shapes_and_determinism(self):
        spec = ScenarioSpec(scenario=1, c=5.0, p=3, m=40, n=30)
        x1, y1 = generate_scenario(spec, 123)
        x2, y2 = generate_scenario(spec, 123)
        assert x1.shape == (40, 3) and y1.shape == (30, 3)
        assert np.array_equal(x1, x2) and np.array_equal(y1, y2)

    def test_null_case_moments(self):
        spec = ScenarioSpec(p=3, m=60_000, n=10)
        x, _ = generate_scenario(spec, 7)
        cov = np.cov(x.T)
        assert np.abs(cov - ar_covariance(3)).max() < 0.03
        assert np.abs(x.mean(axis=0)).max() < 0.02

    def test_scale_alternative_inflates_covariance(self):
        spec = ScenarioSpec(scenario=3, c=2.0, p=3, m=10, n=60_000)
        _, y = generate_scenario(spec, 11)
        assert np.abs(np.cov(y.T) - 2.0 * ar_covariance(3)).max() < 0.06

    def test_shift_spares_first_coordinate(self):
        spec = ScenarioSpec(scenario=2, c=50.0, p=3, m=10, n=50_000)
        _, y = generate_scenario(spec, 3)
        means = y.mean(axis=0)
        assert abs(means[0]) < 0.05
        assert means[1] == pytest.approx(5.0, abs=0.2)  # 10% of the mass shifted by 50
        assert means[2] == pytest.approx(5.0, abs=0.2)

    def test_full_cube_mixture(self):
        spec = ScenarioSpec(scenario=5, c=1.0, p=3, m=10, n=5000)
        _, y = generate_scenario(spec, 9)
        assert y.min() >= 0.45 and y.max() <= 0.55

    def test_cauchy_tails_present(self):
        spec = ScenarioSpec(scenario=1, c=5.0, p=3, m=20_000, n=10)
        x, _ = generate_scenario(spec, 21)
        assert np.abs(x).max() > 50  # heavy tails

    def test_scale_one_is_null(self):
        spec = ScenarioSpec(scenario=3, c=1.0, p=2, m=30, n=30)
        null = ScenarioSpec(p=2, m=30, n=30)
        x1, y1 = generate_scenario(spec, 5)
        x2, y2 = generate_scenario(null, 5)
        assert np.array_equal(x1, x2) and np.array_equal(y1, y2)


class TestPowerStudy:
    def test_worker_count_does_not_change_results(self):
        spec = ScenarioSpec(scenario=2, c=2.0, p=3, m=20, n=20)
        tests = [TestConfig("wilcoxon", "spiral"), TestConfig("empty_block", "stairstep")]
        serial = run_power_study(spec, tests, 0.05, 60, 99, workers=1, n_null_draws=2000)
        parallel = run_power_study(spec, tests, 0.05, 60, 99, workers=3, n_null_draws=2000)
        assert [e.rejections for e in serial] == [e.rejections for e in parallel]
        assert [e.tie_retries for e in serial] == [e.tie_retries for e in parallel]

    def test_null_rejection_rate_near_alpha(self):
        spec = ScenarioSpec(p=2, m=25, n=25)
        tests = [TestConfig("empty_block", "spiral"), TestConfig("wilcoxon", "spiral")]
        ests = run_power_study(spec, tests, 0.1, 800, 7, workers=2, n_null_draws=2000)
        for est in ests:
            assert abs(est.rejection_rate - 0.1) < 4 * math.sqrt(0.1 * 0.9 / 800)

    def test_degenerate_mixture_weight_is_null(self):
        spec = ScenarioSpec(scenario=2, c=0.0, p=2, m=25, n=25)
        est = run_power_study(
            spec, [TestConfig("wilcoxon", "spiral")], 0.1, 600, 13, n_null_draws=2000
        )[0]
        assert abs(est.rejection_rate - 0.1) < 4 * math.sqrt(0.1 * 0.9 / 600)

    def test_estimate_fields(self):
        spec = ScenarioSpec(scenario=4, c=2.0, p=3, m=15, n=15)
        est = run_power_study(
            spec, [TestConfig("precedence", "stairstep", j=4)], 0.05, 50, 5,
            n_null_draws=1000,
        )[0]
        assert est.replicates == 50 and est.seed == 5
        assert est.std_error == pytest.approx(
            math.sqrt(est.rejection_rate * (1 - est.rejection_rate) / 50)
        )

    def test_runs_test_needs_univariate(self):
        spec = ScenarioSpec(p=3, m=10, n=10)
        with pytest.raises(ValueError):
            run_power_study(spec, [TestConfig("runs")], 0.05, 10, 1)

    def test_runs_test_in_univariate_study(self):
        spec = ScenarioSpec(p=1, m=15, n=15)
        est = run_power_study(spec, [TestConfig("runs")], 0.1, 400, 3)[0]
        assert abs(est.rejection_rate - 0.1) < 4 * math.sqrt(0.1 * 0.9 / 400)

    def test_dixon_exact_null_path_holds_size(self):
        # small sizes keep the squared-deviation statistic on its exact
        # rational pmf inside the harness
        spec = ScenarioSpec(p=2, m=8, n=8)
        est = run_power_study(spec, [TestConfig("dixon_c2", "spiral")], 0.1, 500, 3)[0]
        assert abs(est.rejection_rate - 0.1) < 4 * math.sqrt(0.1 * 0.9 / 500)

    def test_unknown_test_rejected(self):
        with pytest.raises(ValueError):
            TestConfig("energy")

    def test_config_aliases(self):
        assert TestConfig("RS").test == "wilcoxon"
        assert TestConfig("eb").test == "empty_block"
        assert TestConfig("eb").alternative == "upper"

    def test_scaling_invariance_end_to_end(self):
        # multiplying one coordinate of both samples by a constant
        # leaves every decision unchanged
        from seblocks import simulate as sim

        spec = ScenarioSpec(scenario=6, c=0.2, p=2, m=20, n=20)
        tests = [TestConfig("wilcoxon", "spiral"), TestConfig("maximal_block", "stairstep")]
        base = run_power_study(spec, tests, 0.05, 80, 17, n_null_draws=1000)

        orig = sim.generate_scenario
        scale = np.array([1000.0, 1.0])

        def scaled(spec_, rng):
            x, y = orig(spec_, rng)
            return x * scale, y * scale

        sim.generate_scenario = scaled
        try:
            rescaled = run_power_study(spec, tests, 0.05, 80, 17, n_null_draws=1000)
        finally:
            sim.generate_scenario = orig
        assert [e.rejections for e in base] == [e.rejections for e in rescaled]


class TestDiagnostics:
    def test_coverage_matches_block_count(self):
        rng = np.random.default_rng(2)
        plan = make_plan("spiral", 2, 9)
        fitted = fit_partition(plan, rng.standard_normal((9, 2)))
        diag = coverage_diagnostic(
            fitted, lambda k, r: r.standard_normal((k, 2)), draws=20_000, seed=3
        )
        assert diag.coverages.shape == (10,)
        assert diag.coverages.sum() == pytest.approx(1.0)

    def test_mean_coverage_over_refits(self):
        # each block's coverage averages 1/(n+1) over refitted partitions
        rng = np.random.default_rng(4)
        n = 9
        plan = make_plan("spiral", 3, n)
        total = np.zeros(n + 1)
        refits = 150
        for i in range(refits):
            fitted = fit_partition(plan, rng.standard_normal((n, 3)))
            diag = coverage_diagnostic(
                fitted, lambda k, r: r.standard_normal((k, 3)), draws=800, seed=rng
            )
            total += diag.coverages
        mean = total / refits
        # Var of a single coverage is n/((n+1)^2 (n+2)) under the flat law
        se = math.sqrt(n / ((n + 1) ** 2 * (n + 2)) / refits)
        assert np.abs(mean - 1 / (n + 1)).max() < 4 * se + 0.01

    def test_first_blocks_cumulative_coverage(self):
        rng = np.random.default_rng(14)
        n, k = 9, 4
        plan = make_plan("stairstep", 2, n)
        acc = 0.0
        refits = 150
        for _ in range(refits):
            fitted = fit_partition(plan, rng.standard_normal((n, 2)))
            diag = coverage_diagnostic(
                fitted, lambda kk, r: r.standard_normal((kk, 2)), draws=800, seed=rng
            )
            acc += diag.coverages[:k].sum()
        # combined coverage of k blocks averages k/(n+1)
        var = k * (n + 1 - k) / ((n + 1) ** 2 * (n + 2))
        assert abs(acc / refits - k / (n + 1)) < 4 * math.sqrt(var / refits) + 0.01

    def test_uniformity_check_small(self):
        report = frequency_uniformity_check(2, 2, 2, "spiral", 30_000, seed=6)
        assert report.n_possible == 6
        assert report.max_se_deviation < 4.0
        assert sum(report.counts.values()) == 30_000

    def test_uniformity_distribution_free(self):
        a = frequency_uniformity_check(2, 2, 2, "spiral", 20_000, seed=8, generator="normal")
        b = frequency_uniformity_check(2, 2, 2, "spiral", 20_000, seed=8, generator="cauchy")
        assert a.max_se_deviation < 4.0 and b.max_se_deviation < 4.0

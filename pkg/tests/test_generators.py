"""Tests for the synthetic densities and the replication harnesses."""

import numpy as np
import numpy.testing as npt
import pytest
from scipy.integrate import quad
from scipy.stats import kstest

from kmonotone.generators import (
    DENSITY_IDS,
    ExperimentPlan,
    bootstrap_slope_ci,
    contraction_probe,
    density_spec,
    results_to_csv,
    results_to_markdown,
    run_mse_experiment,
    sample_density,
)
from kmonotone.kernels import KernelParams, psi_pdf
from kmonotone.metrics import GridDensity, canonical_grid


class TestDensitySpecs:
    def test_registry_contents(self):
        assert DENSITY_IDS == ("g1", "g2", "g3", "g4", "g5", "g6")
        with pytest.raises(ValueError):
            density_spec("g7")

    def test_g1_is_two_one_minus_x(self):
        g1 = density_spec("g1")
        xs = np.linspace(0.0, 1.0, 11)
        npt.assert_allclose(g1.pdf(xs), 2.0 * (1.0 - xs), rtol=0.0, atol=1e-15)
        npt.assert_allclose(g1.cdf(xs), 1.0 - (1.0 - xs) ** 2, rtol=0.0, atol=1e-15)

    def test_g3_two_code_paths_agree(self):
        # evaluator vs direct kernel summation, pointwise to 1e-14
        g3 = density_spec("g3")
        xs = np.linspace(0.0, 1.0, 501)
        direct = sum(
            psi_pdf(KernelParams(2, j / 3.0), xs) / 3.0 for j in (1, 2, 3)
        )
        npt.assert_allclose(g3.pdf(xs), direct, rtol=0.0, atol=1e-14)

    def test_g6_closed_forms_match_quadrature(self):
        # oracle: g6(x) = int_x^1 psi_4(x, th) 2 th dth by adaptive quadrature
        g6 = density_spec("g6")
        for x in (0.01, 0.1, 0.3, 0.5, 0.9):
            target = quad(
                lambda th: (4.0 / th) * (1.0 - x / th) ** 3 * 2.0 * th,
                x,
                1.0,
                epsabs=1e-12,
            )[0]
            assert abs(g6.pdf(x) - target) <= 1e-9
            cdf_target = quad(g6.pdf, 0.0, x, epsabs=1e-12)[0]
            assert abs(g6.cdf(x) - cdf_target) <= 1e-9
        assert g6.pdf(0.0) == 8.0
        assert g6.pdf(1.0) == 0.0

    def test_all_densities_integrate_to_one(self):
        for d in DENSITY_IDS:
            spec = density_spec(d)
            mass = quad(spec.pdf, 0.0, 1.0, epsabs=1e-10, limit=200)[0]
            assert abs(mass - 1.0) <= 1e-8, d
            assert abs(spec.cdf(1.0) - 1.0) <= 1e-12, d
            assert spec.cdf(0.0) == 0.0, d


class TestSampleDensity:
    def test_deterministic_given_seed(self):
        for d in DENSITY_IDS:
            a = sample_density(d, 100, seed=5)
            b = sample_density(d, 100, seed=5)
            npt.assert_array_equal(a, b)

    def test_values_strictly_inside_unit_interval(self):
        for d in DENSITY_IDS:
            x = sample_density(d, 10_000, seed=1)
            assert x.min() > 0.0 and x.max() < 1.0

    def test_sampler_matches_evaluator_by_ks(self):
        # each density's own self-test: 1e5 draws against the closed-form CDF
        for i, d in enumerate(DENSITY_IDS):
            spec = density_spec(d)
            x = sample_density(spec, 100_000, seed=100 + i)
            assert kstest(x, spec.cdf).pvalue > 0.01, d

    def test_g2_mean_matches_analytic_value(self):
        # E[X] = int x (1.5 - x) dx = 5/12
        x = sample_density("g2", 100_000, seed=3)
        var = 0.25 - (5.0 / 12.0) ** 2
        assert abs(x.mean() - 5.0 / 12.0) <= 3.0 * np.sqrt(var / len(x))

    def test_rejects_bad_n(self):
        with pytest.raises(ValueError):
            sample_density("g1", 0, seed=0)


class TestExperimentPlan:
    def test_defaults_are_full_table(self):
        plan = ExperimentPlan()
        assert plan.densities == DENSITY_IDS
        assert plan.sizes == (100, 200, 500)
        assert plan.methods == ("bay", "ada", "con", "gre")

    def test_validation(self):
        with pytest.raises(ValueError):
            ExperimentPlan(densities=("g9",))
        with pytest.raises(ValueError):
            ExperimentPlan(methods=("bay", "npmle"))
        with pytest.raises(ValueError):
            ExperimentPlan(methods=("bay", "bay"))
        with pytest.raises(ValueError):
            ExperimentPlan(replications=0)
        with pytest.raises(ValueError):
            ExperimentPlan(sizes=(1,))

    def test_method_names_normalized(self):
        plan = ExperimentPlan(methods=("Bay", "GRE"))
        assert plan.methods == ("bay", "gre")


class TestRunMseExperiment:
    def test_truth_estimator_scores_zero(self, monkeypatch):
        # substituting the generating density as the estimate zeroes every cell
        import kmonotone.generators as gen

        def truth_fit(method, data, spec, plan, rep, n):
            grid = canonical_grid(100)
            return GridDensity(grid, spec.pdf(grid))

        monkeypatch.setattr(gen, "_fit_on_grid", truth_fit)
        plan = ExperimentPlan(
            densities=("g1", "g6"), sizes=(20,), replications=1, master_seed=1
        )
        rows = run_mse_experiment(plan)
        assert len(rows) == 8
        assert all(r["mean_mse"] == 0.0 and r["failures"] == 0 for r in rows)

    def test_smoke_all_methods(self):
        plan = ExperimentPlan(
            densities=("g1",),
            sizes=(60,),
            replications=2,
            master_seed=7,
            burn_in=50,
            draws=25,
        )
        rows = run_mse_experiment(plan)
        assert [r["method"] for r in rows] == ["bay", "ada", "con", "gre"]
        for r in rows:
            assert np.isfinite(r["mean_mse"]) and r["mean_mse"] >= 0.0
            assert r["failures"] == 0 and r["R"] == 2

    def test_cells_invariant_to_method_subset_and_order(self):
        base = dict(
            densities=("g2",), sizes=(40,), replications=2, master_seed=3,
            burn_in=30, draws=10,
        )
        all_rows = run_mse_experiment(ExperimentPlan(methods=("bay", "gre"), **base))
        only_rev = run_mse_experiment(ExperimentPlan(methods=("gre", "bay"), **base))
        by_m = lambda rows: {r["method"]: r["mean_mse"] for r in rows}
        assert by_m(all_rows) == by_m(only_rev)

    def test_worker_pool_matches_serial(self):
        plan = ExperimentPlan(
            densities=("g1",), sizes=(30,), replications=2, master_seed=11,
            methods=("con", "gre"),
        )
        serial = run_mse_experiment(plan, threads=1)
        pooled = run_mse_experiment(plan, threads=2)
        assert serial == pooled

    def test_failure_accounting_aborts_on_widespread_failure(self, monkeypatch):
        import kmonotone.generators as gen

        def broken_fit(method, data, spec, plan, rep, n):
            raise RuntimeError("synthetic failure")

        monkeypatch.setattr(gen, "_fit_on_grid", broken_fit)
        plan = ExperimentPlan(
            densities=("g1",), sizes=(20,), replications=2, methods=("gre",)
        )
        with pytest.raises(RuntimeError, match="failed"):
            run_mse_experiment(plan)

    def test_csv_and_markdown_rendering(self):
        rows = [
            {"method": "bay", "n": 100, "density": "g1", "mean_mse": 0.018,
             "se_mse": 0.001, "R": 100, "failures": 0},
            {"method": "gre", "n": 100, "density": "g1", "mean_mse": 0.058,
             "se_mse": 0.002, "R": 100, "failures": 1},
        ]
        csv = results_to_csv(rows)
        lines = csv.strip().splitlines()
        assert lines[0] == "method,n,density,mean_mse,se_mse,R,failures"
        assert lines[1].startswith("bay,100,g1,0.018,")
        md = results_to_markdown(rows)
        assert "### n = 100" in md
        assert "| bay | 0.0180 |" in md
        assert "| gre | 0.0580 |" in md


class TestContraction:
    def test_probe_deterministic_and_shaped(self):
        out1 = contraction_probe(
            "g1", 2, sizes=(30, 60), reps=1, master_seed=5, burn_in=40, draws=20
        )
        out2 = contraction_probe(
            "g1", 2, sizes=(30, 60), reps=1, master_seed=5, burn_in=40, draws=20
        )
        assert out1 == out2
        assert [n for n, _ in out1] == [30, 60]
        assert all(0.0 < e < np.sqrt(2.0) for _, e in out1)

    def test_bootstrap_slope_ci_detects_negative_slope(self):
        rng = np.random.default_rng(0)
        sizes = np.array([100, 200, 400, 800])
        # synthetic errors decaying like n^{-0.4} with mild noise
        errors = sizes[None, :] ** -0.4 * np.exp(rng.normal(0, 0.05, (20, 4)))
        lo, hi = bootstrap_slope_ci(sizes, errors, n_boot=500, seed=1)
        assert lo < hi < 0.0
        assert abs(0.5 * (lo + hi) + 0.4) < 0.1

    def test_bootstrap_slope_ci_validation(self):
        with pytest.raises(ValueError):
            bootstrap_slope_ci([100], np.ones((5, 1)))
        with pytest.raises(ValueError):
            bootstrap_slope_ci([100, 200], np.ones((5, 3)))

"""Kernel algebra: closed forms checked against independent quadrature oracles."""

import math

import numpy as np
import pytest
from scipy import integrate

from kmonotone.kernels import (
    KernelParams,
    KMixture,
    mixture_cdf,
    mixture_pdf,
    mixture_sample,
    psi_cdf,
    psi_l1_distance,
    psi_pdf,
    psi_sample,
)


def quad_psi_mass(p, a, b):
    """Oracle: numerical integral of psi_pdf over (a, b)."""
    val, _ = integrate.quad(lambda t: psi_pdf(p, t), a, b, limit=200)
    return val


class TestPsiPdf:
    def test_linear_kernel_value(self):
        # k=2, theta=1 is the triangular density 2(1-x)
        assert psi_pdf(KernelParams(2, 1.0), 0.5) == pytest.approx(1.0, abs=0)

    def test_outside_support_is_exactly_zero(self):
        assert psi_pdf(KernelParams(4, 0.5), 0.7) == 0.0
        p = KernelParams(1, 0.3)
        x = np.array([0.3, 0.30000000001, 0.9, 1.0])
        assert np.all(psi_pdf(p, x) == 0.0)

    def test_k1_is_uniform_on_support(self):
        assert psi_pdf(KernelParams(1, 0.3), 0.1) == pytest.approx(1.0 / 0.3, rel=1e-15)

    def test_left_endpoint_limit(self):
        # value at 0 equals the right limit k/theta
        p = KernelParams(3, 0.25)
        assert psi_pdf(p, 0.0) == pytest.approx(3.0 / 0.25, rel=1e-15)

    def test_normalization_by_quadrature(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            p = KernelParams(int(rng.integers(1, 11)), float(rng.uniform(0.01, 1.0)))
            assert quad_psi_mass(p, 0.0, p.theta) == pytest.approx(1.0, abs=1e-9)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            KernelParams(0, 0.5)
        with pytest.raises(ValueError):
            KernelParams(2, 0.0)
        with pytest.raises(ValueError):
            KernelParams(2, -0.1)
        with pytest.raises(ValueError):
            KernelParams(2, 1.5)
        with pytest.raises(ValueError):
            KernelParams(2.5, 0.5)


class TestPsiCdf:
    def test_full_mass_at_theta(self):
        assert psi_cdf(KernelParams(2, 1.0), 1.0) == 1.0

    def test_against_quadrature_oracle(self):
        # oracle first: integrate the pdf, then compare the closed form to it
        cases = [(2, 1.0, 0.5), (3, 0.4, 0.2), (5, 0.77, 0.3), (1, 0.6, 0.13)]
        for k, theta, x in cases:
            p = KernelParams(k, theta)
            oracle = quad_psi_mass(p, 0.0, x)
            assert psi_cdf(p, x) == pytest.approx(oracle, abs=1e-10)
        # frozen oracle values for the two reference cases
        assert psi_cdf(KernelParams(2, 1.0), 0.5) == pytest.approx(0.75, abs=1e-12)
        assert psi_cdf(KernelParams(3, 0.4), 0.2) == pytest.approx(0.875, abs=1e-12)

    def test_clamping(self):
        p = KernelParams(4, 0.5)
        assert psi_cdf(p, -1.0) == 0.0
        assert psi_cdf(p, 0.0) == 0.0
        assert psi_cdf(p, 0.5) == 1.0
        assert psi_cdf(p, 2.0) == 1.0

    def test_monotone_nondecreasing(self):
        p = KernelParams(3, 0.8)
        grid = np.linspace(-0.1, 1.1, 500)
        vals = psi_cdf(p, grid)
        assert np.all(np.diff(vals) >= 0.0)


class TestPsiSample:
    def test_k1_identity(self):
        assert psi_sample(KernelParams(1, 1.0), 0.37) == pytest.approx(0.37, rel=1e-15)

    def test_inverse_of_cdf_example(self):
        assert psi_sample(KernelParams(2, 1.0), 0.75) == pytest.approx(0.5, abs=1e-15)

    def test_round_trip_property(self):
        rng = np.random.default_rng(7)
        for _ in range(10_000):
            p = KernelParams(int(rng.integers(1, 11)), float(rng.uniform(0.01, 1.0)))
            u = float(rng.uniform(1e-6, 1 - 1e-6))
            assert abs(psi_cdf(p, psi_sample(p, u)) - u) <= 1e-12

    def test_u_validation(self):
        p = KernelParams(2, 0.5)
        for bad in (0.0, 1.0, -0.2, 1.3):
            with pytest.raises(ValueError):
                psi_sample(p, bad)


class TestKMixture:
    def test_canonicalization_sorts_and_merges(self):
        m = KMixture(2, 0.0, ((0.9, 0.25), (0.3, 0.5), (0.9 + 5e-15, 0.25)))
        assert m.atoms[0][0] == 0.3
        assert len(m.atoms) == 2
        assert m.atoms[1][1] == pytest.approx(0.5, abs=0)

    def test_weight_sum_validated(self):
        with pytest.raises(ValueError):
            KMixture(2, 0.0, ((0.5, 0.4), (0.9, 0.4)))
        with pytest.raises(ValueError):
            KMixture(2, 0.0, ((0.5, -0.2), (0.9, 1.2)))
        with pytest.raises(ValueError):
            KMixture(2, 1.2, ((1.0, 1.0),))
        with pytest.raises(ValueError):
            KMixture(2, 0.5, ())

    def test_g2_value(self):
        # 0.5 * 2(1-x) + 0.5 = 1.5 - x, equals 1.0 at x = 0.5
        g2 = KMixture(2, 0.5, ((1.0, 1.0),))
        assert mixture_pdf(g2, 0.5) == pytest.approx(1.0, abs=1e-15)

    def test_g3_right_limit_at_zero(self):
        g3 = KMixture(2, 0.0, ((1 / 3, 1 / 3), (2 / 3, 1 / 3), (1.0, 1 / 3)))
        # sum of w_l * k/theta_l = (1/3)(6 + 3 + 2) = 11/3
        assert mixture_pdf(g3, 0.0) == pytest.approx(11 / 3, rel=1e-14)

    def test_pure_uniform(self):
        m = KMixture(4, 1.0, ((0.5, 1.0),))
        x = np.linspace(0.0, 1.0, 17)
        np.testing.assert_allclose(mixture_pdf(m, x), 1.0, rtol=0, atol=0)

    def test_value_at_one_is_beta0(self):
        m = KMixture(3, 0.23, ((0.4, 0.5), (1.0, 0.5)))
        assert mixture_pdf(m, 1.0) == pytest.approx(0.23, abs=0)

    def test_total_mass_by_quadrature(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            n_atoms = int(rng.integers(1, 6))
            th = rng.uniform(0.05, 1.0, n_atoms)
            w = rng.dirichlet(np.ones(n_atoms))
            m = KMixture(int(rng.integers(1, 8)), float(rng.uniform()), tuple(zip(th, w)))
            val, _ = integrate.quad(
                lambda t: mixture_pdf(m, t), 0.0, 1.0, points=sorted(th), limit=300
            )
            assert val == pytest.approx(1.0, abs=1e-8)

    def test_kmonotone_difference_sign_pattern(self):
        # (-1)^j * (j-th difference quotient) >= -1e-6 for j <= k-2
        rng = np.random.default_rng(3)
        grid = np.linspace(1e-4, 1.0 - 1e-4, 1000)
        for k in (2, 3, 4, 6):
            n_atoms = int(rng.integers(1, 5))
            th = rng.uniform(0.05, 1.0, n_atoms)
            w = rng.dirichlet(np.ones(n_atoms))
            m = KMixture(k, float(rng.uniform(0, 0.5)), tuple(zip(th, w)))
            vals = mixture_pdf(m, grid)
            h = grid[1] - grid[0]
            for j in range(1, k - 1):
                dq = np.diff(vals, n=j) / h**j
                assert np.all((-1.0) ** j * dq >= -1e-6)

    def test_json_round_trip_exact(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            n_atoms = int(rng.integers(1, 6))
            th = rng.uniform(0.01, 1.0, n_atoms)
            w = rng.dirichlet(np.ones(n_atoms))
            m = KMixture(int(rng.integers(1, 11)), float(rng.uniform()), tuple(zip(th, w)))
            back = KMixture.from_json(m.to_json())
            assert back == m  # dataclass equality: bit-exact floats


class TestMixtureSample:
    def test_beta0_one_passes_u_through(self):
        m = KMixture(2, 1.0, ((0.5, 1.0),))
        assert mixture_sample(m, 0.9, 0.42) == 0.42

    def test_single_atom_k1_scales_uniform(self):
        m = KMixture(1, 0.0, ((0.5, 1.0),))
        assert mixture_sample(m, 0.3, 0.8) == pytest.approx(0.4, rel=1e-15)

    def test_matches_cdf_by_ks(self):
        from scipy import stats

        m = KMixture(3, 0.3, ((0.2, 0.4), (0.7, 0.6)))
        rng = np.random.default_rng(17)
        draws = mixture_sample(m, rng.uniform(size=100_000), rng.uniform(size=100_000))
        res = stats.kstest(draws, lambda x: mixture_cdf(m, x))
        assert res.pvalue > 0.01

    def test_validation(self):
        m = KMixture(2, 0.5, ((0.5, 1.0),))
        with pytest.raises(ValueError):
            mixture_sample(m, 0.0, 0.5)
        with pytest.raises(ValueError):
            mixture_sample(m, 0.5, 1.0)


class TestPsiL1Distance:
    def test_k1_closed_form(self):
        assert psi_l1_distance(1, 0.4, 0.8) == pytest.approx(1.0, abs=1e-15)

    def test_identical_kernels(self):
        assert psi_l1_distance(3, 0.5, 0.5) == 0.0

    def test_symmetry(self):
        assert psi_l1_distance(4, 0.3, 0.9) == psi_l1_distance(4, 0.9, 0.3)

    def test_against_quadrature_oracle(self):
        rng = np.random.default_rng(23)
        for _ in range(200):
            k = int(rng.integers(1, 11))
            t1, t2 = rng.uniform(0.02, 1.0, 2)
            p1, p2 = KernelParams(k, float(t1)), KernelParams(k, float(t2))
            oracle, _ = integrate.quad(
                lambda x: abs(psi_pdf(p1, x) - psi_pdf(p2, x)),
                0.0,
                max(t1, t2),
                points=sorted([t1, t2, min(t1, t2) * 0.999]),
                limit=400,
            )
            assert psi_l1_distance(k, float(t1), float(t2)) == pytest.approx(
                oracle, abs=1e-6
            )

    def test_envelope_bound(self):
        rng = np.random.default_rng(29)
        for _ in range(500):
            k = int(rng.integers(1, 11))
            t1, t2 = rng.uniform(0.01, 1.0, 2)
            d = psi_l1_distance(k, float(t1), float(t2))
            bound = 2.0 * (1.0 - min(t1, t2) / max(t1, t2))
            assert d <= bound + 1e-12
            assert 0.0 <= d <= 2.0

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            psi_l1_distance(2, 0.0, 0.5)
        with pytest.raises(ValueError):
            psi_l1_distance(2, 0.5, 1.0001)

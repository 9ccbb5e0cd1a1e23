"""Fast invariant checks runnable from the installed package.

Each invariant is a named, self-contained probe of a core identity:
kernel support and mass, closed-form distances against quadrature, the
least-concave-majorant oracle, convex-fit optimality conditions, the
mixture background-weight bound, and sampler determinism.  Checks look
functions up through their modules at call time, so a corrupted build
(or an injected bug) is caught by name.  The whole battery is designed
to finish in seconds.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from . import generators, kernels, metrics, shape_mle, slice_sampler


class InvariantFailure(AssertionError):
    """A named self-test invariant does not hold."""


def _gauss_mass(k: int, theta: float) -> float:
    """Exact polynomial quadrature of the kernel over its support."""
    nodes, weights = np.polynomial.legendre.leggauss(16)
    x = 0.5 * theta * (nodes + 1.0)
    p = kernels.KernelParams(k, theta)
    return float(0.5 * theta * np.dot(weights, kernels.psi_pdf(p, x)))


def check_psi_support():
    """Kernel density vanishes at and above theta, positive below."""
    x = np.linspace(0.0, 1.0, 81)
    for k in (1, 2, 5, 10):
        for theta in (0.25, 0.6, 1.0):
            vals = np.asarray(kernels.psi_pdf(kernels.KernelParams(k, theta), x))
            inside = x < theta
            if np.any(vals[~inside] != 0.0):
                raise InvariantFailure(
                    f"psi(k={k}, theta={theta}) nonzero at or beyond theta"
                )
            if np.any(vals[inside] <= 0.0):
                raise InvariantFailure(
                    f"psi(k={k}, theta={theta}) not positive inside support"
                )


def check_psi_mass():
    """Kernel density integrates to one for every order."""
    rng = np.random.default_rng(20260814)
    for k in range(1, 11):
        theta = float(rng.uniform(0.05, 1.0))
        mass = _gauss_mass(k, theta)
        if abs(mass - 1.0) > 1e-9:
            raise InvariantFailure(f"psi mass k={k}, theta={theta:.4f}: {mass!r}")


def check_psi_roundtrip():
    """Inverse-CDF sampling round-trips through the CDF."""
    u = np.linspace(0.001, 0.999, 199)
    for k in (1, 3, 10):
        p = kernels.KernelParams(k, 0.73)
        x = kernels.psi_sample(p, u)
        back = kernels.psi_cdf(p, x)
        err = float(np.max(np.abs(back - u)))
        if err > 1e-12:
            raise InvariantFailure(f"cdf(sample(u)) != u for k={k}: err {err:.2e}")


def check_l1_closed_form():
    """Closed-form kernel L1 distance matches numeric quadrature."""
    rng = np.random.default_rng(7)
    for _ in range(10):
        k = int(rng.integers(1, 11))
        theta, theta_p = np.sort(rng.uniform(0.05, 1.0, size=2))
        closed = kernels.psi_l1_distance(k, theta, theta_p)
        f = lambda x: kernels.psi_pdf(kernels.KernelParams(k, theta), x)
        g = lambda x: kernels.psi_pdf(kernels.KernelParams(k, theta_p), x)
        # dense rule: the integrand kinks where the densities cross
        numeric = metrics.l1_distance(f, g, quad_points=16384)
        if abs(closed - numeric) > 1e-6:
            raise InvariantFailure(
                f"L1(k={k}, {theta:.4f}, {theta_p:.4f}): "
                f"closed {closed!r} vs quadrature {numeric!r}"
            )


def _lcm_slopes_bruteforce(data: np.ndarray) -> tuple:
    """Gift-wrapping least-concave-majorant slopes, exact arithmetic."""
    xs, counts = np.unique(data, return_counts=True)
    px = [Fraction(0)] + [Fraction(v) for v in xs.tolist()] + [Fraction(1)]
    pc = [0] + np.cumsum(counts).tolist() + [len(data)]
    keep_x, keep_c = [px[0]], [pc[0]]
    i = 0
    while i < len(px) - 1:
        best_j, best_slope = None, None
        for j in range(i + 1, len(px)):
            slope = Fraction(pc[j] - pc[i], 1) / (px[j] - px[i])
            if best_slope is None or slope >= best_slope:
                best_j, best_slope = j, slope
        keep_x.append(px[best_j])
        keep_c.append(pc[best_j])
        i = best_j
    bx = np.array([float(v) for v in keep_x])
    bc = np.array([float(v) for v in keep_c])
    heights = np.diff(bc) / len(data) / np.diff(bx)
    return tuple(bx.tolist()), tuple(heights.tolist())


def check_lcm_oracle():
    """Monotone-chain Grenander equals the brute-force majorant."""
    rng = np.random.default_rng(11)
    for trial in range(30):
        n = int(rng.integers(1, 21))
        data = rng.uniform(0.01, 0.99, size=n)
        if trial % 4 == 0 and n >= 2:
            data[0] = data[1]  # exercise ties
        fit = shape_mle.grenander(data)
        bx, bh = _lcm_slopes_bruteforce(data)
        same = tuple(fit.breakpoints.tolist()) == bx and tuple(
            fit.heights.tolist()
        ) == bh
        if not same:
            raise InvariantFailure(f"trial {trial}: hull differs from brute force")


def check_convex_kkt():
    """Convex fit satisfies first-order optimality and likelihood order."""
    for seed in (1, 2):
        data = generators.sample_density("g2", 150, seed)
        fit = shape_mle.convex_npmle(data)
        if not fit.converged:
            raise InvariantFailure(f"seed {seed}: convex fit did not converge")
        grad = shape_mle.npmle_gradient(fit, data, shape_mle.candidate_thetas(data))
        worst = float(np.max(grad))
        if worst > 1.0 + 1e-5:
            raise InvariantFailure(f"seed {seed}: KKT violated, max D = {worst!r}")
        gap = fit.log_likelihood(data) - shape_mle.grenander(data).log_likelihood(data)
        if gap > 1e-8:
            raise InvariantFailure(
                f"seed {seed}: convex log-likelihood exceeds Grenander by {gap!r}"
            )


def check_beta0_hellinger_bound():
    """Background weights of nearby mixtures obey the Hellinger bound."""
    rng = np.random.default_rng(3)

    def draw():
        k = int(rng.integers(2, 7))
        n_atoms = int(rng.integers(1, 4))
        w = rng.dirichlet(np.ones(n_atoms))
        thetas = rng.uniform(0.05, 1.0, size=n_atoms)
        return kernels.KMixture(k, float(rng.random()), tuple(zip(thetas, w)))

    for trial in range(50):
        m1, m2 = draw(), draw()
        d_h = metrics.hellinger(
            lambda x: kernels.mixture_pdf(m1, x), lambda x: kernels.mixture_pdf(m2, x)
        )
        gap = abs(m1.beta0 - m2.beta0)
        if gap > np.sqrt(6.0 * d_h) + 1e-9:
            raise InvariantFailure(
                f"trial {trial}: |beta0 gap| {gap!r} > sqrt(6 d_H) {np.sqrt(6 * d_h)!r}"
            )


def check_sampler_determinism():
    """Identical configuration produces identical posterior draws."""
    data = generators.sample_density("g1", 40, 5)
    prior = slice_sampler.PriorConfig()
    cfg = slice_sampler.SamplerConfig(burn_in=50, draws=20, seed=9)
    first = slice_sampler.run_chain(data, prior, cfg)
    second = slice_sampler.run_chain(data, prior, cfg)
    if first != second:
        raise InvariantFailure("two identical chains diverged")


def check_posterior_mass():
    """Posterior-mean density integrates to about one."""
    data = generators.sample_density("g2", 80, 3)
    cfg = slice_sampler.SamplerConfig(burn_in=80, draws=40, seed=1)
    draws = slice_sampler.run_chain(data, slice_sampler.PriorConfig(), cfg)
    grid = np.linspace(0.0, 1.0, 401)
    dens = np.zeros_like(grid)
    for d in draws:
        dens += kernels.mixture_pdf(d.to_kmixture(), grid)
    dens /= len(draws)
    mass = float(np.trapezoid(dens, grid))
    if abs(mass - 1.0) > 0.02:
        raise InvariantFailure(f"posterior mean density mass {mass!r}")


INVARIANTS = (
    ("psi support", check_psi_support),
    ("psi mass", check_psi_mass),
    ("psi cdf roundtrip", check_psi_roundtrip),
    ("psi l1 closed form", check_l1_closed_form),
    ("lcm oracle", check_lcm_oracle),
    ("convex kkt", check_convex_kkt),
    ("beta0 hellinger bound", check_beta0_hellinger_bound),
    ("sampler determinism", check_sampler_determinism),
    ("posterior mass", check_posterior_mass),
)


def list_invariants() -> list[str]:
    return [name for name, _ in INVARIANTS]


def run_selftest(report=None) -> list[tuple[str, str]]:
    """Run every invariant; return (name, message) for the failures.

    Parameters
    ----------
    report : callable, optional
        Called with one status line per invariant as it completes.
    """
    failures = []
    for name, check in INVARIANTS:
        try:
            check()
        except Exception as exc:  # a failed probe must not stop the rest
            failures.append((name, str(exc)))
            if report:
                report(f"FAIL {name}: {exc}")
        else:
            if report:
                report(f"ok   {name}")
    return failures

"""Synthetic test densities, the MSE replication harness, and a contraction probe.

Six reference densities on (0, 1) cover the estimators' target classes:

    g1 = psi_2(x, 1) = 2(1-x)                 convex decreasing
    g2 = 0.5 + 0.5 g1 = 1.5 - x               convex decreasing, flat floor
    g3 = sum_j (1/3) psi_2(x, j/3)            convex decreasing, 3 kinks
    g4 = 0.5 g3 + 0.5                         convex decreasing, flat floor
    g5 = sum_j (1/3) psi_4(x, j/3)            4-monotone
    g6 = int psi_4(x, th) 2 th dth            4-monotone, smooth mixing

g1-g5 are finite psi mixtures with closed forms supplied by the kernel
module; g6 mixes psi_4 over theta ~ Beta(2, 1) and has the closed forms

    g6(x) = 8 (1 + 1.5 x - 3 x^2 + 0.5 x^3 + 3 x log x)
    G6(x) = 8 x - 8 x^3 + x^4 + 12 x^2 log x.

The replication harness reproduces the mean-MSE comparison table for four
methods (posterior mean at the generating k, adaptive-k posterior mean,
convex NPMLE, Grenander) with per-replication seeds derived purely from the
cell coordinates, so results are independent of execution order and worker
count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from functools import partial

import numpy as np

from .kernels import KMixture, mixture_cdf, mixture_pdf, mixture_sample
from .metrics import GridDensity, canonical_grid, hellinger, mse_grid
from .shape_mle import convex_npmle, grenander
from .slice_sampler import (
    PriorConfig,
    SamplerConfig,
    posterior_mean_density,
    run_chain,
)

__all__ = [
    "DensitySpec",
    "DENSITY_IDS",
    "METHODS",
    "density_spec",
    "sample_density",
    "ExperimentPlan",
    "run_mse_experiment",
    "results_to_csv",
    "results_to_markdown",
    "contraction_errors",
    "contraction_probe",
    "bootstrap_slope_ci",
]

METHODS = ("bay", "ada", "con", "gre")
_METHOD_STREAM = {"bay": 1, "ada": 2, "con": 3, "gre": 4}
_DENSITY_STREAM = {"g1": 1, "g2": 2, "g3": 3, "g4": 4, "g5": 5, "g6": 6}

_THIRDS = ((1.0 / 3.0, 1.0 / 3.0), (2.0 / 3.0, 1.0 / 3.0), (1.0, 1.0 / 3.0))


@dataclass(frozen=True)
class DensitySpec:
    """A test density: closed-form evaluator plus an exact sampling recipe.

    mixture is the finite psi-mixture representation when one exists; the
    only member without one is g6, whose psi_4 mixing density 2 theta is
    continuous.  k records the generating kernel order, which the "bay"
    method uses as its known k.
    """

    id: str
    k: int
    mixture: KMixture | None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.mixture is None and self.id != "g6":
            raise ValueError("only g6 has no finite mixture representation")

    def pdf(self, x):
        xv = np.asarray(x, dtype=float)
        if np.any(xv < 0.0) or np.any(xv > 1.0):
            raise ValueError("density evaluation points must lie in [0, 1]")
        if self.mixture is not None:
            return mixture_pdf(self.mixture, x)
        safe = np.where(xv > 0.0, xv, 1.0)
        out = 8.0 * (
            1.0 + 1.5 * xv - 3.0 * xv**2 + 0.5 * xv**3 + 3.0 * xv * np.log(safe)
        )
        out = np.where(xv > 0.0, np.maximum(out, 0.0), 8.0)
        return out if out.ndim else float(out)

    def cdf(self, x):
        xv = np.asarray(x, dtype=float)
        if np.any(xv < 0.0) or np.any(xv > 1.0):
            raise ValueError("CDF evaluation points must lie in [0, 1]")
        if self.mixture is not None:
            return mixture_cdf(self.mixture, x)
        safe = np.where(xv > 0.0, xv, 1.0)
        out = 8.0 * xv - 8.0 * xv**3 + xv**4 + 12.0 * xv**2 * np.log(safe)
        out = np.clip(np.where(xv > 0.0, out, 0.0), 0.0, 1.0)
        return out if out.ndim else float(out)


_DENSITIES = {
    "g1": DensitySpec("g1", 2, KMixture(2, 0.0, ((1.0, 1.0),))),
    "g2": DensitySpec("g2", 2, KMixture(2, 0.5, ((1.0, 1.0),))),
    "g3": DensitySpec("g3", 2, KMixture(2, 0.0, _THIRDS)),
    "g4": DensitySpec("g4", 2, KMixture(2, 0.5, _THIRDS)),
    "g5": DensitySpec("g5", 4, KMixture(4, 0.0, _THIRDS)),
    "g6": DensitySpec("g6", 4, None),
}
DENSITY_IDS = tuple(_DENSITIES)


def density_spec(density_id: str) -> DensitySpec:
    try:
        return _DENSITIES[density_id]
    except KeyError:
        raise ValueError(
            f"unknown density {density_id!r}; choose from {DENSITY_IDS}"
        ) from None


def _open_uniform(rng: np.random.Generator, n: int) -> np.ndarray:
    """U(0,1) variates with the measure-zero edge u = 0 redrawn away."""
    u = rng.random(n)
    while True:
        zero = u == 0.0
        if not np.any(zero):
            return u
        u[zero] = rng.random(int(zero.sum()))


def _draw(spec: DensitySpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if spec.mixture is not None:
        return np.asarray(
            mixture_sample(spec.mixture, _open_uniform(rng, n), _open_uniform(rng, n))
        )
    theta = rng.beta(2.0, 1.0, size=n)
    u = _open_uniform(rng, n)
    return theta * (1.0 - (1.0 - u) ** 0.25)


def sample_density(spec: DensitySpec | str, n: int, seed) -> np.ndarray:
    """n i.i.d. draws strictly inside (0, 1); deterministic given seed."""
    if isinstance(spec, str):
        spec = density_spec(spec)
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    x = _draw(spec, n, rng)
    for _ in range(64):
        # float rounding can park a draw exactly on a boundary; redraw those
        bad = (x <= 0.0) | (x >= 1.0)
        if not np.any(bad):
            return x
        x[bad] = _draw(spec, int(bad.sum()), rng)
    raise RuntimeError("sampler kept producing boundary values")


@dataclass(frozen=True)
class ExperimentPlan:
    """Replication design for the mean-MSE comparison table."""

    densities: tuple[str, ...] = DENSITY_IDS
    sizes: tuple[int, ...] = (100, 200, 500)
    replications: int = 100
    methods: tuple[str, ...] = METHODS
    master_seed: int = 0
    burn_in: int = 2000
    draws: int = 1000

    def __post_init__(self):
        dens = tuple(self.densities)
        for d in dens:
            density_spec(d)
        if len(set(dens)) != len(dens):
            raise ValueError("duplicate density ids")
        sizes = tuple(int(n) for n in self.sizes)
        if len(sizes) == 0 or any(n < 2 for n in sizes):
            raise ValueError("sizes must be integers >= 2")
        methods = tuple(m.lower() for m in self.methods)
        bad = [m for m in methods if m not in METHODS]
        if bad or len(set(methods)) != len(methods):
            raise ValueError(f"methods must be distinct members of {METHODS}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in an unsigned 64-bit integer")
        if self.burn_in < 0 or self.draws < 1:
            raise ValueError("need burn_in >= 0 and draws >= 1")
        object.__setattr__(self, "densities", dens)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "methods", methods)


def _seed_seq(master: int, density: str, n: int, rep: int, stream: int):
    """Seed keyed purely by cell coordinates; order- and pool-independent."""
    return np.random.SeedSequence(
        master, spawn_key=(_DENSITY_STREAM[density], n, rep, stream)
    )


def _chain_seed(master: int, density: str, n: int, rep: int, method: str) -> int:
    ss = _seed_seq(master, density, n, rep, _METHOD_STREAM[method])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _fit_on_grid(
    method: str, data: np.ndarray, spec: DensitySpec, plan: ExperimentPlan, rep: int, n: int
) -> GridDensity:
    grid = canonical_grid(100)
    if method in ("bay", "ada"):
        prior = PriorConfig(fixed_k=spec.k) if method == "bay" else PriorConfig()
        cfg = SamplerConfig(
            burn_in=plan.burn_in,
            draws=plan.draws,
            seed=_chain_seed(plan.master_seed, spec.id, n, rep, method),
        )
        return posterior_mean_density(run_chain(data, prior, cfg), grid)
    if method == "con":
        return GridDensity(grid, convex_npmle(data).pdf(grid))
    return GridDensity(grid, grenander(data).evaluate(grid))


def _replicate_cell(
    plan: ExperimentPlan, density: str, n: int, rep: int
) -> tuple[dict[str, float], dict[str, str]]:
    """All methods on one replication's dataset; errors reported per method."""
    spec = density_spec(density)
    mses: dict[str, float] = {}
    errors: dict[str, str] = {}
    try:
        data = sample_density(spec, n, _seed_seq(plan.master_seed, density, n, rep, 0))
    except Exception as exc:  # data failure fails every method of this rep
        return mses, {m: f"data: {exc}" for m in plan.methods}
    for method in plan.methods:
        try:
            est = _fit_on_grid(method, data, spec, plan, rep, n)
            mses[method] = mse_grid(est, spec.pdf)
        except Exception as exc:
            errors[method] = str(exc)
    return mses, errors


def _run_tasks(fn, tasks, threads: int) -> dict:
    if threads <= 1:
        return {t: fn(*t) for t in tasks}
    out = {}
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = {pool.submit(fn, *t): t for t in tasks}
        for fut in as_completed(futures):
            out[futures[fut]] = fut.result()
    return out


def run_mse_experiment(plan: ExperimentPlan, threads: int = 1) -> list[dict]:
    """Mean MSE per (method, n, density) over plan.replications datasets.

    Each replication's dataset is shared by all methods; failures are
    excluded from the cell mean and counted, and more than 5% failures
    overall abort the run.  Output rows are ordered by (n, density, method).
    """
    tasks = [
        (d, n, rep)
        for d in plan.densities
        for n in plan.sizes
        for rep in range(plan.replications)
    ]
    results = _run_tasks(partial(_replicate_cell, plan), tasks, threads)

    n_failures = sum(len(errs) for _, errs in results.values())
    total = len(tasks) * len(plan.methods)
    if n_failures > 0.05 * total:
        examples = [
            f"{key}/{m}: {msg}"
            for key, (_, errs) in sorted(results.items())
            for m, msg in errs.items()
        ][:5]
        raise RuntimeError(
            f"{n_failures}/{total} replication tasks failed; first: {examples}"
        )

    rows = []
    for n in plan.sizes:
        for d in plan.densities:
            for m in plan.methods:
                vals = [
                    results[(d, n, rep)][0][m]
                    for rep in range(plan.replications)
                    if m in results[(d, n, rep)][0]
                ]
                arr = np.asarray(vals)
                rows.append(
                    {
                        "method": m,
                        "n": n,
                        "density": d,
                        "mean_mse": float(arr.mean()) if len(arr) else float("nan"),
                        "se_mse": float(arr.std(ddof=1) / np.sqrt(len(arr)))
                        if len(arr) > 1
                        else 0.0,
                        "R": plan.replications,
                        "failures": plan.replications - len(arr),
                    }
                )
    return rows


def results_to_csv(rows: list[dict]) -> str:
    lines = ["method,n,density,mean_mse,se_mse,R,failures"]
    for r in rows:
        lines.append(
            f"{r['method']},{r['n']},{r['density']},{float(r['mean_mse'])!r},"
            f"{float(r['se_mse'])!r},{r['R']},{r['failures']}"
        )
    return "\n".join(lines) + "\n"


def results_to_markdown(rows: list[dict]) -> str:
    """One block per sample size: methods as rows, densities as columns."""
    sizes = sorted({r["n"] for r in rows})
    densities = sorted({r["density"] for r in rows})
    methods = []
    for r in rows:  # preserve first-seen method order
        if r["method"] not in methods:
            methods.append(r["method"])
    cells = {(r["method"], r["n"], r["density"]): r["mean_mse"] for r in rows}
    out = []
    for n in sizes:
        out.append(f"### n = {n}")
        out.append("")
        out.append("| method | " + " | ".join(densities) + " |")
        out.append("| --- | " + " | ".join("---" for _ in densities) + " |")
        for m in methods:
            vals = [
                f"{cells[(m, n, d)]:.4f}" if (m, n, d) in cells else "-"
                for d in densities
            ]
            out.append(f"| {m} | " + " | ".join(vals) + " |")
        out.append("")
    return "\n".join(out)


def _contraction_rep(
    spec_id: str, k: int, n: int, rep: int, master_seed: int, burn_in: int, draws: int
) -> float:
    spec = density_spec(spec_id)
    ss_data = np.random.SeedSequence(master_seed, spawn_key=(n, rep, 0))
    ss_chain = np.random.SeedSequence(master_seed, spawn_key=(n, rep, 1))
    data = sample_density(spec, n, ss_data)
    cfg = SamplerConfig(
        burn_in=burn_in,
        draws=draws,
        seed=int(ss_chain.generate_state(1, dtype=np.uint64)[0]),
    )
    chain = run_chain(data, PriorConfig(fixed_k=k), cfg)
    mixes = [d.to_kmixture() for d in chain]

    def estimate(xs):
        acc = np.zeros_like(np.asarray(xs, dtype=float))
        for m in mixes:
            acc += mixture_pdf(m, xs)
        return acc / len(mixes)

    return hellinger(estimate, spec.pdf)


def contraction_errors(
    density: DensitySpec | str,
    k: int,
    sizes,
    reps: int,
    master_seed: int = 0,
    burn_in: int = 2000,
    draws: int = 1000,
    threads: int = 1,
) -> np.ndarray:
    """(reps, len(sizes)) Hellinger errors of the posterior mean density."""
    spec_id = density if isinstance(density, str) else density.id
    density_spec(spec_id)
    sizes = [int(n) for n in sizes]
    if reps < 1 or any(n < 2 for n in sizes):
        raise ValueError("need reps >= 1 and sizes >= 2")
    tasks = [
        (spec_id, k, n, rep, master_seed, burn_in, draws)
        for n in sizes
        for rep in range(reps)
    ]
    results = _run_tasks(_contraction_rep, tasks, threads)
    return np.array(
        [[results[(spec_id, k, n, rep, master_seed, burn_in, draws)] for n in sizes]
         for rep in range(reps)]
    )


def contraction_probe(
    density: DensitySpec | str, k: int, sizes, reps: int, **kwargs
) -> list[tuple[int, float]]:
    """Median posterior-mean Hellinger error per sample size."""
    sizes = [int(n) for n in sizes]
    errs = contraction_errors(density, k, sizes, reps, **kwargs)
    med = np.median(errs, axis=0)
    return [(n, float(e)) for n, e in zip(sizes, med)]


def bootstrap_slope_ci(
    sizes, errors: np.ndarray, n_boot: int = 1000, seed: int = 0, level: float = 0.95
) -> tuple[float, float]:
    """Percentile CI for the log-log slope of median error against n.

    Resamples replications (rows of errors) with replacement; each resample
    contributes the least-squares slope of log median-error on log n.
    """
    sizes = np.asarray(sizes, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if errors.ndim != 2 or errors.shape[1] != len(sizes) or len(sizes) < 2:
        raise ValueError("errors must be (reps, len(sizes)) with >= 2 sizes")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    reps = errors.shape[0]
    logn = np.log(sizes)
    slopes = np.empty(n_boot)
    for b in range(n_boot):
        med = np.median(errors[rng.integers(0, reps, reps)], axis=0)
        slopes[b] = np.polyfit(logn, np.log(med), 1)[0]
    alpha = 0.5 * (1.0 - level)
    lo, hi = np.quantile(slopes, [alpha, 1.0 - alpha])
    return float(lo), float(hi)

"""Multiple-testing simulation and null-proportion estimation.

Simulates batches of one-sample t-tests with a controlled fraction of
true nulls and block-equicorrelated noise, then estimates the null
proportion pi0 from the resulting p-values.  Under the null a p-value
is Uniform(0,1); alternatives push mass toward zero, so pi0 is the
uniform-component weight of the p-value density.  Two estimators are
provided: the posterior mean of the background weight under the
adaptive-k mixture chain, and the uniform weight of the convex
decreasing maximum-likelihood fit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy.stats import t as t_dist

from .generators import _run_tasks
from .shape_mle import convex_npmle, pi0_from_convex
from .slice_sampler import (
    PriorConfig,
    SamplerConfig,
    posterior_mean_beta0,
    run_chain,
)

MTP_METHODS = ("bayes", "convex")

#: Default effect-size window: fold changes from 1.2x to 4x on the log2 scale.
EFFECT_A = math.log2(1.2)
EFFECT_B = 2.0

_SIDEDNESS = ("two-sided", "one-sided")


@dataclass(frozen=True)
class MtpScenario:
    """One simulation setting for the multiple-testing experiment.

    Parameters
    ----------
    n_tests : int
        Number of simultaneous tests (coordinates), default 2000.
    m : int
        Replicates per test; the t statistic has m - 1 degrees of
        freedom, so m >= 2.
    alpha0 : float
        True proportion of null tests, in (0, 1).
    block_size : int
        Size G of the equicorrelated blocks; must divide n_tests.
    rho : float
        Within-block correlation, in [0, 1).
    sidedness : str
        "two-sided" or "one-sided" t-test p-values.
    effect_a, effect_b : float
        Support endpoints 0 < a < b of the triangular effect-size
        distribution (midpoint peak).
    """

    n_tests: int = 2000
    m: int = 10
    alpha0: float = 0.9
    block_size: int = 50
    rho: float = 0.0
    sidedness: str = "two-sided"
    effect_a: float = EFFECT_A
    effect_b: float = EFFECT_B

    def __post_init__(self):
        if self.n_tests < 1:
            raise ValueError("n_tests must be a positive integer")
        if self.m < 2:
            raise ValueError("need m >= 2 replicates for a t statistic")
        if not 0.0 < self.alpha0 < 1.0:
            raise ValueError("alpha0 must lie strictly inside (0, 1)")
        if self.block_size < 1 or self.n_tests % self.block_size != 0:
            raise ValueError("block_size must be positive and divide n_tests")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if self.sidedness not in _SIDEDNESS:
            raise ValueError(f"sidedness must be one of {_SIDEDNESS}")
        if not 0.0 < self.effect_a < self.effect_b:
            raise ValueError("effect window needs 0 < effect_a < effect_b")


@dataclass(frozen=True)
class PvalueSet:
    """P-values with ground-truth null labels.

    Parameters
    ----------
    values : ndarray
        P-values in (0, 1].
    truth_mask : ndarray of bool
        True where the corresponding test is a true null.
    """

    values: np.ndarray
    truth_mask: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.truth_mask, dtype=bool)
        if values.ndim != 1 or mask.shape != values.shape:
            raise ValueError("values and truth_mask must be 1-d with equal length")
        if len(values) == 0:
            raise ValueError("need at least one p-value")
        if not np.all((values > 0.0) & (values <= 1.0)):
            raise ValueError("p-values must lie in (0, 1]")
        values.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "truth_mask", mask)

    @property
    def n_null(self) -> int:
        return int(self.truth_mask.sum())


def _draw_effects(rng, size: int, a: float, b: float, sidedness: str) -> np.ndarray:
    """Mean shifts for non-null tests.

    Magnitudes follow the triangle on [a, b] peaking at the midpoint;
    two-sided scenarios flip each sign with probability 1/2.
    """
    mu = rng.triangular(a, 0.5 * (a + b), b, size=size)
    if sidedness == "two-sided":
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        mu = sign * mu
    return mu


def simulate_pvalues(sc: MtpScenario, seed) -> PvalueSet:
    """Simulate one batch of one-sample t-test p-values.

    The number of nulls is Binomial(n_tests, alpha0) at uniformly random
    positions; alternatives receive a mean shift from the effect
    distribution.  Noise is unit-variance Gaussian with equicorrelation
    rho inside consecutive blocks of block_size tests, built per block
    as sqrt(rho) * Z_block + sqrt(1 - rho) * Z_i.

    Parameters
    ----------
    sc : MtpScenario
        Simulation setting.
    seed : int or SeedSequence
        Source for the random stream.

    Returns
    -------
    PvalueSet
    """
    if not isinstance(sc, MtpScenario):
        raise TypeError("sc must be an MtpScenario")
    rng = np.random.default_rng(seed)
    n = sc.n_tests

    n_null = int(rng.binomial(n, sc.alpha0))
    order = rng.permutation(n)
    mask = np.zeros(n, dtype=bool)
    mask[order[:n_null]] = True
    mu = np.zeros(n)
    mu[~mask] = _draw_effects(rng, n - n_null, sc.effect_a, sc.effect_b, sc.sidedness)

    n_blocks = n // sc.block_size
    z_block = rng.standard_normal((sc.m, n_blocks))
    z_own = rng.standard_normal((sc.m, n))
    x = mu + math.sqrt(sc.rho) * np.repeat(z_block, sc.block_size, axis=1)
    x += math.sqrt(1.0 - sc.rho) * z_own

    t_stat = x.mean(axis=0) * math.sqrt(sc.m) / x.std(axis=0, ddof=1)
    if sc.sidedness == "two-sided":
        p = 2.0 * t_dist.sf(np.abs(t_stat), df=sc.m - 1)
    else:
        p = t_dist.sf(t_stat, df=sc.m - 1)
    # sf can underflow to exactly 0 for huge |t|; keep values inside (0, 1]
    p = np.maximum(p, 5e-324)
    return PvalueSet(values=p, truth_mask=mask)


def _open_values(p) -> np.ndarray:
    values = p.values if isinstance(p, PvalueSet) else np.asarray(p, dtype=float)
    values = np.array(values, dtype=float)
    values[values == 1.0] = 1.0 - 1e-12  # estimators need the open interval
    return values


def estimate_pi0_bayes(
    p,
    prior: PriorConfig | None = None,
    cfg: SamplerConfig | None = None,
) -> float:
    """Posterior-mean background weight of the mixture chain on p-values.

    Parameters
    ----------
    p : PvalueSet or array_like
        P-values in (0, 1]; values equal to 1 are nudged to 1 - 1e-12.
    prior : PriorConfig, optional
        Defaults to the adaptive-k prior.
    cfg : SamplerConfig, optional
        Chain length and seed.

    Returns
    -------
    float
        Estimate of the null proportion in [0, 1].
    """
    values = _open_values(p)
    draws = run_chain(values, prior or PriorConfig(), cfg or SamplerConfig())
    return posterior_mean_beta0(draws)


def estimate_pi0_convex(p) -> float:
    """Uniform-component weight of the convex decreasing MLE on p-values."""
    return pi0_from_convex(convex_npmle(_open_values(p)))


def scenarios_from_config(config: dict) -> list[MtpScenario]:
    """Expand a config mapping into the cross product of scenarios.

    Keys alpha0, rho, G and sidedness may be scalars or lists; n_tests,
    m, effect_a and effect_b are scalars applied to every scenario.

    Parameters
    ----------
    config : dict
        Grid specification, e.g. {"alpha0": [0.5, 0.9], "rho": [0.0, 0.75]}.

    Returns
    -------
    list of MtpScenario
    """

    def as_list(key, default):
        raw = config.get(key, default)
        return list(raw) if isinstance(raw, (list, tuple)) else [raw]

    known = {"alpha0", "rho", "G", "sidedness", "n_tests", "m", "effect_a", "effect_b"}
    unknown = set(config) - known
    if unknown:
        raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
    return [
        MtpScenario(
            n_tests=int(config.get("n_tests", 2000)),
            m=int(config.get("m", 10)),
            alpha0=float(alpha0),
            block_size=int(block),
            rho=float(rho),
            sidedness=str(sided),
            effect_a=float(config.get("effect_a", EFFECT_A)),
            effect_b=float(config.get("effect_b", EFFECT_B)),
        )
        for alpha0, rho, block, sided in itertools.product(
            as_list("alpha0", 0.9),
            as_list("rho", 0.0),
            as_list("G", 50),
            as_list("sidedness", "two-sided"),
        )
    ]


def _scenario_seed_seq(master: int, sc: MtpScenario, rep: int, stream: int):
    """Seed keyed by scenario content, not grid position."""
    key = (
        sc.n_tests,
        sc.m,
        int(round(sc.alpha0 * 1e9)),
        sc.block_size,
        int(round(sc.rho * 1e9)),
        _SIDEDNESS.index(sc.sidedness),
        rep,
        stream,
    )
    return np.random.SeedSequence(master, spawn_key=key)


def _mtp_replicate(
    master_seed: int,
    methods: tuple[str, ...],
    burn_in: int,
    draws: int,
    sc: MtpScenario,
    rep: int,
) -> tuple[dict, dict]:
    """One replication: simulate a batch and run the requested estimators."""
    estimates, errors = {}, {}
    try:
        pvals = simulate_pvalues(sc, _scenario_seed_seq(master_seed, sc, rep, 0))
    except Exception as exc:  # data failure fails every method
        return {}, {m: f"simulate: {exc}" for m in methods}
    for method in methods:
        try:
            if method == "bayes":
                chain_seed = int(
                    _scenario_seed_seq(master_seed, sc, rep, 1).generate_state(
                        1, dtype=np.uint64
                    )[0]
                )
                cfg = SamplerConfig(burn_in=burn_in, draws=draws, seed=chain_seed)
                estimates[method] = estimate_pi0_bayes(pvals, PriorConfig(), cfg)
            else:
                estimates[method] = estimate_pi0_convex(pvals)
        except Exception as exc:
            errors[method] = str(exc)
    return estimates, errors


def run_mtp_experiment(
    scenarios,
    replications: int,
    master_seed: int = 0,
    methods: tuple[str, ...] = MTP_METHODS,
    burn_in: int = 2000,
    draws: int = 1000,
    threads: int = 1,
) -> list[dict]:
    """Estimate pi0 for every scenario, replication and method.

    Each replication simulates one p-value batch shared by both
    estimators.  Results are deterministic given (master_seed, scenario,
    rep) regardless of grid order or thread count.  More than 5% failed
    estimates abort the run; isolated failures are dropped and counted
    by the caller via missing rows.

    Parameters
    ----------
    scenarios : sequence of MtpScenario
    replications : int
        Replications per scenario.
    master_seed : int
        Root seed for all streams.
    methods : tuple of str
        Subset of ("bayes", "convex").
    burn_in, draws : int
        Chain lengths for the Bayes estimator.
    threads : int
        Worker processes; 1 runs serially.

    Returns
    -------
    list of dict
        Long-format rows with keys alpha0, rho, G, sidedness, rep,
        method, estimate, ordered by (scenario position, rep, method).
    """
    scenarios = list(scenarios)
    if not scenarios:
        raise ValueError("need at least one scenario")
    for sc in scenarios:
        if not isinstance(sc, MtpScenario):
            raise TypeError("scenarios must be MtpScenario instances")
    if len(set(scenarios)) != len(scenarios):
        raise ValueError("duplicate scenarios share random streams; deduplicate")
    if replications < 1:
        raise ValueError("replications must be >= 1")
    methods = tuple(m.lower() for m in methods)
    unknown = set(methods) - set(MTP_METHODS)
    if unknown or not methods:
        raise ValueError(f"methods must be a nonempty subset of {MTP_METHODS}")

    tasks = [(sc, rep) for sc in scenarios for rep in range(replications)]
    worker = partial(_mtp_replicate, master_seed, methods, burn_in, draws)
    results = _run_tasks(worker, tasks, threads)

    n_failures = sum(len(errs) for _, errs in results.values())
    total = len(tasks) * len(methods)
    if n_failures > 0.05 * total:
        examples = [
            f"alpha0={sc.alpha0},rho={sc.rho},rep={rep}/{m}: {msg}"
            for (sc, rep) in tasks
            for m, msg in results[(sc, rep)][1].items()
        ][:5]
        raise RuntimeError(
            f"{n_failures}/{total} estimation tasks failed; first: {examples}"
        )

    rows = []
    for sc in scenarios:
        for rep in range(replications):
            estimates, _ = results[(sc, rep)]
            for method in methods:
                if method not in estimates:
                    continue
                rows.append(
                    {
                        "alpha0": sc.alpha0,
                        "rho": sc.rho,
                        "G": sc.block_size,
                        "sidedness": sc.sidedness,
                        "rep": rep,
                        "method": method,
                        "estimate": float(estimates[method]),
                    }
                )
    return rows


def mtp_rows_to_csv(rows: list[dict]) -> str:
    lines = ["alpha0,rho,G,sidedness,rep,method,estimate"]
    for r in rows:
        lines.append(
            f"{float(r['alpha0'])!r},{float(r['rho'])!r},{r['G']},{r['sidedness']},"
            f"{r['rep']},{r['method']},{float(r['estimate'])!r}"
        )
    return "\n".join(lines) + "\n"


def estimates_histogram_csv(values, bins: int = 40) -> str:
    """Density-normalized histogram of estimates over [0, 1] for plotting.

    Parameters
    ----------
    values : array_like
        Estimates from one (scenario, method) cell.
    bins : int
        Number of equal-width bins.

    Returns
    -------
    str
        CSV with columns bin_left, bin_right, density.
    """
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or len(arr) == 0:
        raise ValueError("need a nonempty 1-d array of estimates")
    if np.any((arr < 0.0) | (arr > 1.0)):
        raise ValueError("estimates must lie in [0, 1]")
    density, edges = np.histogram(arr, bins=bins, range=(0.0, 1.0), density=True)
    lines = ["bin_left,bin_right,density"]
    for i, d in enumerate(density):
        lines.append(f"{float(edges[i])!r},{float(edges[i + 1])!r},{float(d)!r}")
    return "\n".join(lines) + "\n"

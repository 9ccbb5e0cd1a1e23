"""Estimation of k-monotone densities on (0, 1).

Bayesian route: a Dirichlet-process scale mixture of scaled-beta kernels
with an explicit uniform component, fit by a slice Gibbs sampler that can
also adapt the monotonicity order k.  Frequentist route: the Grenander
(decreasing) and convex-decreasing nonparametric MLEs.  On p-value data the
uniform-component weight is an estimate of the proportion of true nulls.
"""

__version__ = "0.1.0"

from .generators import (
    DENSITY_IDS,
    DensitySpec,
    ExperimentPlan,
    bootstrap_slope_ci,
    contraction_errors,
    contraction_probe,
    density_spec,
    results_to_csv,
    results_to_markdown,
    run_mse_experiment,
    sample_density,
)
from .kernels import (
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
from .metrics import (
    GridDensity,
    best_finite_mixture_error,
    canonical_grid,
    hellinger,
    kl_divergence,
    l1_distance,
    mse_grid,
)
from .shape_mle import (
    ConvexFit,
    StepDensity,
    convex_npmle,
    grenander,
    pi0_from_convex,
)
from .slice_sampler import (
    PosteriorDraw,
    PriorConfig,
    SamplerConfig,
    draws_from_jsonl,
    draws_to_jsonl,
    posterior_mean_beta0,
    posterior_mean_density,
    run_chain,
)
from .multitest import (
    MtpScenario,
    PvalueSet,
    estimate_pi0_bayes,
    estimate_pi0_convex,
    run_mtp_experiment,
    scenarios_from_config,
    simulate_pvalues,
)
from .runstore import (
    NotARunError,
    RunIntegrityError,
    RunManifest,
    load_run,
    write_run,
)

__all__ = [
    "KernelParams",
    "KMixture",
    "psi_pdf",
    "psi_cdf",
    "psi_sample",
    "mixture_pdf",
    "mixture_cdf",
    "mixture_sample",
    "psi_l1_distance",
    "GridDensity",
    "canonical_grid",
    "hellinger",
    "l1_distance",
    "kl_divergence",
    "mse_grid",
    "best_finite_mixture_error",
    "PriorConfig",
    "SamplerConfig",
    "PosteriorDraw",
    "run_chain",
    "posterior_mean_density",
    "posterior_mean_beta0",
    "draws_to_jsonl",
    "draws_from_jsonl",
    "StepDensity",
    "ConvexFit",
    "grenander",
    "convex_npmle",
    "pi0_from_convex",
    "DensitySpec",
    "DENSITY_IDS",
    "density_spec",
    "sample_density",
    "ExperimentPlan",
    "run_mse_experiment",
    "results_to_csv",
    "results_to_markdown",
    "contraction_errors",
    "contraction_probe",
    "bootstrap_slope_ci",
    "MtpScenario",
    "PvalueSet",
    "simulate_pvalues",
    "estimate_pi0_bayes",
    "estimate_pi0_convex",
    "run_mtp_experiment",
    "scenarios_from_config",
    "RunManifest",
    "write_run",
    "load_run",
    "NotARunError",
    "RunIntegrityError",
    "__version__",
]

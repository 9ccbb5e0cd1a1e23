"""Slice Gibbs sampler for Dirichlet-process mixtures of psi_k kernels.

Model: data x_1..x_n in (0, 1) are draws from

    g(x) = beta0 + (1 - beta0) * sum_l w_l psi_k(x; theta_l),

where the weights w_l = V_l prod_{m<l} (1 - V_m) follow a stick-breaking
(Dirichlet-process) prior with precision a, the atoms theta_l are iid from a
uniform base measure on [base_low, base_high], beta0 is uniform on [0, 1],
and k is either fixed or given a discrete uniform prior over a finite set.

The infinite mixture is handled by the slice-efficient auxiliary scheme:
each observation carries a label z_i (0 = uniform component, l >= 1 = atom)
and a slice variable u_i; a deterministic decreasing envelope xi_l = 0.9^l
bounds how many sticks must be instantiated in any sweep.  One sweep updates,
in order: slice variables, allocations, stick fractions, atoms (random-walk
Metropolis on a logit scale), beta0 (conjugate Beta), and, when adaptive, k
from its discrete conditional at the current truncation followed by an
allocation/slice refresh.

A note on the prior configuration: an alternative finite-mixture prior (a
random number of atoms J with P(J) proportional to n^(-cJ) and Dirichlet
weights) is part of the recognized configuration vocabulary but is not
sampled here; selecting it raises immediately.  See PriorConfig.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

from .kernels import KMixture, mixture_pdf
from .metrics import GridDensity

__all__ = [
    "PriorConfig",
    "SamplerConfig",
    "SamplerState",
    "PosteriorDraw",
    "run_chain",
    "update_atoms",
    "update_k",
    "posterior_mean_density",
    "posterior_mean_beta0",
    "draws_to_jsonl",
    "draws_from_jsonl",
    "StickLimitError",
    "ChainNumericError",
]

XI_RATIO = 0.9  # deterministic slice envelope xi_l = XI_RATIO**l
LOG_XI = math.log(XI_RATIO)
MH_STEP = 0.5  # random-walk step on the logit scale, not adapted


class StickLimitError(RuntimeError):
    """The slice scheme asked for more sticks than the configured cap."""


class ChainNumericError(RuntimeError):
    """A full conditional became degenerate (non-finite likelihood)."""


@dataclass(frozen=True)
class PriorConfig:
    """Prior hyperparameters.

    precision_a : Dirichlet-process precision a > 0 (default 1).
    base_low, base_high : endpoints of the uniform base measure for atoms;
        ``base_low=None`` resolves to 1/n at run time.
    fixed_k : run with this k; mutually exclusive with adaptation.
    k_values : candidate set for adaptive k (uniform prior), used when
        ``fixed_k`` is None.
    beta0_prior : (a, b) of the Beta prior on the uniform-component weight;
        default (1, 1), i.e. uniform on [0, 1].
    mixing : "dp" only.  "fm" denotes the documented finite-mixture
        alternative (number of atoms J with P(J) ∝ n^(-cJ), Dirichlet
        weights) and is deliberately not implemented.
    """

    precision_a: float = 1.0
    base_low: float | None = None
    base_high: float = 1.0
    fixed_k: int | None = None
    k_values: tuple[int, ...] = tuple(range(1, 11))
    beta0_prior: tuple[float, float] = (1.0, 1.0)
    mixing: str = "dp"

    def __post_init__(self):
        if self.mixing != "dp":
            raise ValueError(
                "only the 'dp' mixing prior is sampled; 'fm' is a documented "
                "configuration type without a sampler"
            )
        if not self.precision_a > 0.0:
            raise ValueError("precision_a must be > 0")
        if not 0.0 < self.base_high <= 1.0:
            raise ValueError("base_high must lie in (0, 1]")
        if self.base_low is not None and not 0.0 < self.base_low < self.base_high:
            raise ValueError("base_low must lie in (0, base_high)")
        if self.fixed_k is not None:
            if isinstance(self.fixed_k, bool) or not isinstance(self.fixed_k, (int, np.integer)):
                raise ValueError("fixed_k must be an integer")
            if self.fixed_k < 1:
                raise ValueError("fixed_k must be >= 1")
            object.__setattr__(self, "fixed_k", int(self.fixed_k))
        ks = tuple(int(k) for k in self.k_values)
        if len(ks) == 0 or any(k < 1 for k in ks) or len(set(ks)) != len(ks):
            raise ValueError("k_values must be a nonempty set of distinct integers >= 1")
        object.__setattr__(self, "k_values", tuple(sorted(ks)))
        a0, b0 = self.beta0_prior
        if not (a0 > 0.0 and b0 > 0.0):
            raise ValueError("beta0_prior parameters must be positive")

    @property
    def adaptive(self) -> bool:
        return self.fixed_k is None


@dataclass(frozen=True)
class SamplerConfig:
    burn_in: int = 2000
    draws: int = 1000
    thin: int = 1
    seed: int = 0
    max_sticks: int | None = None  # None -> max(10 * n, 400)

    def __post_init__(self):
        if self.burn_in < 0 or self.draws < 1 or self.thin < 1:
            raise ValueError("need burn_in >= 0, draws >= 1, thin >= 1")
        if self.seed < 0 or self.seed > 2**64 - 1:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if self.max_sticks is not None and self.max_sticks < 1:
            raise ValueError("max_sticks must be >= 1 when given")


@dataclass
class SamplerState:
    """Mutable Gibbs state; owned by one chain, never shared."""

    data: np.ndarray  # sorted, strictly inside (0, 1)
    z: np.ndarray  # int labels, 0 = uniform component, l >= 1 = atom l
    u_slice: np.ndarray
    sticks: np.ndarray  # stick fractions V_l
    atoms: np.ndarray  # theta_l
    beta0: float
    k: int
    rng: np.random.Generator


@dataclass(frozen=True)
class PosteriorDraw:
    """One retained posterior sample: k, beta0, occupied atoms (renormalized)."""

    k: int
    beta0: float
    atoms: tuple[tuple[float, float], ...]

    def to_kmixture(self) -> KMixture:
        return KMixture(self.k, self.beta0, self.atoms)


def _stick_weights(V: np.ndarray) -> np.ndarray:
    w = np.empty_like(V)
    w[0] = V[0]
    if len(V) > 1:
        w[1:] = V[1:] * np.cumprod(1.0 - V[:-1])
    return w


def _base_bounds(prior: PriorConfig, n: int) -> tuple[float, float]:
    lo = prior.base_low if prior.base_low is not None else 1.0 / n
    hi = prior.base_high
    if not lo < hi:
        raise ValueError(f"base measure degenerate: [{lo}, {hi}]")
    return lo, hi


def _int_power(base: np.ndarray, exponent: int) -> np.ndarray:
    """Elementwise base**exponent for integer exponent >= 1 by squaring.

    Several times faster than ``**`` with a float exponent on the sweep-sized
    matrices used here.  May return ``base`` itself when exponent == 1.
    """
    result = None
    b = base
    e = exponent
    while True:
        if e & 1:
            result = b if result is None else result * b
        e >>= 1
        if e == 0:
            return result
        b = b * b


def _psi_matrix(x: np.ndarray, thetas: np.ndarray, k: int) -> np.ndarray:
    """psi_k(x_i; theta_l) as an (n, L) matrix; the support is x < theta."""
    t = 1.0 - x[:, None] / thetas[None, :]
    scale = k / thetas
    if k == 1:
        return (t > 0.0) * scale
    np.maximum(t, 0.0, out=t)  # zero outside the support, so powers stay zero
    return _int_power(t, k - 1) * scale


def _xi_table(n_sticks: int) -> np.ndarray:
    """[xi_0, .., xi_L] = XI_RATIO**l, with xi_0 = 1 for the uniform label."""
    return XI_RATIO ** np.arange(n_sticks + 1, dtype=float)


def _categorical_rows(scores: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one index per row proportional to the row's nonnegative scores."""
    cs = np.cumsum(scores, axis=1)
    tot = cs[:, -1]
    if np.any(tot <= 0.0) or not np.all(np.isfinite(tot)):
        raise ChainNumericError("allocation scores vanished for some observation")
    r = rng.random(len(scores)) * tot
    z = (r[:, None] >= cs).sum(axis=1)
    z = np.minimum(z, scores.shape[1] - 1)
    # rounding can in principle land on a zero-score column; repair by argmax
    bad = scores[np.arange(len(scores)), z] <= 0.0
    if np.any(bad):
        z[bad] = np.argmax(scores[bad], axis=1)
    return z


def _init_state(x: np.ndarray, prior: PriorConfig, cfg: SamplerConfig) -> SamplerState:
    rng = np.random.default_rng(cfg.seed)
    n = len(x)
    lo, hi = _base_bounds(prior, n)
    a0, b0 = prior.beta0_prior
    beta0 = float(rng.beta(a0, b0))
    # adaptive chains start at the largest order: its sharply decreasing
    # kernels cannot mimic a uniform stretch, so the first allocation pass
    # sends flat regions of the data to the uniform component instead of
    # letting theta ~ 1 atoms absorb them, a state k moves escape slowly
    k = prior.fixed_k if prior.fixed_k is not None else int(max(prior.k_values))
    sticks = rng.beta(1.0, prior.precision_a, size=1)
    # single covering cluster: the first k update then compares kernel shapes
    # over the whole support, whereas scattered random atoms bias the early
    # sweeps toward k=1, whose flat kernels tolerate poor coverage, and the
    # chain can lock there for good
    span = hi - lo
    theta1 = min(max(0.5 * (float(x.max()) + hi), lo + 1e-6 * span), hi - 1e-6 * span)
    atoms = np.full(1, theta1)
    z = np.ones(n, dtype=np.int64)
    u = rng.random(n) * XI_RATIO
    return SamplerState(
        data=x, z=z, u_slice=u, sticks=sticks, atoms=atoms, beta0=beta0, k=k, rng=rng
    )


def _update_slices(state: SamplerState, prior: PriorConfig, max_sticks: int) -> None:
    """Redraw u_i ~ U(0, xi_{z_i}) and (de)instantiate sticks to cover them."""
    rng = state.rng
    z = state.z
    u = rng.random(len(z)) * _xi_table(len(state.atoms))[z]
    state.u_slice = u
    u_min = max(float(u.min()), 5e-324)
    # largest l with xi_l > u_min
    L_req = max(1, math.ceil(math.log(u_min) / LOG_XI) - 1, int(z.max()))
    if L_req > max_sticks:
        raise StickLimitError(f"slice scheme requires {L_req} sticks > cap {max_sticks}")
    L = len(state.atoms)
    if L_req > L:
        lo, hi = _base_bounds(prior, len(state.data))
        state.sticks = np.concatenate(
            [state.sticks, rng.beta(1.0, prior.precision_a, size=L_req - L)]
        )
        state.atoms = np.concatenate([state.atoms, rng.uniform(lo, hi, size=L_req - L)])
    elif L_req < L:
        # dropped sticks are unoccupied and prior-distributed; safe to forget
        state.sticks = state.sticks[:L_req].copy()
        state.atoms = state.atoms[:L_req].copy()


def _update_allocations(state: SamplerState, prior: PriorConfig) -> None:
    n, L = len(state.data), len(state.atoms)
    psi = _psi_matrix(state.data, state.atoms, state.k)
    w = _stick_weights(state.sticks)
    xi = _xi_table(L)[1:]
    scores = np.empty((n, L + 1))
    scores[:, 0] = state.beta0
    np.multiply(psi, (1.0 - state.beta0) * (w / xi), out=scores[:, 1:])
    scores[:, 1:] *= state.u_slice[:, None] < xi
    state.z = _categorical_rows(scores, state.rng)


def _update_sticks(state: SamplerState, prior: PriorConfig) -> None:
    L = len(state.atoms)
    counts = np.bincount(state.z, minlength=L + 1)[1:]
    tail = counts[::-1].cumsum()[::-1] - counts  # allocations to later sticks
    state.sticks = state.rng.beta(1.0 + counts, prior.precision_a + tail)


def _atom_log_ratio(
    k: int,
    points: np.ndarray,
    th_from: float,
    th_to: float,
    lo: float,
    hi: float,
) -> float:
    """Log MH acceptance ratio for moving one atom th_from -> th_to.

    Includes the logit-scale Jacobian; -inf when the proposal leaves the
    base support or drops an allocated point outside the kernel support.
    """
    if not lo < th_to < hi:
        return -math.inf
    t_to = 1.0 - points / th_to
    if np.any(t_to <= 0.0):
        return -math.inf
    t_from = 1.0 - points / th_from
    ll_to = len(points) * math.log(k / th_to) + (k - 1) * float(np.log(t_to).sum())
    ll_from = len(points) * math.log(k / th_from) + (k - 1) * float(np.log(t_from).sum())
    jac = math.log((th_to - lo) * (hi - th_to)) - math.log((th_from - lo) * (hi - th_from))
    return ll_to - ll_from + jac


def update_atoms(state: SamplerState, prior: PriorConfig) -> SamplerState:
    """One vectorized MH pass over all atoms; unoccupied atoms redrawn fresh.

    Occupied atoms move by a random walk of scale 0.5 on
    logit((theta - lo)/(hi - lo)); a proposal at or below the largest
    allocated data point has zero likelihood and is auto-rejected.
    """
    rng = state.rng
    th = state.atoms
    L = len(th)
    lo, hi = _base_bounds(prior, len(state.data))
    counts = np.bincount(state.z, minlength=L + 1)[1:]
    occupied = counts > 0

    zpos = state.z > 0
    owner = state.z[zpos] - 1  # atom index per allocated point
    xs = state.data[zpos]

    eta = np.log(th - lo) - np.log(hi - th)
    th_prop = lo + (hi - lo) * expit(eta + MH_STEP * rng.standard_normal(L))

    t_cur = 1.0 - xs / th[owner]
    t_prop = 1.0 - xs / th_prop[owner]
    s_cur = np.bincount(owner, weights=np.log(t_cur), minlength=L)
    s_prop = np.bincount(owner, weights=np.log(np.maximum(t_prop, 5e-324)), minlength=L)
    infeasible = np.bincount(owner, weights=t_prop <= 0.0, minlength=L) > 0.0

    with np.errstate(divide="ignore", invalid="ignore"):
        log_ratio = (
            counts * (np.log(th) - np.log(th_prop))
            + (state.k - 1) * (s_prop - s_cur)
            + np.log((th_prop - lo) * (hi - th_prop))
            - np.log((th - lo) * (hi - th))
        )
    accept = occupied & ~infeasible & (np.log(rng.random(L)) < log_ratio)
    th = th.copy()
    th[accept] = th_prop[accept]
    fresh = rng.uniform(lo, hi, size=L)
    th[~occupied] = fresh[~occupied]
    state.atoms = th
    return state


def _update_beta0(state: SamplerState, prior: PriorConfig) -> None:
    a0, b0 = prior.beta0_prior
    n0 = int(np.count_nonzero(state.z == 0))
    state.beta0 = float(state.rng.beta(a0 + n0, b0 + (len(state.z) - n0)))


def _refresh_labels(state: SamplerState, prior: PriorConfig, tp: np.ndarray | None = None) -> None:
    """Joint refresh of (z, u) given everything else, without slice bounds.

    ``tp`` optionally carries (1 - x/theta)_+ for the current atoms so a
    caller that just built it (update_k) avoids recomputing the matrix.
    """
    if tp is None:
        psi = _psi_matrix(state.data, state.atoms, state.k)
    elif state.k == 1:
        psi = (tp > 0.0) * (1.0 / state.atoms)
    else:
        psi = _int_power(tp, state.k - 1) * (state.k / state.atoms)
    w = _stick_weights(state.sticks)
    n, L = psi.shape
    scores = np.empty((n, L + 1))
    scores[:, 0] = state.beta0
    np.multiply(psi, (1.0 - state.beta0) * w, out=scores[:, 1:])
    z = _categorical_rows(scores, state.rng)
    state.z = z
    state.u_slice = state.rng.random(n) * _xi_table(L)[z]


def update_k(state: SamplerState, prior: PriorConfig) -> SamplerState:
    """Resample k from its discrete conditional at the current truncation.

    The conditional marginalizes the labels: mass(k) ∝ prior(k) *
    prod_i [beta0 + (1-beta0) sum_{l<=L} w_l psi_k(x_i; theta_l)], computed
    in log space.  Labels and slice variables are refreshed afterwards so
    the augmented state stays coherent under the new k.
    """
    if not prior.adaptive:
        raise ValueError("update_k requires an adaptive prior (fixed_k is set)")
    x = state.data
    th = state.atoms
    w = _stick_weights(state.sticks)
    beta0 = state.beta0
    tp = 1.0 - x[:, None] / th[None, :]
    powers = (tp > 0.0).astype(float)  # tp**0 restricted to the support
    np.maximum(tp, 0.0, out=tp)
    wt = w / th
    ks = prior.k_values
    log_liks = np.full(len(ks), -np.inf)
    pos = {k: i for i, k in enumerate(ks)}
    for kk in range(1, ks[-1] + 1):
        if kk in pos:
            dens = beta0 + ((1.0 - beta0) * kk) * (powers @ wt)
            if np.all(dens > 0.0):
                log_liks[pos[kk]] = float(np.log(dens).sum())
        if kk < ks[-1]:
            powers *= tp
    top = log_liks.max()
    if not np.isfinite(top):
        raise ChainNumericError(
            f"k update: all candidate likelihoods vanished "
            f"(beta0={beta0!r}, L={len(th)}, n={len(x)})"
        )
    probs = np.exp(log_liks - top)  # uniform prior over k_values cancels
    probs /= probs.sum()
    r = float(state.rng.random())
    state.k = int(ks[min(np.searchsorted(np.cumsum(probs), r, side="right"), len(ks) - 1)])
    _refresh_labels(state, prior, tp=tp)
    return state


def _sweep(state: SamplerState, prior: PriorConfig, max_sticks: int) -> None:
    _update_slices(state, prior, max_sticks)
    _update_allocations(state, prior)
    _update_sticks(state, prior)
    update_atoms(state, prior)
    _update_beta0(state, prior)
    if prior.adaptive:
        update_k(state, prior)


def _record(state: SamplerState) -> PosteriorDraw:
    L = len(state.atoms)
    counts = np.bincount(state.z, minlength=L + 1)[1:]
    occ = np.flatnonzero(counts > 0)
    if len(occ) == 0:
        # nothing allocated to the psi part; emit a unit atom so the draw
        # still converts to a valid mixture (its weight is inert at beta0=1
        # and merely tiny otherwise)
        atoms = ((float(state.atoms[0]), 1.0),)
    else:
        w = _stick_weights(state.sticks)[occ]
        w = w / w.sum()
        order = np.argsort(state.atoms[occ])
        atoms = tuple(
            (float(state.atoms[occ][i]), float(w[i])) for i in order
        )
    return PosteriorDraw(k=int(state.k), beta0=float(state.beta0), atoms=atoms)


def run_chain(
    data, prior: PriorConfig | None = None, cfg: SamplerConfig | None = None
) -> list[PosteriorDraw]:
    """Run one chain and return exactly cfg.draws posterior draws.

    Deterministic: identical (data, prior, cfg) give bit-identical draws.
    Data must lie strictly inside (0, 1); values exactly 0 or 1 are nudged
    inward by 1e-12 with a warning, anything outside [0, 1] is rejected.
    """
    prior = prior if prior is not None else PriorConfig()
    cfg = cfg if cfg is not None else SamplerConfig()
    x = np.asarray(data, dtype=float).copy()
    if x.ndim != 1 or len(x) < 2:
        raise ValueError("data must be a 1-d array with n >= 2")
    if not np.all(np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("data must lie inside [0, 1]")
    boundary = (x == 0.0) | (x == 1.0)
    if np.any(boundary):
        warnings.warn(
            f"{int(boundary.sum())} boundary value(s) nudged inside (0, 1) by 1e-12",
            stacklevel=2,
        )
        x[x == 0.0] = 1e-12
        x[x == 1.0] = 1.0 - 1e-12
    x.sort()
    # floor: the slice depth is set by the smallest u_i seen over the whole
    # chain, which does not shrink with n, so tiny samples still need room
    max_sticks = cfg.max_sticks if cfg.max_sticks is not None else max(10 * len(x), 400)
    state = _init_state(x, prior, cfg)
    draws: list[PosteriorDraw] = []
    total = cfg.burn_in + cfg.draws * cfg.thin
    for i in range(total):
        try:
            _sweep(state, prior, max_sticks)
        except ChainNumericError as exc:
            raise ChainNumericError(f"sweep {i}: {exc}") from None
        j = i + 1 - cfg.burn_in
        if j > 0 and j % cfg.thin == 0:
            draws.append(_record(state))
    return draws


def posterior_mean_density(draws: Sequence[PosteriorDraw], grid) -> GridDensity:
    """Pointwise average of the draws' mixture densities on the given grid."""
    if len(draws) == 0:
        raise ValueError("draws must be nonempty")
    grid = np.asarray(grid, dtype=float)
    acc = np.zeros_like(grid)
    for d in draws:
        acc += mixture_pdf(d.to_kmixture(), grid)
    return GridDensity(grid, acc / len(draws))


def posterior_mean_beta0(draws: Sequence[PosteriorDraw]) -> float:
    if len(draws) == 0:
        raise ValueError("draws must be nonempty")
    return float(np.mean([d.beta0 for d in draws]))


def draws_to_jsonl(draws: Sequence[PosteriorDraw]) -> str:
    lines = [
        json.dumps(
            {"k": d.k, "beta0": d.beta0, "atoms": [[th, w] for th, w in d.atoms]}
        )
        for d in draws
    ]
    return "\n".join(lines) + "\n"


def draws_from_jsonl(text: str) -> list[PosteriorDraw]:
    out = []
    for line in text.strip().splitlines():
        obj = json.loads(line)
        out.append(
            PosteriorDraw(
                k=int(obj["k"]),
                beta0=float(obj["beta0"]),
                atoms=tuple((float(t), float(w)) for t, w in obj["atoms"]),
            )
        )
    return out

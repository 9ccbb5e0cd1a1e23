"""Shape-constrained maximum-likelihood density estimators on (0, 1).

Two frequentist estimators of a nonincreasing density from an i.i.d.
sample: the Grenander estimator (the left slope of the least concave
majorant of the empirical CDF, taken here on the known support [0, 1]) and
the maximum-likelihood estimator over the convex-nonincreasing class.  The
convex class is parameterized as mixtures

    g(x) = w_unif + sum_l w_l psi_2(x; theta_l),

which makes convexity and monotonicity automatic and exposes the fitted
density's value at 1 -- the null-proportion estimate -- as the constant
weight w_unif.

The Grenander hull pass compares chord slopes in exact rational arithmetic
(data values are binary rationals, ECDF heights are integer counts), so the
selected knots are exactly those of any correct least-concave-majorant
construction; only the final slope values are floating point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "StepDensity",
    "ConvexFit",
    "grenander",
    "convex_npmle",
    "pi0_from_convex",
    "candidate_thetas",
    "npmle_gradient",
]


def _as_sample(data, n_min: int) -> np.ndarray:
    x = np.asarray(data, dtype=float)
    if x.ndim != 1 or len(x) < n_min:
        raise ValueError(f"data must be a 1-d array with n >= {n_min}")
    if not np.all(np.isfinite(x)) or np.any(x <= 0.0) or np.any(x >= 1.0):
        raise ValueError("data must lie strictly inside (0, 1)")
    return x


@dataclass(frozen=True, eq=False)
class StepDensity:
    """Piecewise-constant density: height h_j on (b_{j-1}, b_j].

    breakpoints : increasing array starting at 0 and ending at 1.
    heights : nonincreasing nonnegative array, one per segment; the total
        integral sum h_j (b_j - b_{j-1}) must be 1 within 1e-12.
    """

    breakpoints: np.ndarray
    heights: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        h = np.asarray(self.heights, dtype=float)
        if b.ndim != 1 or h.ndim != 1 or len(b) != len(h) + 1 or len(h) < 1:
            raise ValueError("need len(breakpoints) == len(heights) + 1 >= 2")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(h))):
            raise ValueError("breakpoints and heights must be finite")
        if b[0] != 0.0 or b[-1] != 1.0 or np.any(np.diff(b) <= 0.0):
            raise ValueError("breakpoints must increase strictly from 0 to 1")
        if np.any(h < 0.0) or np.any(np.diff(h) > 0.0):
            raise ValueError("heights must be nonnegative and nonincreasing")
        total = float(np.sum(h * np.diff(b)))
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"step density integrates to {total!r}, not 1")
        b = b.copy()
        h = h.copy()
        b.flags.writeable = False
        h.flags.writeable = False
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "heights", h)

    def evaluate(self, x):
        """Density value; at 0 the right limit, elsewhere the (lo, hi] segment."""
        xv = np.asarray(x, dtype=float)
        if np.any(xv < 0.0) or np.any(xv > 1.0):
            raise ValueError("evaluation points must lie in [0, 1]")
        idx = np.searchsorted(self.breakpoints, xv, side="left")
        out = self.heights[np.clip(idx - 1, 0, len(self.heights) - 1)]
        return out if out.ndim else float(out)

    def log_likelihood(self, data) -> float:
        vals = self.evaluate(np.asarray(data, dtype=float))
        if np.any(vals <= 0.0):
            return -np.inf
        return float(np.log(vals).sum())

    def to_json(self) -> str:
        return json.dumps(
            {
                "breakpoints": [float(v) for v in self.breakpoints],
                "heights": [float(v) for v in self.heights],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "StepDensity":
        obj = json.loads(text)
        return cls(np.array(obj["breakpoints"]), np.array(obj["heights"]))


def grenander(data) -> StepDensity:
    """Grenander estimator: left slope of the ECDF's least concave majorant.

    The majorant is taken over [0, 1] (the support is known), so the fit
    always ends with a flat, possibly zero, segment after the largest
    observation.  Knots are found by a monotone-chain hull pass with exact
    rational slope comparisons; heights are ratios of ECDF increments over
    breakpoint gaps.
    """
    x = _as_sample(data, n_min=1)
    n = len(x)
    xs, counts = np.unique(x, return_counts=True)
    # ECDF vertices (0, 0), (x_(j), cum_j / n), (1, 1), scaled to integer heights
    px = [Fraction(0)] + [Fraction(v) for v in xs.tolist()] + [Fraction(1)]
    pc = [0] + np.cumsum(counts).tolist() + [n]

    hull = [0]
    for j in range(1, len(px)):
        while len(hull) >= 2:
            i0, i1 = hull[-2], hull[-1]
            # keep i1 only where the chain's slope strictly decreases across it
            keep = (pc[i1] - pc[i0]) * (px[j] - px[i1]) > (pc[j] - pc[i1]) * (
                px[i1] - px[i0]
            )
            if keep:
                break
            hull.pop()
        hull.append(j)

    bx = np.array([float(px[i]) for i in hull])
    bc = np.array([float(pc[i]) for i in hull])
    heights = np.diff(bc) / n / np.diff(bx)
    return StepDensity(bx, heights)


@dataclass(frozen=True)
class ConvexFit:
    """Convex-decreasing NPMLE: constant weight plus psi_2 atoms.

    atoms : (theta, weight) pairs with theta in (0, 1], weights >= 0.
    w_unif : weight of the constant component; equals the fitted density at
        1 and hence the null-proportion read-out.
    converged : whether the gradient criterion was met within max_iter.
    iterations : outer (vertex-direction) iterations used.
    """

    atoms: tuple[tuple[float, float], ...]
    w_unif: float
    converged: bool
    iterations: int

    def __post_init__(self):
        if not 0.0 <= self.w_unif <= 1.0 + 1e-9:
            raise ValueError("w_unif must lie in [0, 1]")
        total = self.w_unif
        for th, w in self.atoms:
            if not 0.0 < th <= 1.0:
                raise ValueError("atom locations must lie in (0, 1]")
            if not w >= 0.0:
                raise ValueError("atom weights must be nonnegative")
            total += w
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {total!r}, not 1")

    def pdf(self, x):
        xv = np.asarray(x, dtype=float)
        out = np.full(xv.shape, self.w_unif)
        for th, w in self.atoms:
            t = 1.0 - xv / th
            out += (2.0 * w / th) * np.where(t > 0.0, t, 0.0)
        return out if out.ndim else float(out)

    def log_likelihood(self, data) -> float:
        vals = self.pdf(np.asarray(data, dtype=float))
        if np.any(vals <= 0.0):
            return -np.inf
        return float(np.log(vals).sum())

    def to_json(self) -> str:
        return json.dumps(
            {
                "atoms": [[float(t), float(w)] for t, w in self.atoms],
                "w_unif": float(self.w_unif),
                "converged": bool(self.converged),
                "iterations": int(self.iterations),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ConvexFit":
        obj = json.loads(text)
        return cls(
            atoms=tuple((float(t), float(w)) for t, w in obj["atoms"]),
            w_unif=float(obj["w_unif"]),
            converged=bool(obj["converged"]),
            iterations=int(obj["iterations"]),
        )


def pi0_from_convex(fit: ConvexFit) -> float:
    """Fitted density at 1; every psi_2(1, theta) vanishes, leaving w_unif."""
    return float(fit.w_unif)


def candidate_thetas(data, grid_size: int = 512) -> np.ndarray:
    """grid_size equispaced candidates in (min(data), 1] merged with the data.

    Scales theta <= min(data) put every observation outside the kernel
    support and can never enter the NPMLE, so they are excluded.
    """
    x = np.asarray(data, dtype=float)
    lo = float(x.min())
    grid = lo + (1.0 - lo) * np.arange(1, grid_size + 1) / grid_size
    return np.unique(np.concatenate([grid, x[x > lo]]))


def _psi2_columns(x: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    t = 1.0 - x[:, None] / thetas[None, :]
    np.maximum(t, 0.0, out=t)
    return t * (2.0 / thetas)


def npmle_gradient(fit: ConvexFit, data, thetas) -> np.ndarray:
    """Directional derivatives D(theta) = mean_i psi_2(x_i, theta) / g(x_i).

    At the NPMLE, D <= 1 for every candidate and D = 1 on the support; the
    constant direction's analogue is mean_i 1 / g(x_i).
    """
    x = np.asarray(data, dtype=float)
    g = fit.pdf(x)
    return _psi2_columns(x, np.asarray(thetas, dtype=float)).T @ (1.0 / g) / len(x)


def _line_search(g: np.ndarray, col: np.ndarray) -> float:
    """argmax over a in [0, 1) of sum log((1-a) g + a col), safeguarded Newton.

    Used for the vertex-direction step; the derivative at 0 is n (D - 1) > 0
    whenever the vertex is an ascent direction, so the optimum is interior.
    """
    lo, hi = 0.0, 1.0
    a = 0.0
    diff = col - g
    for _ in range(40):
        r = diff / (g + a * diff)
        f1 = float(r.sum())
        if f1 > 0.0:
            lo = a
        else:
            hi = a
        f2 = -float(r @ r)
        a_new = a - f1 / f2 if f2 < 0.0 else hi
        if not lo < a_new < hi:
            a_new = 0.5 * (lo + hi)
        if abs(a_new - a) < 1e-14:
            a = a_new
            break
        a = a_new
    return min(max(a, 0.0), 1.0 - 1e-12)


def _em_weights(
    cols: np.ndarray, w_unif: float, w: np.ndarray, inner_iters: int, rel_tol: float
) -> tuple[float, np.ndarray, float]:
    """Multiplicative EM over the active columns; returns new weights + loglik."""
    n = len(cols)
    ll = -np.inf
    for _ in range(inner_iters):
        g = cols @ w + w_unif
        r = 1.0 / g
        ll_new = float(np.log(g).sum())
        w_unif *= r.mean()
        w = w * (cols.T @ r) / n
        total = w_unif + w.sum()  # exact EM preserves this; guard float drift
        w_unif /= total
        w /= total
        if ll_new - ll <= rel_tol * (1.0 + abs(ll_new)):
            ll = ll_new
            break
        ll = ll_new
    g = cols @ w + w_unif
    return w_unif, w, float(np.log(g).sum())


def _newton_polish(
    cols: np.ndarray, w_unif: float, w: np.ndarray, max_steps: int = 40
) -> tuple[float, np.ndarray, float]:
    """Support-reduction Newton refinement of the active-set weights.

    EM leaves the weights near a log-likelihood plateau where the gradients
    D_l can still be 1e-4 from 1; Newton on the stationarity system drives
    them to ~1e-13.  Weights hitting zero are clipped out (the support
    reduction), and every step is backtracked so the objective never drops.
    """
    n = len(cols)
    A = np.column_stack([np.ones(n), cols])
    wf = np.concatenate([[w_unif], w])
    g = A @ wf
    ll = float(np.log(g).sum())
    for _ in range(max_steps):
        M = A / g[:, None]
        live = np.flatnonzero(wf > 0.0)
        resid = M[:, live].mean(axis=0) - 1.0
        if float(np.abs(resid).max()) < 1e-13:
            break
        H = (M[:, live].T @ M[:, live]) / n
        H[np.diag_indices_from(H)] += 1e-14
        try:
            step = np.linalg.solve(H, resid)
        except np.linalg.LinAlgError:
            break
        delta = np.zeros_like(wf)
        delta[live] = step
        neg = delta < 0.0
        s = min(1.0, float(np.min(-wf[neg] / delta[neg]))) if np.any(neg) else 1.0
        accepted = False
        for _ in range(30):
            w_try = np.maximum(wf + s * delta, 0.0)
            w_try /= w_try.sum()
            g_try = A @ w_try
            if np.all(g_try > 0.0):
                ll_try = float(np.log(g_try).sum())
                if ll_try >= ll:
                    accepted = ll_try > ll or not np.array_equal(w_try, wf)
                    wf, g, ll = w_try, g_try, ll_try
                    break
            s *= 0.5
        if not accepted:
            break
    return float(wf[0]), wf[1:], ll


def convex_npmle(
    data, grid_size: int = 512, max_iter: int = 1000, tol: float = 1e-6
) -> ConvexFit:
    """Convex-decreasing NPMLE by vertex direction plus EM reweighting.

    Starting from the pure uniform fit, each outer iteration moves toward
    the candidate scale with the largest gradient D(theta) by an optimal
    line search (adding it to the active set if new), re-optimizes the
    active weights by multiplicative EM, and prunes zero weights.  The line
    search strictly increases the objective whenever max D > 1, so the
    iteration cannot stall on an already-active vertex.  After the gradient
    criterion max D <= 1 + tol first holds, the candidate set is refined
    once around the active atoms and the loop continues.
    """
    x = np.sort(_as_sample(data, n_min=2))  # canonical order: exact permutation invariance
    n = len(x)
    if grid_size < 1 or max_iter < 1 or not tol > 0.0:
        raise ValueError("need grid_size >= 1, max_iter >= 1, tol > 0")
    cand = candidate_thetas(x, grid_size)
    cols = _psi2_columns(x, cand)

    active: list[int] = []
    w = np.zeros(0)
    w_unif = 1.0
    ll = 0.0  # log-likelihood of the pure uniform start
    converged = False
    refined = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        g = cols[:, active] @ w + w_unif
        r = 1.0 / g
        grad = cols.T @ r / n
        best = int(np.argmax(grad))
        d_unif = float(r.mean())  # gradient of the constant direction
        if max(grad[best], d_unif) <= 1.0 + tol:
            if refined:
                converged = True
                break
            refined = True
            extra = _refined_candidates(cand, active, x)
            if len(extra) == 0:
                converged = True
                break
            cand = np.concatenate([cand, extra])
            cols = np.hstack([cols, _psi2_columns(x, extra)])
            continue

        if d_unif > grad[best]:
            alpha = _line_search(g, np.ones(n))
            w = w * (1.0 - alpha)
            w_unif = w_unif * (1.0 - alpha) + alpha
        else:
            alpha = _line_search(g, cols[:, best])
            if best in active:
                w = w * (1.0 - alpha)
                w[active.index(best)] += alpha
            else:
                active.append(best)
                w = np.append(w * (1.0 - alpha), alpha)
            w_unif *= 1.0 - alpha

        w_unif, w, ll_new = _em_weights(
            cols[:, active], w_unif, w, inner_iters=200, rel_tol=1e-10
        )
        w_unif, w, ll_new = _newton_polish(cols[:, active], w_unif, w)
        if ll_new < ll - 1e-9 * (1.0 + abs(ll)):
            raise RuntimeError(
                f"convex NPMLE objective decreased: {ll!r} -> {ll_new!r}"
            )
        ll = ll_new
        keep = w > 1e-12
        if not np.all(keep):
            active = [a for a, k in zip(active, keep) if k]
            w = w[keep]

    order = np.argsort(cand[active])
    atoms = tuple(
        (float(cand[active[i]]), float(w[i])) for i in order
    )
    return ConvexFit(
        atoms=atoms, w_unif=float(w_unif), converged=converged, iterations=iterations
    )


def _refined_candidates(
    cand: np.ndarray, active: list[int], x: np.ndarray
) -> np.ndarray:
    """One local refinement: 20 extra scales within one grid step of each atom."""
    if not active:
        return np.zeros(0)
    spacing = float(np.median(np.diff(np.unique(cand))))
    lo = float(x.min())
    pieces = [
        np.linspace(cand[a] - spacing, cand[a] + spacing, 21) for a in active
    ]
    extra = np.unique(np.concatenate(pieces))
    extra = extra[(extra > lo) & (extra <= 1.0)]
    return np.setdiff1d(extra, cand)

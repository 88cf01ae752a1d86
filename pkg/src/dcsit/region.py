"""Common/private rate region and CSIT baselines for the fading channel.

A precoding choice (g1, g2, gamma1, gamma2) supports every rate triple
(R0, R1, R2) obeying four ergodic bounds:

    R1        <= b1   = E log(1 + gamma1(S1) ||S e1||^2)
    R2        <= b2   = E log(1 + gamma2(S2) ||S e2||^2)
    R1 + R2   <= b12  = E logdet(I + S diag(gamma) S^H)
    R0+R1+R2  <= b012 = E logdet(I + S Sigma(S1,S2) S^H)

Each bound is concave in (Q, gamma), so a weighted sum rate is maximized
by projected supergradient ascent: the supergradient at a point combines
the bound gradients through the optimal dual weights of the small LP
that maximizes alpha . R inside the four bounds.

Internally everything is in nats; RegionSolution and all file outputs
convert to bits.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import psdopt
from .channel import FadingEnsemble
from .errors import DomainError
from .precoding import (
    PrecoderSet,
    _sample_channels,
    extract_precoders,
    reconstruct_covariance,
)

LN2 = float(np.log(2.0))

# rows of the bound system A R <= b over R = (R0, R1, R2)
_BOUND_ROWS = np.array(
    [
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 1.0],
        [1.0, 1.0, 1.0],
    ]
)


@dataclass(frozen=True)
class RatePoint:
    """A rate triple and the weight vector that produced it."""

    r0: float
    r1: float
    r2: float
    alpha: tuple[float, float, float]

    def as_array(self) -> np.ndarray:
        return np.array([self.r0, self.r1, self.r2])


@dataclass(frozen=True)
class RegionSolution:
    """One boundary point: rates and bounds in bits, plus the precoders."""

    rates: RatePoint
    bounds_bits: tuple[float, float, float, float]
    precoders: PrecoderSet
    converged: bool
    iterations: int

    def __post_init__(self):
        r = self.rates.as_array()
        b = self.bounds_bits
        checks = [r[1] <= b[0] + 1e-6, r[2] <= b[1] + 1e-6,
                  r[1] + r[2] <= b[2] + 1e-6, r.sum() <= b[3] + 1e-6]
        if not all(checks):
            raise DomainError("rate point escapes its own bounds")


def bounds(pre: PrecoderSet, ens: FadingEnsemble) -> tuple[float, float, float, float]:
    """The four ergodic bound values (nats) for a fixed precoding choice."""
    if pre.ns1 != ens.ns1 or pre.ns2 != ens.ns2:
        raise DomainError("precoder alphabets do not match the ensemble")
    s = ens.states
    col1 = s[:, :, 0]
    col2 = s[:, :, 1]
    n1 = np.sum(np.abs(col1) ** 2, axis=1)
    n2 = np.sum(np.abs(col2) ** 2, axis=1)
    gam1 = pre.gamma1[ens.s1]
    gam2 = pre.gamma2[ens.s2]
    w = ens.weights
    b1 = float(w @ np.log1p(gam1 * n1))
    b2 = float(w @ np.log1p(gam2 * n2))

    eye = np.eye(ens.m, dtype=np.complex128)
    priv = (col1[:, :, None] * col1.conj()[:, None, :]) * gam1[:, None, None]
    priv += (col2[:, :, None] * col2.conj()[:, None, :]) * gam2[:, None, None]
    sign, ld = np.linalg.slogdet(eye + priv)
    b12 = float(w @ ld)

    cov = reconstruct_covariance(pre)[ens.s1, ens.s2]
    sign, ld = np.linalg.slogdet(eye + s @ cov @ s.conj().transpose(0, 2, 1))
    b012 = float(w @ ld)
    return b1, b2, b12, b012


# ---------------------------------------------------------------------------
# the 3-variable LP inside four bounds


def inner_lp(
    bound_vals: tuple[float, float, float, float],
    alpha: tuple[float, float, float],
) -> tuple[RatePoint, np.ndarray]:
    """Maximize alpha . R over the bound polytope; exact vertex enumeration.

    Unit-agnostic: rates come back in the units of `bound_vals`. Also
    returns optimal dual weights (lambda per bound) from the dual LP,
    solved by the same enumeration. Ties in the primal go to the
    lexicographically largest (R0, R1, R2).
    """
    b = np.asarray(bound_vals, dtype=np.float64)
    a = np.asarray(alpha, dtype=np.float64)
    if b.shape != (4,) or np.any(b < -1e-12):
        raise DomainError("need four nonnegative bound values")
    if a.shape != (3,) or np.any(a < 0) or a.sum() <= 0:
        raise DomainError("alpha must be nonnegative and not all zero")
    rows = np.vstack([_BOUND_ROWS, -np.eye(3)])
    rhs = np.concatenate([b, np.zeros(3)])
    scale = 1.0 + float(np.abs(b).max())
    best_val = -np.inf
    best_r: np.ndarray | None = None
    for trio in combinations(range(7), 3):
        sub = rows[list(trio)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        r = np.linalg.solve(sub, rhs[list(trio)])
        if np.any(rows @ r > rhs + 1e-9 * scale):
            continue
        val = float(a @ r)
        if val > best_val + 1e-12 * scale:
            best_val, best_r = val, r
        elif best_r is not None and abs(val - best_val) <= 1e-12 * scale:
            if tuple(r) > tuple(best_r):
                best_r = r
    assert best_r is not None  # the origin is always feasible
    rate = RatePoint(
        r0=max(best_r[0], 0.0),
        r1=max(best_r[1], 0.0),
        r2=max(best_r[2], 0.0),
        alpha=(float(a[0]), float(a[1]), float(a[2])),
    )

    # dual: min b . lam  s.t.  A^T lam >= alpha, lam >= 0
    drows = np.vstack([_BOUND_ROWS.T, np.eye(4)])  # 7 x 4, constraints drows @ lam >= drhs
    drhs = np.concatenate([a, np.zeros(4)])
    dual_best = np.inf
    dual_lam = None
    for quad in combinations(range(7), 4):
        sub = drows[list(quad)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        lam = np.linalg.solve(sub, drhs[list(quad)])
        if np.any(drows @ lam < drhs - 1e-9 * (1.0 + np.abs(a).max())):
            continue
        val = float(b @ lam)
        if val < dual_best - 1e-15 * scale:
            dual_best, dual_lam = val, lam
    assert dual_lam is not None
    return rate, np.maximum(dual_lam, 0.0)


# ---------------------------------------------------------------------------
# weighted sum rate by projected supergradient ascent


@dataclass
class RegionOptions:
    max_iter: int = 300
    step_scale: float | None = None  # a in steps a/(k + offset); default from powers
    step_offset: float = 20.0
    window: int = 50
    rel_tol: float = 1e-4
    average_every: int = 10
    polish_rounds: int = 6
    polish_tol: float = 1e-8
    polish_iters: int = 3000


def _region_problems(ens: FadingEnsemble, p1: float, p2: float):
    """Variable layout [Q, gamma1..., gamma2...] and the four bound programs."""
    d = ens.dim
    dims = [d] + [1] * (ens.ns1 + ens.ns2)
    p1m = ens.csit_marginal(1)
    p2m = ens.csit_marginal(2)
    h = _sample_channels(ens)
    s = ens.states
    v1 = {0: np.concatenate([p1m, np.zeros(ens.ns2)])}
    v1.update({1 + i: np.array([p1m[i]]) for i in range(ens.ns1)})
    v2 = {0: np.concatenate([np.zeros(ens.ns1), p2m])}
    v2.update({1 + ens.ns1 + j: np.array([p2m[j]]) for j in range(ens.ns2)})
    constraints = [
        psdopt.Halfspace(diag_weights=v1, limit=float(p1)),
        psdopt.Halfspace(diag_weights=v2, limit=float(p2)),
    ]

    t1, t2, t12, t012 = [], [], [], []
    for idx in range(ens.size):
        w = float(ens.weights[idx])
        v_g1 = 1 + int(ens.s1[idx])
        v_g2 = 1 + ens.ns1 + int(ens.s2[idx])
        c1 = s[idx, :, 0:1]
        c2 = s[idx, :, 1:2]
        t1.append(psdopt.Term(w, ((v_g1, np.array([[np.linalg.norm(c1)]])),)))
        t2.append(psdopt.Term(w, ((v_g2, np.array([[np.linalg.norm(c2)]])),)))
        t12.append(psdopt.Term(w, ((v_g1, c1), (v_g2, c2))))
        t012.append(psdopt.Term(w, ((0, h[idx]), (v_g1, c1), (v_g2, c2))))
    probs = [
        psdopt.LogDetProblem(dims, terms, constraints)
        for terms in (t1, t2, t12, t012)
    ]
    return dims, constraints, probs


def _zero_solution(ens: FadingEnsemble, alpha) -> RegionSolution:
    pre = PrecoderSet(
        g1=np.zeros((ens.ns1, ens.dim), dtype=np.complex128),
        g2=np.zeros((ens.ns2, ens.dim), dtype=np.complex128),
        gamma1=np.zeros(ens.ns1),
        gamma2=np.zeros(ens.ns2),
        power=(0.0, 0.0),
    )
    rates = RatePoint(0.0, 0.0, 0.0, tuple(float(x) for x in alpha))
    return RegionSolution(rates, (0.0, 0.0, 0.0, 0.0), pre, True, 0)


def weighted_sum_rate(
    ens: FadingEnsemble,
    p1: float,
    p2: float,
    alpha: tuple[float, float, float],
    opts: RegionOptions | None = None,
) -> RegionSolution:
    """Best-found boundary point for weights alpha (reported in bits).

    Supergradient steps a/(k+offset) on (Q, gamma) with iterate
    averaging; keeps the best feasible point seen. Stops early once the
    running best improves by less than rel_tol (relative) over `window`
    iterations.
    """
    a = np.asarray(alpha, dtype=np.float64)
    if a.shape != (3,) or np.any(a < 0) or a.sum() <= 0:
        raise DomainError("alpha must be nonnegative and not all zero")
    if p1 == 0 and p2 == 0:
        return _zero_solution(ens, alpha)
    if min(p1, p2) < 0 or (p1 == 0) != (p2 == 0):
        raise DomainError("powers must be both positive or both zero")
    opts = opts or RegionOptions()

    dims, constraints, probs = _region_problems(ens, p1, p2)
    t0 = 0.45 * min(p1, p2)
    x = [np.eye(d, dtype=np.complex128) * t0 for d in dims]
    x = psdopt.project_feasible(x, constraints)

    def value_and_duals(pt):
        bvals = tuple(max(psdopt.objective(pr, pt), 0.0) for pr in probs)
        rate, lam = inner_lp(bvals, tuple(a))
        return float(a @ rate.as_array()), bvals, lam

    step_scale = opts.step_scale if opts.step_scale is not None else max(p1, p2)
    best_val, _, _ = value_and_duals(x)
    best_x = [m.copy() for m in x]
    history = [best_val]
    xbar = [m.copy() for m in x]
    it = 0
    converged = False
    for it in range(1, opts.max_iter + 1):
        _, _, lam = value_and_duals(x)
        g = [np.zeros_like(m) for m in x]
        for lam_k, pr in zip(lam[:4], probs):
            if lam_k <= 1e-12:
                continue
            for gi, gk in zip(g, psdopt.gradient(pr, x)):
                gi += lam_k * gk
        gnorm = float(np.sqrt(sum(np.sum(np.abs(m) ** 2) for m in g)))
        if gnorm == 0.0:
            converged = True
            break
        step = step_scale / (it + opts.step_offset) / gnorm
        x = psdopt.project_feasible([xi + step * gi for xi, gi in zip(x, g)], constraints)
        val, _, _ = value_and_duals(x)
        if val > best_val:
            best_val = val
            best_x = [m.copy() for m in x]
        for xb, xi in zip(xbar, x):
            xb *= it / (it + 1.0)
            xb += xi / (it + 1.0)
        if it % opts.average_every == 0:
            vbar, _, _ = value_and_duals(xbar)
            if vbar > best_val:
                best_val = vbar
                best_x = [m.copy() for m in xbar]
        history.append(best_val)
        if it > opts.window:
            gain = history[-1] - history[-1 - opts.window]
            if gain < opts.rel_tol * (1.0 + abs(history[-1])):
                converged = True
                break

    # Dual-stabilized polish: with LP duals frozen the weighted bound sum is
    # one smooth concave log-det program, which the spectral solver nails.
    # Re-derive duals at each round's solution and keep the best point seen.
    lam_avg: np.ndarray | None = None
    stale = 0
    for _ in range(opts.polish_rounds):
        _, _, lam = value_and_duals(best_x)
        lam = np.asarray(lam[:4], dtype=np.float64)
        lam_avg = lam if lam_avg is None else 0.5 * lam_avg + 0.5 * lam
        lam_sum = float(lam_avg.sum())
        if lam_sum <= 1e-12:
            break
        comp_terms = []
        for lam_k, pr in zip(lam_avg, probs):
            if lam_k <= 1e-12:
                continue
            comp_terms.extend(
                psdopt.Term(t.weight * lam_k / lam_sum, t.channels) for t in pr.terms
            )
        comp = psdopt.LogDetProblem(dims, comp_terms, constraints)
        rep = psdopt.solve(
            comp,
            opts=psdopt.SolveOptions(tol=opts.polish_tol, max_iter=opts.polish_iters),
            x0=best_x,
        )
        val, _, _ = value_and_duals(rep.solution)
        if val > best_val + opts.rel_tol * 1e-2 * (1.0 + abs(val)):
            best_val = val
            best_x = [m.copy() for m in rep.solution]
            stale = 0
        else:
            if val > best_val:
                best_val = val
                best_x = [m.copy() for m in rep.solution]
            stale += 1
            if stale >= 2:
                converged = True
                break

    # certify the budgets exactly before extraction: the alternating
    # projections end on a halfspace step and guarantee feasibility only
    # to ~1e-6, so clip the blocks back to PSD the same way extraction
    # will, then apply a uniform shrink (stays PSD, costs O(violation))
    def _psd_clip(mat):
        vals, vecs = np.linalg.eigh((mat + mat.conj().T) / 2.0)
        return (vecs * np.maximum(vals, 0.0)) @ vecs.conj().T

    best_x = [_psd_clip(m) for m in best_x]
    shrink = 1.0
    for hs in constraints:
        used = sum(float(w @ np.real(np.diag(best_x[v]))) for v, w in hs.diag_weights)
        if used > hs.limit:
            shrink = min(shrink, hs.limit / used)
    if shrink < 1.0:
        best_x = [m * shrink for m in best_x]

    _, bvals, _ = value_and_duals(best_x)
    rate_nats, _ = inner_lp(bvals, tuple(a))
    p1m = ens.csit_marginal(1)
    p2m = ens.csit_marginal(2)
    gam1 = np.array([best_x[1 + i][0, 0].real for i in range(ens.ns1)])
    gam2 = np.array([best_x[1 + ens.ns1 + j][0, 0].real for j in range(ens.ns2)])
    gam1[p1m == 0] = 0.0
    gam2[p2m == 0] = 0.0
    pre = extract_precoders(
        best_x[0], ens, gamma1=np.maximum(gam1, 0.0), gamma2=np.maximum(gam2, 0.0),
        power=(p1, p2),
    )
    rates_bits = RatePoint(
        r0=rate_nats.r0 / LN2,
        r1=rate_nats.r1 / LN2,
        r2=rate_nats.r2 / LN2,
        alpha=rate_nats.alpha,
    )
    return RegionSolution(
        rates=rates_bits,
        bounds_bits=tuple(v / LN2 for v in bvals),
        precoders=pre,
        converged=converged,
        iterations=it,
    )


def default_weight_grid(n: int = 33) -> list[tuple[float, float, float]]:
    """Polyline (1,0,0) -> (0,1,0) -> (0,0,1) sampled at n points."""
    if n < 3:
        raise DomainError("need at least 3 grid points")
    first = (n + 1) // 2
    second = n - first
    grid = []
    for k in range(first):
        t = k / (first - 1)
        grid.append((1.0 - t, t, 0.0))
    for k in range(1, second + 1):
        t = k / second
        grid.append((0.0, 1.0 - t, t))
    return grid


def trace_boundary(
    ens: FadingEnsemble,
    p1: float,
    p2: float,
    weight_grid: list[tuple[float, float, float]] | None = None,
    opts: RegionOptions | None = None,
) -> list[RegionSolution]:
    """Sweep the weight grid (default 33-point simplex polyline), in order."""
    grid = weight_grid if weight_grid is not None else default_weight_grid()
    return [weighted_sum_rate(ens, p1, p2, alpha, opts=opts) for alpha in grid]


# ---------------------------------------------------------------------------
# CSIT baselines (common message only)


def perfect_csit_capacity(
    ens: FadingEnsemble,
    p1: float,
    p2: float,
    opts: psdopt.SolveOptions | None = None,
    x0: list[np.ndarray] | None = None,
    full: bool = False,
):
    """Capacity (nats) when both TXs see the realized channel matrix.

    One 2x2 covariance per sample; per-TX powers couple the samples
    through their weighted diagonal averages.
    """
    if p1 == 0 and p2 == 0:
        return 0.0
    n = ens.size
    terms = [
        psdopt.Term(float(w), ((idx, ens.states[idx]),)) for idx, w in enumerate(ens.weights)
    ]
    constraints = [
        psdopt.Halfspace(
            diag_weights={idx: np.array([w, 0.0]) for idx, w in enumerate(ens.weights)},
            limit=float(p1),
        ),
        psdopt.Halfspace(
            diag_weights={idx: np.array([0.0, w]) for idx, w in enumerate(ens.weights)},
            limit=float(p2),
        ),
    ]
    prob = psdopt.LogDetProblem([2] * n, terms, constraints)
    rep = psdopt.solve(prob, opts=opts, x0=x0)
    return rep if full else rep.objective_nats


def no_csit_capacity(
    ens: FadingEnsemble,
    p1: float,
    p2: float,
    opts: psdopt.SolveOptions | None = None,
    x0: list[np.ndarray] | None = None,
    full: bool = False,
):
    """Capacity (nats) with a single state-independent input covariance."""
    if p1 == 0 and p2 == 0:
        return 0.0
    terms = [
        psdopt.Term(float(w), ((0, ens.states[idx]),)) for idx, w in enumerate(ens.weights)
    ]
    constraints = [
        psdopt.Halfspace(diag_weights={0: np.array([1.0, 0.0])}, limit=float(p1)),
        psdopt.Halfspace(diag_weights={0: np.array([0.0, 1.0])}, limit=float(p2)),
    ]
    prob = psdopt.LogDetProblem([2], terms, constraints)
    rep = psdopt.solve(prob, opts=opts, x0=x0)
    return rep if full else rep.objective_nats

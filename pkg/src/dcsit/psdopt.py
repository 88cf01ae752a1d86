"""Sample-average log-det maximization over PSD variables.

Problems have the form

    maximize   sum_l w_l  logdet( I + sum_v H_{l,v} Q_v H_{l,v}^H )
    subject to Q_v  PSD,   and diagonal power constraints
               sum_v <diag(c_v), diag(Q_v)>  <=  P    (one per constraint)

which is concave in the tuple (Q_v). The solver is projected gradient
ascent with Armijo backtracking; the feasible set (PSD cone intersected
with halfspaces) is handled by Dykstra's alternating projection scheme,
which converges to the exact Euclidean projection for this geometry.
The final refinement phase swaps Dykstra for a dual-bisection projection
(exact up to eigendecomposition) so the KKT fixed-point certificate is
not polluted by alternating-projection bias.

Terms sharing a channel-shape signature are evaluated in one batched
pass (matmul/slogdet over a leading sample axis), so Monte Carlo
averages with thousands of terms stay cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, ProjectionStallError, WeightError

DEFAULT_TOL = 1e-8
DYKSTRA_MAX_CYCLES = 500
DYKSTRA_CHANGE_TOL = 1e-10
FEAS_TOL = 1e-9
STALL_TOL = 1e-6


@dataclass(frozen=True)
class Term:
    """One weighted log-det term; channels maps variable -> H matrix."""

    weight: float
    channels: tuple[tuple[int, np.ndarray], ...]

    def __post_init__(self):
        chans = tuple((int(v), np.asarray(h, dtype=np.complex128)) for v, h in self.channels)
        if not chans:
            raise DomainError("term needs at least one channel")
        rows = {h.shape[0] for _, h in chans}
        if len(rows) != 1 or any(h.ndim != 2 for _, h in chans):
            raise DomainError("all channels in a term must be 2-d with equal row count")
        object.__setattr__(self, "channels", chans)
        object.__setattr__(self, "weight", float(self.weight))


@dataclass(frozen=True)
class Halfspace:
    """sum_v <diag_weights[v], diag(Q_v)> <= limit, weights nonnegative."""

    diag_weights: tuple[tuple[int, np.ndarray], ...]
    limit: float

    def __post_init__(self):
        if isinstance(self.diag_weights, Mapping):
            items = sorted(self.diag_weights.items())
        else:
            items = list(self.diag_weights)
        ws = tuple((int(v), np.asarray(w, dtype=np.float64)) for v, w in items)
        if not ws or all(np.all(w == 0.0) for _, w in ws):
            raise DomainError("halfspace needs a nonzero diagonal weight")
        if any(w.min() < 0 for _, w in ws):
            raise DomainError("diagonal weights must be nonnegative")
        if not self.limit > 0:
            raise DomainError(f"halfspace limit must be positive, got {self.limit}")
        object.__setattr__(self, "diag_weights", ws)
        object.__setattr__(self, "limit", float(self.limit))


class LogDetProblem:
    """Immutable problem description plus a lazily compiled batched form."""

    def __init__(
        self,
        dims: Sequence[int],
        terms: Sequence[Term],
        constraints: Sequence[Halfspace],
    ):
        self.dims = tuple(int(d) for d in dims)
        if any(d < 1 for d in self.dims):
            raise DomainError("variable dimensions must be >= 1")
        self.terms = tuple(terms)
        self.constraints = tuple(constraints)
        if not self.terms:
            raise DomainError("problem needs at least one term")
        wsum = sum(t.weight for t in self.terms)
        if any(t.weight < 0 for t in self.terms):
            raise WeightError("term weights must be nonnegative")
        if abs(wsum - 1.0) > 1e-9:
            raise WeightError(f"term weights sum to {wsum!r}, expected 1")
        for t in self.terms:
            for v, h in t.channels:
                if not 0 <= v < len(self.dims) or h.shape[1] != self.dims[v]:
                    raise DomainError("channel shape inconsistent with variable dims")
        for c in self.constraints:
            for v, w in c.diag_weights:
                if not 0 <= v < len(self.dims) or w.shape != (self.dims[v],):
                    raise DomainError("constraint weight inconsistent with variable dims")
        self._compiled: _Compiled | None = None

    @property
    def n_vars(self) -> int:
        return len(self.dims)

    def compiled(self) -> "_Compiled":
        if self._compiled is None:
            self._compiled = _compile(self)
        return self._compiled


# ---------------------------------------------------------------------------
# packed representation: variables bucketed by dimension


@dataclass
class _Slot:
    dim: int
    rows: np.ndarray  # (T,) bucket row per term
    h: np.ndarray  # (T, m, dim)
    hconj: np.ndarray  # (T, dim, m)
    single: bool


@dataclass
class _Group:
    weights: np.ndarray  # (T,)
    m: int
    slots: list[_Slot]


@dataclass
class _PackedHalfspace:
    coef: dict[int, np.ndarray]  # dim -> (n_dim, dim) diagonal weights
    limit: float
    norm2: float


@dataclass
class _Compiled:
    dims: tuple[int, ...]
    var_loc: list[tuple[int, int]]  # var -> (dim, bucket row)
    bucket_counts: dict[int, int]
    groups: list[_Group]
    halfspaces: list[_PackedHalfspace]


def _compile(problem: LogDetProblem) -> _Compiled:
    counts: dict[int, int] = {}
    var_loc: list[tuple[int, int]] = []
    for d in problem.dims:
        var_loc.append((d, counts.get(d, 0)))
        counts[d] = counts.get(d, 0) + 1

    by_sig: dict[tuple, list[Term]] = {}
    for t in problem.terms:
        sig = tuple(h.shape for _, h in t.channels)
        by_sig.setdefault(sig, []).append(t)

    groups: list[_Group] = []
    for sig, ts in by_sig.items():
        m = sig[0][0]
        weights = np.array([t.weight for t in ts])
        slots = []
        for k in range(len(sig)):
            hs = np.stack([t.channels[k][1] for t in ts])
            rows = np.array([var_loc[t.channels[k][0]][1] for t in ts], dtype=np.int64)
            dim = sig[k][1]
            slots.append(
                _Slot(
                    dim=dim,
                    rows=rows,
                    h=hs,
                    hconj=hs.conj().transpose(0, 2, 1).copy(),
                    single=bool(np.all(rows == rows[0])),
                )
            )
        groups.append(_Group(weights=weights, m=m, slots=slots))

    halfspaces = []
    for c in problem.constraints:
        coef: dict[int, np.ndarray] = {
            d: np.zeros((n, d)) for d, n in counts.items()
        }
        for v, w in c.diag_weights:
            d, row = var_loc[v]
            coef[d][row] += w
        norm2 = sum(float(np.sum(a * a)) for a in coef.values())
        halfspaces.append(_PackedHalfspace(coef=coef, limit=c.limit, norm2=norm2))

    return _Compiled(
        dims=problem.dims,
        var_loc=var_loc,
        bucket_counts=counts,
        groups=groups,
        halfspaces=halfspaces,
    )


def _pack(comp: _Compiled, point: Sequence[np.ndarray]) -> dict[int, np.ndarray]:
    if len(point) != len(comp.dims):
        raise DomainError(f"expected {len(comp.dims)} matrices, got {len(point)}")
    buckets = {
        d: np.zeros((n, d, d), dtype=np.complex128) for d, n in comp.bucket_counts.items()
    }
    for v, mat in enumerate(point):
        d, row = comp.var_loc[v]
        m = np.asarray(mat, dtype=np.complex128)
        if m.shape != (d, d):
            raise DomainError(f"variable {v} must be {d}x{d}, got {m.shape}")
        buckets[d][row] = m
    return buckets


def _unpack(comp: _Compiled, buckets: dict[int, np.ndarray]) -> list[np.ndarray]:
    return [buckets[d][row].copy() for d, row in comp.var_loc]


def _herm(batch: np.ndarray) -> np.ndarray:
    return 0.5 * (batch + batch.conj().transpose(0, 2, 1))


def _vzeros(comp: _Compiled) -> dict[int, np.ndarray]:
    return {d: np.zeros((n, d, d), dtype=np.complex128) for d, n in comp.bucket_counts.items()}


def _vcopy(b: dict[int, np.ndarray]) -> dict[int, np.ndarray]:
    return {d: a.copy() for d, a in b.items()}


def _vaxpy(alpha: float, x: dict, y: dict) -> dict[int, np.ndarray]:
    """alpha * x + y, allocating fresh arrays."""
    return {d: alpha * x[d] + y[d] for d in y}


def _vsub(x: dict, y: dict) -> dict[int, np.ndarray]:
    return {d: x[d] - y[d] for d in x}


def _vdot(x: dict, y: dict) -> float:
    return float(sum(np.sum(x[d].conj() * y[d]).real for d in x))


def _vnorm(x: dict) -> float:
    return float(np.sqrt(max(_vdot(x, x), 0.0)))


# ---------------------------------------------------------------------------
# objective and gradient


def _eval_packed(comp: _Compiled, buckets: dict[int, np.ndarray], need_grad: bool):
    total = 0.0
    grad = _vzeros(comp) if need_grad else None
    for grp in comp.groups:
        n_terms = grp.weights.size
        a = np.broadcast_to(
            np.eye(grp.m, dtype=np.complex128), (n_terms, grp.m, grp.m)
        ).copy()
        for slot in grp.slots:
            q = buckets[slot.dim][slot.rows]
            a += (slot.h @ q) @ slot.hconj
        a = _herm(a)
        sign, ld = np.linalg.slogdet(a)
        if not np.all(np.isfinite(ld)) or np.any(sign.real < 0.5):
            return -np.inf, grad
        total += float(grp.weights @ ld)
        if need_grad:
            ainv = np.linalg.inv(a)
            for slot in grp.slots:
                g = (slot.hconj @ ainv @ slot.h) * grp.weights[:, None, None]
                if slot.single:
                    grad[slot.dim][slot.rows[0]] += g.sum(axis=0)
                else:
                    np.add.at(grad[slot.dim], slot.rows, g)
    if need_grad:
        grad = {d: _herm(a) for d, a in grad.items()}
    return total, grad


def objective(problem: LogDetProblem, point: Sequence[np.ndarray]) -> float:
    """Objective value in nats at the given variable tuple."""
    comp = problem.compiled()
    val, _ = _eval_packed(comp, _pack(comp, point), need_grad=False)
    return val


def gradient(problem: LogDetProblem, point: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Euclidean gradient, one Hermitian matrix per variable."""
    comp = problem.compiled()
    _, grad = _eval_packed(comp, _pack(comp, point), need_grad=True)
    return _unpack(comp, grad)


# ---------------------------------------------------------------------------
# feasibility: Dykstra alternating projections


def _eig2_bounds(arr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form eigenvalues (low, high) of a batch of Hermitian 2x2."""
    a = arr[:, 0, 0].real
    c = arr[:, 1, 1].real
    b = arr[:, 0, 1]
    mean = 0.5 * (a + c)
    rad = np.sqrt((0.5 * (a - c)) ** 2 + b.real**2 + b.imag**2)
    return mean - rad, mean + rad


def _psd_project_2x2(arr: np.ndarray) -> np.ndarray:
    lo, hi = _eig2_bounds(arr)
    out = arr.copy()
    fix = lo < 0.0
    if np.any(fix):
        dead = fix & (hi <= 0.0)
        out[dead] = 0.0
        keep = fix & (hi > 0.0)
        if np.any(keep):
            sub = arr[keep]
            l1 = hi[keep][:, None, None]
            l2 = lo[keep][:, None, None]
            eye = np.eye(2, dtype=np.complex128)
            # rank-1 part hi * v1 v1^H, with v1 v1^H = (A - lo I)/(hi - lo)
            out[keep] = l1 * (sub - l2 * eye) / (l1 - l2)
    return out


def _psd_project_buckets(b: dict[int, np.ndarray]) -> dict[int, np.ndarray]:
    out = {}
    for d, arr in b.items():
        arr = _herm(arr)
        if d == 1:
            out[d] = np.maximum(arr.real, 0.0).astype(np.complex128)
        elif d == 2:
            out[d] = _psd_project_2x2(arr)
        else:
            w, v = np.linalg.eigh(arr)
            w = np.maximum(w, 0.0)
            out[d] = _herm((v * w[:, None, :]) @ v.conj().transpose(0, 2, 1))
    return out


def _halfspace_value(b: dict[int, np.ndarray], hs: _PackedHalfspace) -> float:
    val = 0.0
    for d, coef in hs.coef.items():
        idx = np.arange(d)
        val += float(np.sum(coef * b[d][:, idx, idx].real))
    return val


def _halfspace_project(b: dict[int, np.ndarray], hs: _PackedHalfspace) -> dict[int, np.ndarray]:
    val = _halfspace_value(b, hs)
    if val <= hs.limit:
        return _vcopy(b)
    alpha = (val - hs.limit) / hs.norm2
    out = _vcopy(b)
    for d, coef in hs.coef.items():
        idx = np.arange(d)
        out[d][:, idx, idx] -= alpha * coef
    return out


def _feasibility_gap(b: dict[int, np.ndarray], halfspaces: list[_PackedHalfspace]) -> float:
    worst = 0.0
    for d, arr in b.items():
        if arr.shape[0] == 0:
            continue
        arr = _herm(arr)
        if d == 1:
            low = arr[:, 0, 0].real.min()
        elif d == 2:
            low = _eig2_bounds(arr)[0].min()
        else:
            low = np.linalg.eigvalsh(arr).min()
        worst = max(worst, float(-min(low, 0.0)))
    for hs in halfspaces:
        worst = max(worst, _halfspace_value(b, hs) - hs.limit)
    return worst


def _dykstra(
    buckets: dict[int, np.ndarray],
    halfspaces: list[_PackedHalfspace],
    max_cycles: int = DYKSTRA_MAX_CYCLES,
    change_tol: float = DYKSTRA_CHANGE_TOL,
) -> dict[int, np.ndarray]:
    projections = [_psd_project_buckets] + [
        (lambda bb, h=hs: _halfspace_project(bb, h)) for hs in halfspaces
    ]
    x = _vcopy(buckets)
    increments = [_vzeros_like(x) for _ in projections]
    for _ in range(max_cycles):
        start = x
        for i, proj in enumerate(projections):
            y = _vaxpy(1.0, increments[i], x)
            xn = proj(y)
            increments[i] = _vsub(y, xn)
            x = xn
        if _vnorm(_vsub(x, start)) < change_tol:
            break
    gap = _feasibility_gap(x, halfspaces)
    if gap > STALL_TOL:
        raise ProjectionStallError(f"alternating projections stalled, violation {gap:.3e}")
    return x


def _vzeros_like(b: dict[int, np.ndarray]) -> dict[int, np.ndarray]:
    return {d: np.zeros_like(a) for d, a in b.items()}


def _disjoint_supports(halfspaces: list[_PackedHalfspace]) -> bool:
    """True when no variable is touched by two different halfspaces."""
    seen: set[tuple[int, int]] = set()
    for hs in halfspaces:
        for d, coef in hs.coef.items():
            for r in np.nonzero(np.abs(coef).sum(axis=1) > 0.0)[0]:
                key = (d, int(r))
                if key in seen:
                    return False
                seen.add(key)
    return True


def _block_projector(a: np.ndarray, c: np.ndarray):
    """value(lam), mat(lam) for the shifted projection max(A - lam*diag(c), 0).

    Uniform weight vectors share the eigenbasis of A across lam, so the
    eigendecomposition happens once; otherwise each lam costs one eigh.
    """
    a = 0.5 * (a + a.conj().T)
    if c.max() - c.min() <= 1e-14 * max(float(c.max()), 1.0):
        w0, v0 = np.linalg.eigh(a)
        cc = float(c[0])

        def val(lam: float) -> float:
            return float(cc * np.maximum(w0 - lam * cc, 0.0).sum())

        def mat(lam: float) -> np.ndarray:
            w = np.maximum(w0 - lam * cc, 0.0)
            return (v0 * w[None, :]) @ v0.conj().T

        return val, mat

    shift = np.diag(c).astype(np.complex128)

    def mat(lam: float) -> np.ndarray:
        w, v = np.linalg.eigh(a - lam * shift)
        w = np.maximum(w, 0.0)
        return (v * w[None, :]) @ v.conj().T

    def val(lam: float) -> float:
        return float(c @ np.real(np.diag(mat(lam))))

    return val, mat


def _budget_root(usage, u_free: float, limit: float, hint: float) -> float:
    """Smallest lam >= 0 with usage(lam) <= limit, for nonincreasing usage.

    Bracketing secant (Illinois damping on the stale endpoint) instead of
    plain bisection: usage is piecewise smooth in lam, so a good hint from
    a warm multiplier resolves the root in a handful of evaluations.
    """
    lo, ulo = 0.0, u_free - limit
    hi = max(1.0, 2.0 * hint)
    uhi = usage(hi) - limit
    while uhi > 0.0:
        lo, ulo = hi, uhi
        hi *= 2.0
        if hi > 1e30:
            raise ProjectionStallError("halfspace dual bisection diverged")
        uhi = usage(hi) - limit
    side = 0
    for _ in range(60):
        if hi - lo <= 1e-14 * (1.0 + hi):
            break
        denom = ulo - uhi
        t = lo + ulo * (hi - lo) / denom if denom > 0.0 else 0.5 * (lo + hi)
        if not lo < t < hi:
            t = 0.5 * (lo + hi)
        ut = usage(t) - limit
        if ut > 0.0:
            lo, ulo = t, ut
            if side < 0:
                uhi *= 0.5
            side = -1
        else:
            hi, uhi = t, ut
            if side > 0:
                ulo *= 0.5
            side = 1
    return hi


def _exact_project(
    buckets: dict[int, np.ndarray],
    halfspaces: list[_PackedHalfspace],
    max_sweeps: int = 500,
    mu_state: np.ndarray | None = None,
) -> dict[int, np.ndarray]:
    """Euclidean projection onto {PSD} cap {halfspaces}, exact up to eigh.

    Dual form: X(mu) = proj_psd(A - sum_h mu_h diag(c_h)) with mu >= 0
    and complementary slackness per budget. Budget usage is nonincreasing
    in the budget's own multiplier, so a root find solves each coordinate
    subproblem. Halfspaces with disjoint supports decouple and settle in
    one sweep; overlapping ones contract linearly through the shared
    cone, with Aitken extrapolation of the multipliers cutting through
    slow (near-parallel constraint) geometries. mu_state carries warm
    multipliers across calls on nearby points and receives the final ones.
    """
    if not halfspaces:
        return _psd_project_buckets(buckets)
    touched = [
        [
            (d, int(r))
            for d, coef in hs.coef.items()
            for r in np.nonzero(np.abs(coef).sum(axis=1) > 0.0)[0]
        ]
        for hs in halfspaces
    ]
    redo = {key for blocks in touched for key in blocks}
    # blocks under some budget are rebuilt at the settled multipliers, so
    # only the untouched ones need the plain cone projection up front
    out = {}
    for d, arr in buckets.items():
        keep = [r for r in range(arr.shape[0]) if (d, r) not in redo]
        out[d] = _herm(arr)
        if keep:
            out[d][keep] = _psd_project_buckets({d: arr[keep]})[d]
    mu = np.zeros(len(halfspaces))
    if mu_state is not None:
        mu[:] = np.maximum(mu_state, 0.0)

    def shift_for(d: int, r: int, skip: int) -> np.ndarray:
        s = np.zeros(d)
        for j, hs in enumerate(halfspaces):
            if j == skip or mu[j] == 0.0:
                continue
            coef = hs.coef.get(d)
            if coef is not None:
                s += mu[j] * coef[r]
        return s

    prev_step: np.ndarray | None = None
    for _ in range(max_sweeps):
        before = mu.copy()
        delta = 0.0
        for j, hs in enumerate(halfspaces):
            if not touched[j]:
                continue
            lim_tol = 1e-12 * (1.0 + abs(hs.limit))
            projectors = [
                _block_projector(
                    buckets[d][r] - np.diag(shift_for(d, r, j)), hs.coef[d][r]
                )
                for d, r in touched[j]
            ]
            usage = lambda lam: sum(val(lam) for val, _ in projectors)
            u_now = usage(mu[j])
            if mu[j] == 0.0:
                if u_now <= hs.limit + lim_tol:
                    continue
                u_free = u_now
            else:
                if abs(u_now - hs.limit) <= lim_tol:
                    continue
                u_free = usage(0.0)
            if u_free <= hs.limit + lim_tol:
                new = 0.0
            else:
                new = _budget_root(usage, u_free, hs.limit, mu[j])
            delta = max(delta, abs(new - mu[j]))
            mu[j] = new
        if delta <= 1e-13 * (1.0 + float(np.abs(mu).max())):
            break
        # geometric decay of the sweep steps means a linear fixed-point
        # map; jump each multiplier to its Aitken limit when the ratio is
        # stable. Overshoots clamp onto the mu >= 0 boundary and the next
        # sweeps re-polish, so a bad ratio estimate costs sweeps, not
        # correctness; ratios near 1 are exactly the degenerate
        # (near-parallel constraint) crawls that need the jump most.
        step = mu - before
        if prev_step is not None and delta > 1e-11 * (1.0 + float(np.abs(mu).max())):
            ok = np.abs(prev_step) > 1e-300
            r = np.where(ok, step / np.where(ok, prev_step, 1.0), 0.0)
            if np.all((r > -1.0) & (r < 1.0 - 1e-9)):
                mu = np.maximum(mu + step * r / (1.0 - r), 0.0)
                step = None
        prev_step = step
    else:
        raise ProjectionStallError("projection dual sweeps did not settle")
    if mu_state is not None:
        mu_state[:] = mu
    redo = {key for blocks in touched for key in blocks}
    for d, r in redo:
        blk = buckets[d][r] - np.diag(shift_for(d, r, skip=-1))
        blk = 0.5 * (blk + blk.conj().T)
        w, v = np.linalg.eigh(blk)
        out[d][r] = (v * np.maximum(w, 0.0)[None, :]) @ v.conj().T
    return out


def project_feasible(
    point: Sequence[np.ndarray],
    constraints: Sequence[Halfspace],
    max_cycles: int = DYKSTRA_MAX_CYCLES,
) -> list[np.ndarray]:
    """Euclidean projection onto {PSD for every variable} cap {halfspaces}."""
    mats = [np.asarray(p, dtype=np.complex128) for p in point]
    dims = [m.shape[0] for m in mats]
    shell = LogDetProblem(
        dims=dims,
        terms=[Term(weight=1.0, channels=((0, np.eye(dims[0])),))],
        constraints=constraints,
    )
    comp = shell.compiled()
    packed = _pack(comp, mats)
    if _disjoint_supports(comp.halfspaces):
        packed = _exact_project(packed, comp.halfspaces)
    else:
        packed = _dykstra(packed, comp.halfspaces, max_cycles=max_cycles)
    return _unpack(comp, packed)


# ---------------------------------------------------------------------------
# projected gradient ascent


@dataclass
class SolveOptions:
    tol: float = DEFAULT_TOL
    max_iter: int = 10_000
    seed: int = 0
    armijo_init: float = 1.0
    armijo_shrink: float = 0.5
    armijo_slope: float = 1e-4
    kkt_rel: float = 1e-6
    flat_window: int = 10


@dataclass
class SolveReport:
    objective_nats: float
    solution: list[np.ndarray]
    kkt_residual: float
    constraint_violation: float
    iterations: int
    converged: bool
    objective_trace: np.ndarray = field(repr=False, default=None)
    metadata: dict = field(default_factory=dict)


def _initial_point(comp: _Compiled) -> dict[int, np.ndarray]:
    scale = np.inf
    for hs in comp.halfspaces:
        weight_sum = sum(float(a.sum()) for a in hs.coef.values())
        if weight_sum > 0:
            scale = min(scale, hs.limit / weight_sum)
    if not np.isfinite(scale):
        scale = 1.0
    x = _vzeros(comp)
    for d in x:
        x[d][:] = 0.9 * scale * np.eye(d)
    return x


def solve(
    problem: LogDetProblem,
    opts: SolveOptions | None = None,
    x0: Sequence[np.ndarray] | None = None,
) -> SolveReport:
    """Maximize the problem objective over its feasible set.

    Monotone ascent: every accepted iterate is feasible (within the
    projection tolerance) and never decreases the objective beyond a
    1e-12 relative rounding allowance in the final refinement phase.
    Termination requires the relative objective change to stay below
    opts.tol for opts.flat_window consecutive iterations and the
    projected-gradient fixed-point residual to clear
    opts.kkt_rel * (1 + ||grad||); hitting max_iter first returns
    converged=False.
    """
    opts = opts or SolveOptions()
    comp = problem.compiled()
    exact_mode = False
    polish = False
    mu_warm = np.zeros(len(comp.halfspaces))

    def proj(b: dict[int, np.ndarray]) -> dict[int, np.ndarray]:
        if exact_mode:
            return _exact_project(b, comp.halfspaces, mu_state=mu_warm)
        return _dykstra(b, comp.halfspaces)

    if x0 is not None:
        x = proj(_pack(comp, x0))
    else:
        x = proj(_initial_point(comp))
    f, g = _eval_packed(comp, x, need_grad=True)
    trace = [f]
    consec = 0
    kkt = np.inf
    converged = False
    scale = 1.0  # spectral (Barzilai-Borwein) length of the ascent direction
    it = 0
    for it in range(1, opts.max_iter + 1):
        if polish:
            # fixed-step refinement: near the optimum the objective is
            # flat to evaluation noise, so a line search cannot move the
            # iterate; the plain projected fixed-point map still
            # contracts the remaining displacement at the BB step
            try:
                xt = proj(_vaxpy(scale, g, x))
                ft, _ = _eval_packed(comp, xt, need_grad=False)
            except ProjectionStallError:
                xt, ft = x, -np.inf
            if not (np.isfinite(ft) and ft >= f - 1e-12 * (1.0 + abs(f))):
                xt, ft = x, f
                scale *= 0.5
        else:
            step = opts.armijo_init
            while True:
                # a candidate the alternating projections cannot certify is
                # unusable; shrink toward the feasible iterate like any
                # failed sufficient-increase test
                try:
                    xt = proj(_vaxpy(step * scale, g, x))
                    ft, _ = _eval_packed(comp, xt, need_grad=False)
                except ProjectionStallError:
                    ft = -np.inf
                if np.isfinite(ft):
                    ascent = _vdot(g, _vsub(xt, x))
                    if ft >= f + opts.armijo_slope * ascent:
                        break
                step *= opts.armijo_shrink
                if step < 1e-13:
                    xt, ft = x, f
                    break
        rel = abs(ft - f) / (1.0 + abs(ft))
        gt = None
        if ft > -np.inf:
            _, gt = _eval_packed(comp, xt, need_grad=True)
            dx = _vsub(xt, x)
            dg = _vsub(gt, g)
            curv = -_vdot(dx, dg)  # >= 0 for concave objectives
            nx2 = _vdot(dx, dx)
            if curv > 1e-16 and nx2 > 0.0:
                scale = min(max(nx2 / curv, 1e-8), 1e8)
        x, f = xt, ft
        g = gt if gt is not None else g
        trace.append(f)
        consec = consec + 1 if rel < opts.tol else 0
        if consec >= opts.flat_window:
            try:
                kkt = _vnorm(_vsub(x, proj(_vaxpy(1.0, g, x))))
            except ProjectionStallError:
                kkt = np.inf
            if kkt < opts.kkt_rel * (1.0 + _vnorm(g)):
                converged = True
                break
            consec = 0
            if not polish:
                polish = True
                exact_mode = True
                # re-base on the exact feasible set: the alternating
                # projections leave a small bias (~1e-6 violation) that
                # pollutes both the objective comparisons and the
                # fixed-point residual; the refinement below needs the
                # noise-free projection to make progress on flat faces
                x = proj(x)
                f, g = _eval_packed(comp, x, need_grad=True)
    if not np.isfinite(kkt):
        try:
            kkt = _vnorm(_vsub(x, proj(_vaxpy(1.0, g, x))))
        except ProjectionStallError:
            pass
    return SolveReport(
        objective_nats=f,
        solution=_unpack(comp, x),
        kkt_residual=kkt,
        constraint_violation=_feasibility_gap(x, comp.halfspaces),
        iterations=it,
        converged=converged,
        objective_trace=np.asarray(trace),
        metadata={
            "method": "projected-gradient-ascent+armijo+dykstra",
            "tol": opts.tol,
            "max_iter": opts.max_iter,
            "armijo": {
                "init": opts.armijo_init,
                "shrink": opts.armijo_shrink,
                "slope": opts.armijo_slope,
            },
        },
    )

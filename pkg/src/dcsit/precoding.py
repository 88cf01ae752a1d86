"""Distributed linear precoding for the 2-TX cooperative fading channel.

With CSIT alphabets S1, S2 the common-message input is x = g1(S1) d + ...
after stacking: the pair (g1(S1), g2(S2)) is read off one d x d PSD
matrix Q, d = |S1| + |S2|, through the selector E(s1, s2) = [e_{s1}, e_{|S1|+s2}].
Ergodic capacity becomes a concave log-det program in Q (solved by
psdopt); precoders come back out of the matrix square root of Q.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import psdopt
from .channel import FadingEnsemble, complex_gaussian, explicit_ensemble
from .errors import DomainError, NonFiniteError
from .linalg import eig_hermitian, hermitian_part, numerical_rank, sqrt_psd

POWER_SLACK = 1e-8


def selector_matrix(s1: int, s2: int, ns1: int, ns2: int) -> np.ndarray:
    """d x 2 selector E(s1, s2): first column e_{s1}, second e_{ns1+s2}."""
    if not (0 <= s1 < ns1 and 0 <= s2 < ns2):
        raise DomainError("CSIT index out of range")
    e = np.zeros((ns1 + ns2, 2))
    e[s1, 0] = 1.0
    e[ns1 + s2, 1] = 1.0
    return e


def _sample_channels(ens: FadingEnsemble) -> np.ndarray:
    """H_l = S_l E(s1_l, s2_l)^H stacked to (L, M, d)."""
    d = ens.dim
    h = np.zeros((ens.size, ens.m, d), dtype=np.complex128)
    rows = np.arange(ens.size)
    h[rows, :, ens.s1] = ens.states[:, :, 0]
    h[rows, :, ens.ns1 + ens.s2] = ens.states[:, :, 1]
    return h


def assemble_problem(ens: FadingEnsemble, p1: float, p2: float) -> psdopt.LogDetProblem:
    """Common-message capacity as a log-det program in one d x d PSD matrix.

    Per-TX powers turn into diagonal constraints weighted by the CSIT
    marginals: sum_i Q_ii P(S1 = i) <= P1 over the first |S1| entries,
    and likewise for TX2 on the remaining |S2|.
    """
    if p1 <= 0 or p2 <= 0:
        raise DomainError("powers must be positive")
    d = ens.dim
    h = _sample_channels(ens)
    terms = [
        psdopt.Term(weight=float(w), channels=((0, h[idx]),))
        for idx, w in enumerate(ens.weights)
    ]
    w1 = np.zeros(d)
    w1[: ens.ns1] = ens.csit_marginal(1)
    w2 = np.zeros(d)
    w2[ens.ns1 :] = ens.csit_marginal(2)
    constraints = [
        psdopt.Halfspace(diag_weights={0: w1}, limit=float(p1)),
        psdopt.Halfspace(diag_weights={0: w2}, limit=float(p2)),
    ]
    return psdopt.LogDetProblem(dims=[d], terms=terms, constraints=constraints)


def common_message_capacity(
    ens: FadingEnsemble,
    p1: float,
    p2: float,
    opts: psdopt.SolveOptions | None = None,
    x0: np.ndarray | None = None,
) -> psdopt.SolveReport:
    """Solve the distributed-precoding program; objective is in nats."""
    if p1 == 0 and p2 == 0:
        d = ens.dim
        return psdopt.SolveReport(
            objective_nats=0.0,
            solution=[np.zeros((d, d), dtype=np.complex128)],
            kkt_residual=0.0,
            constraint_violation=0.0,
            iterations=0,
            converged=True,
            objective_trace=np.zeros(1),
            metadata={"method": "trivial-zero-power"},
        )
    problem = assemble_problem(ens, p1, p2)
    return psdopt.solve(problem, opts=opts, x0=None if x0 is None else [x0])


# ---------------------------------------------------------------------------
# precoder records


@dataclass(frozen=True)
class PrecoderSet:
    """Per-CSIT-symbol precoding vectors plus private-stream powers.

    g1[i] is the common-stream vector used by TX1 when it observes
    symbol i (row vectors of length d'); gamma1[i] the matching private
    power. power optionally records the per-TX budgets (P1, P2).
    """

    g1: np.ndarray
    g2: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray
    power: tuple[float, float] | None = None

    def __post_init__(self):
        g1 = np.atleast_2d(np.asarray(self.g1, dtype=np.complex128))
        g2 = np.atleast_2d(np.asarray(self.g2, dtype=np.complex128))
        gam1 = np.asarray(self.gamma1, dtype=np.float64)
        gam2 = np.asarray(self.gamma2, dtype=np.float64)
        if g1.shape[1] != g2.shape[1]:
            raise DomainError("g1 and g2 must share the precoding dimension d'")
        if gam1.shape != (g1.shape[0],) or gam2.shape != (g2.shape[0],):
            raise DomainError("gamma length must match the CSIT alphabet")
        if gam1.min(initial=0.0) < -1e-12 or gam2.min(initial=0.0) < -1e-12:
            raise DomainError("private powers must be nonnegative")
        for arr in (g1, g2):
            if not np.all(np.isfinite(arr.real)) or not np.all(np.isfinite(arr.imag)):
                raise NonFiniteError("precoders contain NaN or Inf")
        object.__setattr__(self, "g1", g1)
        object.__setattr__(self, "g2", g2)
        object.__setattr__(self, "gamma1", np.maximum(gam1, 0.0))
        object.__setattr__(self, "gamma2", np.maximum(gam2, 0.0))

    @property
    def d_prime(self) -> int:
        return self.g1.shape[1]

    @property
    def ns1(self) -> int:
        return self.g1.shape[0]

    @property
    def ns2(self) -> int:
        return self.g2.shape[0]


def expected_powers(pre: PrecoderSet, ens: FadingEnsemble) -> tuple[float, float]:
    """E[||g_k(S_k)||^2 + gamma_k(S_k)] under the ensemble CSIT marginals."""
    p1m = ens.csit_marginal(1)
    p2m = ens.csit_marginal(2)
    e1 = float(p1m @ (np.sum(np.abs(pre.g1) ** 2, axis=1) + pre.gamma1))
    e2 = float(p2m @ (np.sum(np.abs(pre.g2) ** 2, axis=1) + pre.gamma2))
    return e1, e2


def extract_precoders(
    q: np.ndarray,
    ens: FadingEnsemble,
    gamma1: np.ndarray | None = None,
    gamma2: np.ndarray | None = None,
    power: tuple[float, float] | None = None,
    compress: bool = False,
) -> PrecoderSet:
    """Read [g1(s1) g2(s2)] = Q^(1/2) E(s1, s2) off the optimized matrix.

    With compress=True the square root is truncated to the numerical
    rank r of Q, so d' = r instead of d; the Gram matrix (hence every
    conditional covariance and rate) is unchanged up to the rank cut.
    """
    q = hermitian_part(np.asarray(q, dtype=np.complex128))
    d = ens.dim
    if q.shape != (d, d):
        raise DomainError(f"Q must be {d}x{d} for this ensemble, got {q.shape}")
    if compress:
        e = eig_hermitian(q)
        r = max(numerical_rank(e.values), 1)
        root = np.sqrt(np.maximum(e.values[:r], 0.0))[:, None] * e.vectors[:, :r].conj().T
    else:
        root = sqrt_psd(q)
    pre = PrecoderSet(
        g1=root[:, : ens.ns1].T,
        g2=root[:, ens.ns1 :].T,
        gamma1=np.zeros(ens.ns1) if gamma1 is None else gamma1,
        gamma2=np.zeros(ens.ns2) if gamma2 is None else gamma2,
        power=power,
    )
    if power is not None:
        e1, e2 = expected_powers(pre, ens)
        if e1 > power[0] + POWER_SLACK or e2 > power[1] + POWER_SLACK:
            raise DomainError(f"extracted precoders violate power: {e1}, {e2} vs {power}")
    return pre


def reconstruct_covariance(pre: PrecoderSet) -> np.ndarray:
    """Conditional input covariances, shape (ns1, ns2, 2, 2).

    Sigma(s1, s2) = [[||g1||^2 + gamma1, g1^H g2], [conj, ||g2||^2 + gamma2]].
    """
    cross = pre.g1.conj() @ pre.g2.T
    top = np.sum(np.abs(pre.g1) ** 2, axis=1) + pre.gamma1
    bot = np.sum(np.abs(pre.g2) ** 2, axis=1) + pre.gamma2
    cov = np.empty((pre.ns1, pre.ns2, 2, 2), dtype=np.complex128)
    cov[..., 0, 0] = top[:, None]
    cov[..., 1, 1] = bot[None, :]
    cov[..., 0, 1] = cross
    cov[..., 1, 0] = cross.conj()
    return cov


def achieved_rate(pre: PrecoderSet, ens: FadingEnsemble) -> float:
    """Sample-average logdet(I + S Sigma(s1,s2) S^H) in nats."""
    if pre.ns1 != ens.ns1 or pre.ns2 != ens.ns2:
        raise DomainError("precoder alphabets do not match the ensemble")
    cov = reconstruct_covariance(pre)[ens.s1, ens.s2]
    s = ens.states
    c = np.eye(ens.m, dtype=np.complex128) + s @ cov @ s.conj().transpose(0, 2, 1)
    sign, ld = np.linalg.slogdet(c)
    if not np.all(sign.real > 0.5):
        raise NonFiniteError("achieved rate hit a non-PD covariance")
    return float(ens.weights @ ld)


# ---------------------------------------------------------------------------
# rank reduction


@dataclass(frozen=True)
class RankReduction:
    """Result of the off-diagonal perturbation that kills one eigenvalue."""

    matrix: np.ndarray
    t_star: float
    rank_before: int
    rank_after: int
    already_deficient: bool


def _min_eig(q: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(hermitian_part(q)).min())


def rank_reduce(q: np.ndarray, ns1: int, tol: float = 1e-9) -> RankReduction:
    """Push Q to the PSD boundary without touching rates or powers.

    Perturbs the (0,1) entry inside the TX1 block, which no conditional
    covariance reads (those only see within-alphabet diagonals and
    cross-block entries) and no power constraint reads (diagonals are
    untouched). The perturbed direction always hits the boundary: the
    leading 2x2 minor goes negative for large t, so bisection on
    lambda_min finds t* with min eigenvalue in [0, tol].
    """
    q = hermitian_part(np.asarray(q, dtype=np.complex128))
    d = q.shape[0]
    if d < 3 or ns1 < 2 or d - ns1 < 1:
        raise DomainError("need d >= 3 with at least two TX1 symbols and one TX2 symbol")
    vals = eig_hermitian(q).values
    before = numerical_rank(vals)
    if before < d:
        return RankReduction(
            matrix=q, t_star=0.0, rank_before=before, rank_after=before, already_deficient=True
        )
    pert = np.zeros((d, d), dtype=np.complex128)
    pert[0, 1] = pert[1, 0] = 1.0
    hi = 1.0
    while _min_eig(q + hi * pert) >= 0.0:
        hi *= 2.0
        if hi > 2.0**60:
            raise DomainError("perturbation never reached the PSD boundary")
    lo = 0.0
    for _ in range(200):
        if _min_eig(q + lo * pert) <= tol:
            break
        mid = 0.5 * (lo + hi)
        if _min_eig(q + mid * pert) >= 0.0:
            lo = mid
        else:
            hi = mid
    out = q + lo * pert
    return RankReduction(
        matrix=out,
        t_star=lo,
        rank_before=before,
        rank_after=numerical_rank(out),
        already_deficient=False,
    )


# ---------------------------------------------------------------------------
# rank-constrained local search


def _search_rate_grad(g1, g2, ens, need_grad=True):
    a = np.empty((ens.size, g1.shape[1], 2), dtype=np.complex128)
    a[:, :, 0] = g1[ens.s1]
    a[:, :, 1] = g2[ens.s2]
    sig = a.conj().transpose(0, 2, 1) @ a
    s = ens.states
    c = np.eye(ens.m, dtype=np.complex128) + s @ sig @ s.conj().transpose(0, 2, 1)
    sign, ld = np.linalg.slogdet(c)
    if not np.all(np.isfinite(ld)) or np.any(sign.real < 0.5):
        return -np.inf, None, None
    rate = float(ens.weights @ ld)
    if not need_grad:
        return rate, None, None
    t = s.conj().transpose(0, 2, 1) @ np.linalg.inv(c) @ s
    g = (a @ t) * ens.weights[:, None, None]
    grad1 = np.zeros_like(g1)
    grad2 = np.zeros_like(g2)
    np.add.at(grad1, ens.s1, g[:, :, 0])
    np.add.at(grad2, ens.s2, g[:, :, 1])
    return rate, grad1, grad2


def _scale_to_power(g, marginal, p, force=False):
    pw = float(marginal @ np.sum(np.abs(g) ** 2, axis=1))
    if pw > p or (force and pw > 0):
        return g * np.sqrt(p / pw)
    return g


def rank_constrained_search(
    ens: FadingEnsemble,
    p1: float,
    p2: float,
    d_prime: int,
    restarts: int = 20,
    seed: int = 0,
    max_iter: int = 2000,
    tol: float = 1e-9,
) -> tuple[float, PrecoderSet]:
    """Best rate achievable with precoding vectors confined to C^{d'}.

    Nonconvex once d' < d, so this is projected gradient ascent from
    `restarts` independent Gaussian starts (child streams of `seed`);
    the reduction keeps the max rate, first stream winning ties. The
    returned value is a valid lower bound for the rank-constrained
    optimum: every iterate is feasible.
    """
    if d_prime < 1:
        raise DomainError("d_prime must be >= 1")
    p1m = ens.csit_marginal(1)
    p2m = ens.csit_marginal(2)
    best_rate = -np.inf
    best: tuple[np.ndarray, np.ndarray] | None = None
    for stream in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.Generator(np.random.PCG64(stream))
        g1 = _scale_to_power(complex_gaussian(rng, (ens.ns1, d_prime)), p1m, p1, force=True)
        g2 = _scale_to_power(complex_gaussian(rng, (ens.ns2, d_prime)), p2m, p2, force=True)
        rate, g1, g2 = _ascend(g1, g2, ens, p1m, p2m, p1, p2, max_iter, tol)
        if rate > best_rate:
            best_rate = rate
            best = (g1, g2)
    assert best is not None
    pre = PrecoderSet(
        g1=best[0],
        g2=best[1],
        gamma1=np.zeros(ens.ns1),
        gamma2=np.zeros(ens.ns2),
        power=(p1, p2),
    )
    return best_rate, pre


def _ascend(g1, g2, ens, p1m, p2m, p1, p2, max_iter, tol):
    # Ascend in the marginal-weighted inner product (rows of the direction
    # scaled by 1/m_s): radial rescaling is then the exact projection onto
    # the expected-power ball, so fixed points satisfy the true stationarity
    # condition grad ∝ m_s g_s instead of grad ∝ g_s. Zero-marginal rows
    # never occur in the ensemble and carry zero gradient, so the guard
    # value is arbitrary.
    m1 = np.where(p1m > 0.0, p1m, 1.0)[:, None]
    m2 = np.where(p2m > 0.0, p2m, 1.0)[:, None]
    f, gr1, gr2 = _search_rate_grad(g1, g2, ens)
    flat = 0
    for _ in range(max_iter):
        step = 1.0
        while True:
            t1 = _scale_to_power(g1 + step * gr1 / m1, p1m, p1)
            t2 = _scale_to_power(g2 + step * gr2 / m2, p2m, p2)
            ft, _, _ = _search_rate_grad(t1, t2, ens, need_grad=False)
            gain = np.sum((gr1.conj() * (t1 - g1)).real) + np.sum((gr2.conj() * (t2 - g2)).real)
            if np.isfinite(ft) and ft >= f + 1e-4 * gain:
                break
            step *= 0.5
            if step < 1e-13:
                t1, t2, ft = g1, g2, f
                break
        rel = abs(ft - f) / (1.0 + abs(ft))
        g1, g2, f = t1, t2, ft
        _, gr1, gr2 = _search_rate_grad(g1, g2, ens)
        flat = flat + 1 if rel < tol else 0
        if flat >= 10:
            break
    return f, g1, g2


# ---------------------------------------------------------------------------
# the strict-gap example channel


def build_counterexample(nu_star: float = 2.0) -> tuple[FadingEnsemble, np.ndarray]:
    """Four-state channel whose optimal covariances need d' = 3, not 2.

    Each of the four equiprobable states is seen perfectly up to the
    CSIT split (TX1 resolves the first bit, TX2 the second). The target
    covariances Sigma*(s1,s2) are unit-diagonal with cross-correlations
    (0, 0.6, 0, 0.8); state matrices are built by inverting water-filling
    with water level nu_star, S_i = (V diag(1/(nu_star - xi)) V^H)^(1/2),
    so that Sigma* is the unique optimum at unit powers. Requires
    nu_star > 1.8 (the largest target eigenvalue).
    """
    if nu_star <= 1.8:
        raise DomainError(f"nu_star must exceed 1.8, got {nu_star}")
    rho_table = {(0, 0): 0.0, (0, 1): 0.6, (1, 0): 0.0, (1, 1): 0.8}
    sigma_star = np.zeros((2, 2, 2, 2), dtype=np.complex128)
    entries = []
    for s1 in (0, 1):
        for s2 in (0, 1):
            rho = rho_table[(s1, s2)]
            sig = np.array([[1.0, rho], [rho, 1.0]], dtype=np.complex128)
            sigma_star[s1, s2] = sig
            e = eig_hermitian(sig)
            lam = 1.0 / (nu_star - e.values)
            s_mat = (e.vectors * np.sqrt(lam)) @ e.vectors.conj().T
            entries.append((s_mat, s1, s2, 0.25))
    return explicit_ensemble(entries, ns1=2, ns2=2), sigma_star


# ---------------------------------------------------------------------------
# serialization


def _complex_rows(arr: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in arr]


def precoders_to_json(pre: PrecoderSet) -> dict:
    doc = {
        "d_prime": pre.d_prime,
        "g1": _complex_rows(pre.g1),
        "g2": _complex_rows(pre.g2),
        "gamma1": pre.gamma1.tolist(),
        "gamma2": pre.gamma2.tolist(),
    }
    if pre.power is not None:
        doc["P"] = [float(pre.power[0]), float(pre.power[1])]
    return doc


def precoders_from_json(obj: dict) -> PrecoderSet:
    def rows(key):
        return np.array([[complex(re, im) for re, im in row] for row in obj[key]])

    return PrecoderSet(
        g1=rows("g1"),
        g2=rows("g2"),
        gamma1=np.asarray(obj["gamma1"], dtype=np.float64),
        gamma2=np.asarray(obj["gamma2"], dtype=np.float64),
        power=tuple(obj["P"]) if "P" in obj else None,
    )


def save_precoders(pre: PrecoderSet, path) -> None:
    with open(path, "w") as fh:
        json.dump(precoders_to_json(pre), fh)


def load_precoders(path) -> PrecoderSet:
    with open(path) as fh:
        return precoders_from_json(json.load(fh))

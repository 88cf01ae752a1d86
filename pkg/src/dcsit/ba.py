"""Blahut-Arimoto capacity computation for discrete memoryless channels.

The iteration keeps the classical bracket: with D_u = KL(p(.|u) || q),
I(p) = sum_u p_u D_u is a lower bound on capacity and max_u D_u an upper
bound, so max_u D_u - I(p) <= tol certifies the answer to within tol.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import DiscreteMAC
from .errors import DomainError
from .strategies import deduplicate, enumerate_strategies, equivalent_dmc

LN2 = float(np.log(2.0))


@dataclass(frozen=True)
class BAResult:
    """Capacity bracket endpoint and the maximizing input distribution."""

    capacity_nats: float
    input_dist: np.ndarray
    iterations: int
    gap: float
    converged: bool
    trajectory: np.ndarray | None = field(default=None, repr=False)

    @property
    def capacity_bits(self) -> float:
        return self.capacity_nats / LN2


def ba_capacity(
    matrix: np.ndarray,
    tol: float = 1e-9,
    max_iter: int = 100_000,
    track: bool = False,
) -> BAResult:
    """Capacity (nats) of a row-stochastic channel matrix.

    Starts from the uniform input. The reported value is the final mutual
    information I(p), which sits within `gap` of the true capacity. A run
    that exhausts max_iter is returned with converged=False rather than
    raising.
    """
    w = np.asarray(matrix, dtype=np.float64)
    if w.ndim != 2:
        raise DomainError("channel matrix must be 2-d")
    if w.min() < -1e-12 or np.max(np.abs(w.sum(axis=1) - 1.0)) > 1e-9:
        raise DomainError("rows must be probability vectors")
    n_in = w.shape[0]
    # outputs no input can reach contribute nothing; drop to keep logs clean
    live = w.sum(axis=0) > 0.0
    w = np.clip(w[:, live], 0.0, None)
    wlogw = np.where(w > 0.0, w * np.log(np.where(w > 0.0, w, 1.0)), 0.0).sum(axis=1)

    p = np.full(n_in, 1.0 / n_in)
    history: list[float] = []
    info = 0.0
    gap = np.inf
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        q = p @ w
        # D_u = sum_y w_uy log(w_uy / q_y); q_y > 0 wherever any w_uy > 0
        d = wlogw - w @ np.log(np.where(q > 0.0, q, 1.0))
        info = float(p @ d)
        upper = float(d.max())
        gap = upper - info
        if track:
            history.append(info)
        if gap <= tol:
            converged = True
            break
        p = p * np.exp(d - upper)
        p /= p.sum()
    return BAResult(
        capacity_nats=info,
        input_dist=p,
        iterations=it,
        gap=gap,
        converged=converged,
        trajectory=np.asarray(history) if track else None,
    )


def discrete_common_capacity(
    mac: DiscreteMAC,
    tol: float = 1e-9,
    max_iter: int = 100_000,
    dedup: bool = True,
) -> BAResult:
    """Common-message capacity of a finite MAC with distributed causal CSIT.

    Enumerates all strategy pairs, forms the equivalent DMC over the
    augmented output (y, sR), optionally merges duplicate rows, and runs
    Blahut-Arimoto. input_dist lives on the (deduplicated) strategy
    alphabet.
    """
    dmc = equivalent_dmc(mac, enumerate_strategies(mac))
    if dedup:
        dmc, _ = deduplicate(dmc)
    return ba_capacity(dmc.matrix, tol=tol, max_iter=max_iter)

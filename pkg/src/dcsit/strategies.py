"""Causal team strategies for finite MACs with distributed CSIT.

A strategy pair maps each transmitter's CSI symbol to an input letter,
t_u = (t_{1,u}: S1 -> X1, t_{2,u}: S2 -> X2). Feeding the pair index u
through the state average turns the state-dependent MAC into an ordinary
DMC over the augmented output (y, sR); its capacity is the common-message
capacity of the original channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import DiscreteMAC, DiscreteMAC as _Mac, discrete_to_json
from .errors import DomainError, TooLargeError

ENUM_CAP = 2**24

_CHUNK = 4096


@dataclass(frozen=True)
class StrategyAlphabet:
    """All |X1|^|S1| * |X2|^|S2| strategy pairs in a fixed mixed-radix order.

    tables1[i] is the i-th map S1 -> X1 (digit for s1=0 varies fastest);
    likewise tables2. Global index u = i1 + len(tables1) * i2, so the
    TX1 table cycles fastest as u increases.
    """

    tables1: np.ndarray
    tables2: np.ndarray

    @property
    def size(self) -> int:
        return self.tables1.shape[0] * self.tables2.shape[0]

    def pair(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        n1 = self.tables1.shape[0]
        return self.tables1[u % n1], self.tables2[u // n1]

    def full_tables(self) -> tuple[np.ndarray, np.ndarray]:
        """Materialized (|U|, |S1|) and (|U|, |S2|) tables; small |U| only."""
        n1 = self.tables1.shape[0]
        u = np.arange(self.size)
        return self.tables1[u % n1], self.tables2[u // n1]


def _all_maps(n_in: int, n_out: int) -> np.ndarray:
    """All n_out**n_in maps, row i = digits of i base n_out, digit 0 fastest."""
    count = n_out**n_in
    idx = np.arange(count)
    cols = [(idx // n_out**j) % n_out for j in range(n_in)]
    return np.stack(cols, axis=1).astype(np.int64)


def enumerate_strategies(mac: DiscreteMAC, cap: int = ENUM_CAP) -> StrategyAlphabet:
    """Enumerate every strategy pair; refuses above `cap` pairs."""
    total = mac.nx1**mac.ns1 * mac.nx2**mac.ns2
    if total > cap:
        raise TooLargeError(f"{total} strategy pairs exceed cap {cap}")
    return StrategyAlphabet(
        tables1=_all_maps(mac.ns1, mac.nx1),
        tables2=_all_maps(mac.ns2, mac.nx2),
    )


@dataclass(frozen=True)
class StrategyDMC:
    """Equivalent memoryless channel from strategy index to (y, sR).

    matrix[u, y * nsr + sr] = p(y, sR | u). Rows are probability vectors.
    """

    matrix: np.ndarray
    ny: int
    nsr: int

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[1] != self.ny * self.nsr:
            raise DomainError(f"matrix shape {m.shape} inconsistent with ny*nsr")
        if m.min() < -1e-12 or np.max(np.abs(m.sum(axis=1) - 1.0)) > 1e-9:
            raise DomainError("rows must be probability vectors")
        object.__setattr__(self, "matrix", m)

    @property
    def n_inputs(self) -> int:
        return self.matrix.shape[0]


def equivalent_dmc(mac: DiscreteMAC, strategies: StrategyAlphabet) -> StrategyDMC:
    """Average out the state: p(y, sR | u) = sum_{s,s1,s2} p(s,s1,s2,sR) p(y | t1(s1), t2(s2), s)."""
    total = strategies.size
    n1 = strategies.tables1.shape[0]
    out = np.empty((total, mac.ny * mac.nsr))
    for lo in range(0, total, _CHUNK):
        hi = min(lo + _CHUNK, total)
        u = np.arange(lo, hi)
        t1 = strategies.tables1[u % n1]  # (chunk, ns1)
        t2 = strategies.tables2[u // n1]  # (chunk, ns2)
        # gather p(y | t1(s1), t2(s2), s) -> (chunk, ns1, ns2, ns, ny)
        cond = mac.channel[t1[:, :, None], t2[:, None, :]]
        block = np.einsum("uabsy,sabr->uyr", cond, mac.csi)
        out[lo:hi] = block.reshape(hi - lo, -1)
    return StrategyDMC(matrix=out, ny=mac.ny, nsr=mac.nsr)


def deduplicate(dmc: StrategyDMC, decimals: int = 12) -> tuple[StrategyDMC, np.ndarray]:
    """Drop strategies with identical output rows (rounded to `decimals`).

    Returns the reduced channel and the kept row indices, in first
    occurrence order. Merging duplicate inputs never changes capacity.
    """
    _, first = np.unique(dmc.matrix.round(decimals), axis=0, return_index=True)
    keep = np.sort(first)
    return StrategyDMC(matrix=dmc.matrix[keep], ny=dmc.ny, nsr=dmc.nsr), keep


def strategy_dmc_to_json(dmc: StrategyDMC) -> dict:
    """Express the equivalent DMC in the discrete channel file format.

    Single dummy state and a single-letter second input: the strategy
    index is X1 and the augmented output is flattened into Y.
    """
    mac = _Mac(
        channel=dmc.matrix[:, np.newaxis, np.newaxis, :],
        csi=np.ones((1, 1, 1, 1)),
    )
    return discrete_to_json(mac)

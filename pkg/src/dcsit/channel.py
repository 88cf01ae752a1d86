"""Channel models: finite state-dependent MACs and fading ensembles.

Discrete side: a two-transmitter memoryless channel p(y | x1, x2, s)
driven by an i.i.d. state with joint CSI law p(s, s1, s2, sR), where
s1/s2 are the causal transmitter observations and sR is receiver side
information (appended to the channel output downstream).

Gaussian side: finite weighted ensembles of M x 2 channel matrices with
per-sample CSIT indices, either sampled (i.i.d. CN(0,1) entries quantized
through random codebooks) or given explicitly. All randomness flows
through numpy PCG64 streams; complex normals use an explicit Box-Muller
transform so sampled ensembles are reproducible across numpy versions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DomainError, NonFiniteError, WeightError

RNG_NAME = "pcg64+box-muller"

_PROB_ATOL = 1e-12


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def complex_gaussian(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """I.i.d. CN(0,1) array via Box-Muller over PCG64 uniforms.

    Unit variance per complex entry: modulus sqrt(-ln(1-u1)), phase
    2*pi*u2.
    """
    u1 = rng.random(shape)
    u2 = rng.random(shape)
    r = np.sqrt(-np.log1p(-u1))
    return r * np.exp(2j * np.pi * u2)


# ---------------------------------------------------------------------------
# Discrete channels


@dataclass(frozen=True)
class DiscreteMAC:
    """Finite state-dependent MAC with distributed CSIT.

    channel has shape (|X1|, |X2|, |S|, |Y|): conditional pmf over y
    given inputs and state. csi has shape (|S|, |S1|, |S2|, |SR|): the
    joint pmf of the state and all side-information symbols.
    """

    channel: np.ndarray
    csi: np.ndarray

    def __post_init__(self):
        ch = np.asarray(self.channel, dtype=np.float64)
        cs = np.asarray(self.csi, dtype=np.float64)
        if ch.ndim != 4 or cs.ndim != 4:
            raise DomainError("channel must be 4-d (x1,x2,s,y); csi 4-d (s,s1,s2,sR)")
        if ch.shape[2] != cs.shape[0]:
            raise DomainError("state cardinality mismatch between channel and csi")
        if not (np.all(np.isfinite(ch)) and np.all(np.isfinite(cs))):
            raise NonFiniteError("channel/csi contain NaN or Inf")
        if ch.min() < -_PROB_ATOL or cs.min() < -_PROB_ATOL:
            raise DomainError("negative probabilities")
        rows = ch.sum(axis=3)
        if np.max(np.abs(rows - 1.0)) > _PROB_ATOL:
            raise DomainError("conditional channel slices must sum to 1")
        if abs(cs.sum() - 1.0) > _PROB_ATOL:
            raise WeightError("csi joint pmf must sum to 1")
        object.__setattr__(self, "channel", ch)
        object.__setattr__(self, "csi", cs)

    @property
    def nx1(self) -> int:
        return self.channel.shape[0]

    @property
    def nx2(self) -> int:
        return self.channel.shape[1]

    @property
    def ns(self) -> int:
        return self.channel.shape[2]

    @property
    def ny(self) -> int:
        return self.channel.shape[3]

    @property
    def ns1(self) -> int:
        return self.csi.shape[1]

    @property
    def ns2(self) -> int:
        return self.csi.shape[2]

    @property
    def nsr(self) -> int:
        return self.csi.shape[3]


def _bsc(eps: float) -> np.ndarray:
    # rows: true state s, cols: observed symbol
    return np.array([[1.0 - eps, eps], [eps, 1.0 - eps]])


def binary_additive_mac(q: float, eps1: float, eps2: float) -> DiscreteMAC:
    """Noiseless adder Y = X1 + X2 + S with binary inputs and state.

    S ~ Bern(q); each transmitter sees the state through an independent
    BSC (crossover eps_k); the receiver has no side information.
    """
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"q={q} outside [0,1]")
    for name, e in (("eps1", eps1), ("eps2", eps2)):
        if not 0.0 <= e <= 0.5:
            raise DomainError(f"{name}={e} outside [0, 0.5]")
    channel = np.zeros((2, 2, 2, 4))
    for x1 in range(2):
        for x2 in range(2):
            for s in range(2):
                channel[x1, x2, s, x1 + x2 + s] = 1.0
    ps = np.array([1.0 - q, q])
    b1 = _bsc(eps1)
    b2 = _bsc(eps2)
    csi = np.einsum("s,sa,sb->sab", ps, b1, b2)[..., np.newaxis]
    return DiscreteMAC(channel=channel, csi=csi)


# ---------------------------------------------------------------------------
# Quantized feedback


@dataclass(frozen=True)
class QuantizerCodebook:
    """2**beta random codewords, each an M x 2 complex matrix."""

    codewords: np.ndarray
    beta: int

    def __post_init__(self):
        cw = np.asarray(self.codewords, dtype=np.complex128)
        if cw.ndim != 3 or cw.shape[0] != 2**self.beta or cw.shape[2] != 2:
            raise DomainError(f"codewords shape {cw.shape} inconsistent with beta={self.beta}")
        object.__setattr__(self, "codewords", cw)

    @property
    def size(self) -> int:
        return self.codewords.shape[0]

    @property
    def m(self) -> int:
        return self.codewords.shape[1]


def generate_quantizer(beta: int, m: int, rng_seed: int) -> QuantizerCodebook:
    """Draw a codebook of 2**beta i.i.d. CN(0,1)-entry M x 2 matrices."""
    if beta < 1:
        raise DomainError(f"beta={beta} must be >= 1")
    if m not in (1, 2):
        raise DomainError(f"m={m} must be 1 or 2")
    rng = _rng(rng_seed)
    return QuantizerCodebook(codewords=complex_gaussian(rng, (2**beta, m, 2)), beta=beta)


def quantize(s: np.ndarray, codebook: QuantizerCodebook) -> int:
    """Nearest codeword in Frobenius distance; ties go to the lowest index."""
    return int(_quantize_batch(np.asarray(s, dtype=np.complex128)[np.newaxis], codebook)[0])


def _quantize_batch(states: np.ndarray, codebook: QuantizerCodebook) -> np.ndarray:
    diff = states[:, np.newaxis, :, :] - codebook.codewords[np.newaxis]
    d2 = np.sum(np.abs(diff) ** 2, axis=(2, 3))
    return np.argmin(d2, axis=1)


# ---------------------------------------------------------------------------
# Fading ensembles


@dataclass(frozen=True)
class FadingEnsemble:
    """Weighted finite ensemble of M x 2 channel matrices with CSIT labels.

    ns1/ns2 are the full CSIT alphabet sizes (codebook sizes for sampled
    ensembles); indices that never occur still count toward the
    optimization dimension d = ns1 + ns2.
    """

    states: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    weights: np.ndarray
    ns1: int
    ns2: int

    def __post_init__(self):
        st = np.asarray(self.states, dtype=np.complex128)
        s1 = np.asarray(self.s1, dtype=np.int64)
        s2 = np.asarray(self.s2, dtype=np.int64)
        w = np.asarray(self.weights, dtype=np.float64)
        if st.ndim != 3 or st.shape[2] != 2:
            raise DomainError(f"states must be (L, M, 2), got {st.shape}")
        n = st.shape[0]
        if not (s1.shape == s2.shape == w.shape == (n,)):
            raise DomainError("s1, s2, weights must all have length L")
        if not (np.all(np.isfinite(st.real)) and np.all(np.isfinite(st.imag))):
            raise NonFiniteError("states contain NaN or Inf")
        if w.min() < 0 or abs(w.sum() - 1.0) > 1e-9:
            raise WeightError("weights must be nonnegative and sum to 1 within 1e-9")
        if s1.min() < 0 or s1.max() >= self.ns1 or s2.min() < 0 or s2.max() >= self.ns2:
            raise DomainError("CSIT index out of range")
        object.__setattr__(self, "states", st)
        object.__setattr__(self, "s1", s1)
        object.__setattr__(self, "s2", s2)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.states.shape[0]

    @property
    def m(self) -> int:
        return self.states.shape[1]

    @property
    def dim(self) -> int:
        """Optimization dimension d = |S1| + |S2|."""
        return self.ns1 + self.ns2

    def csit_marginal(self, tx: int) -> np.ndarray:
        """Empirical pmf of the CSIT index at transmitter 1 or 2."""
        if tx == 1:
            return np.bincount(self.s1, weights=self.weights, minlength=self.ns1)
        if tx == 2:
            return np.bincount(self.s2, weights=self.weights, minlength=self.ns2)
        raise DomainError(f"tx must be 1 or 2, got {tx}")


def sample_ensemble(
    n_samples: int,
    m: int,
    cb1: QuantizerCodebook,
    cb2: QuantizerCodebook,
    rng_seed: int,
) -> FadingEnsemble:
    """Monte Carlo ensemble: i.i.d. CN(0,1) fading, CSIT = quantized state.

    Both transmitters quantize the same realization through their own
    codebooks; weights are uniform 1/L.
    """
    if n_samples < 1:
        raise DomainError("need at least one sample")
    if cb1.m != m or cb2.m != m:
        raise DomainError("codebook antenna count must match m")
    rng = _rng(rng_seed)
    states = complex_gaussian(rng, (n_samples, m, 2))
    return FadingEnsemble(
        states=states,
        s1=_quantize_batch(states, cb1),
        s2=_quantize_batch(states, cb2),
        weights=np.full(n_samples, 1.0 / n_samples),
        ns1=cb1.size,
        ns2=cb2.size,
    )


def explicit_ensemble(
    entries: Iterable[tuple[np.ndarray, int, int, float]],
    ns1: int | None = None,
    ns2: int | None = None,
) -> FadingEnsemble:
    """Build an ensemble from (matrix, s1, s2, weight) tuples."""
    items = list(entries)
    if not items:
        raise DomainError("empty ensemble")
    states = np.stack([np.asarray(e[0], dtype=np.complex128) for e in items])
    s1 = np.array([e[1] for e in items], dtype=np.int64)
    s2 = np.array([e[2] for e in items], dtype=np.int64)
    w = np.array([e[3] for e in items], dtype=np.float64)
    if abs(w.sum() - 1.0) > 1e-9:
        raise WeightError(f"weights sum to {w.sum()!r}, expected 1")
    return FadingEnsemble(
        states=states,
        s1=s1,
        s2=s2,
        weights=w,
        ns1=int(s1.max()) + 1 if ns1 is None else ns1,
        ns2=int(s2.max()) + 1 if ns2 is None else ns2,
    )


# ---------------------------------------------------------------------------
# JSON file format


def discrete_to_json(mac: DiscreteMAC) -> dict:
    return {
        "type": "discrete",
        "card": {
            "X1": mac.nx1,
            "X2": mac.nx2,
            "S": mac.ns,
            "S1": mac.ns1,
            "S2": mac.ns2,
            "SR": mac.nsr,
            "Y": mac.ny,
        },
        "channel": mac.channel.ravel().tolist(),
        "csi": mac.csi.ravel().tolist(),
    }


def ensemble_to_json(ens: FadingEnsemble) -> dict:
    samples = []
    for idx in range(ens.size):
        mat = ens.states[idx]
        samples.append(
            {
                "S_re": mat.real.tolist(),
                "S_im": mat.imag.tolist(),
                "s1": int(ens.s1[idx]),
                "s2": int(ens.s2[idx]),
                "w": float(ens.weights[idx]),
            }
        )
    return {"type": "ensemble", "M": ens.m, "S1": ens.ns1, "S2": ens.ns2, "samples": samples}


def channel_from_json(obj: dict) -> DiscreteMAC | FadingEnsemble:
    kind = obj.get("type")
    if kind == "discrete":
        card = obj["card"]
        shape_ch = (card["X1"], card["X2"], card["S"], card["Y"])
        shape_cs = (card["S"], card["S1"], card["S2"], card["SR"])
        channel = np.asarray(obj["channel"], dtype=np.float64).reshape(shape_ch)
        csi = np.asarray(obj["csi"], dtype=np.float64).reshape(shape_cs)
        return DiscreteMAC(channel=channel, csi=csi)
    if kind == "ensemble":
        samples = obj["samples"]
        states = np.array(
            [np.asarray(s["S_re"]) + 1j * np.asarray(s["S_im"]) for s in samples],
            dtype=np.complex128,
        )
        return FadingEnsemble(
            states=states,
            s1=np.array([s["s1"] for s in samples], dtype=np.int64),
            s2=np.array([s["s2"] for s in samples], dtype=np.int64),
            weights=np.array([s["w"] for s in samples], dtype=np.float64),
            ns1=obj["S1"],
            ns2=obj["S2"],
        )
    raise DomainError(f"unknown channel type {kind!r}")


def save_channel(obj: DiscreteMAC | FadingEnsemble, path) -> None:
    doc = discrete_to_json(obj) if isinstance(obj, DiscreteMAC) else ensemble_to_json(obj)
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_channel(path) -> DiscreteMAC | FadingEnsemble:
    with open(path) as fh:
        return channel_from_json(json.load(fh))

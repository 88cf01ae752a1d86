"""Dense linear algebra for small complex Hermitian matrices.

Everything operates on plain numpy arrays in complex128. Matrices are
symmetrized before factorizations so that accumulated drift in the
off-diagonal conjugate pairs never reaches the decompositions. Natural
logs throughout; bits only appear at reporting boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, NonFiniteError, NotPDError, NotPSDError


@dataclass(frozen=True)
class Tolerances:
    """Central numerical tolerances for the matrix kernel.

    hermitian_atol  max |A - A^H| entry treated as symmetric drift
    eig_residual    reconstruction residual budget for eigendecompositions
    sqrt_neg_rel    relative eigenvalue floor below which sqrt_psd refuses
    chol_pivot      Cholesky pivot (squared diagonal) declaring non-PD
    rank_rel        numerical rank cut: eigenvalues > rank_rel * lambda_max
    """

    hermitian_atol: float = 1e-12
    eig_residual: float = 1e-9
    sqrt_neg_rel: float = 1e-6
    chol_pivot: float = 1e-14
    rank_rel: float = 1e-8


TOL = Tolerances()


def as_complex_matrix(a: np.ndarray) -> np.ndarray:
    """Coerce to a square complex128 ndarray without copying when possible."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {m.shape}")
    return m


def require_finite(a: np.ndarray, what: str = "matrix") -> None:
    if not np.all(np.isfinite(a.real)) or not np.all(np.isfinite(a.imag)):
        raise NonFiniteError(f"{what} contains NaN or Inf")


def hermitian_part(a: np.ndarray) -> np.ndarray:
    """(A + A^H)/2, the Frobenius-nearest Hermitian matrix."""
    return 0.5 * (a + a.conj().T)


def is_hermitian(a: np.ndarray, atol: float = TOL.hermitian_atol) -> bool:
    a = np.asarray(a)
    return bool(np.all(np.abs(a - a.conj().T) <= atol))


def frob(a: np.ndarray) -> float:
    return float(np.linalg.norm(a))


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues (real, descending) and matching orthonormal columns."""

    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.conj().T


def eig_hermitian(a: np.ndarray) -> EigenDecomposition:
    """Full eigendecomposition of the Hermitian part of `a`.

    Returns eigenvalues sorted descending with columns of `vectors`
    aligned, so reconstruct() == hermitian_part(a) to working precision.
    """
    m = as_complex_matrix(a)
    require_finite(m)
    w, v = np.linalg.eigh(hermitian_part(m))
    return EigenDecomposition(values=w[::-1].copy(), vectors=v[:, ::-1].copy())


def numerical_rank(a_or_values: np.ndarray, rel: float = TOL.rank_rel) -> int:
    """Count eigenvalues above rel * lambda_max (0 for the zero matrix)."""
    vals = np.asarray(a_or_values)
    if vals.ndim == 2:
        vals = eig_hermitian(vals).values
    top = float(np.max(np.abs(vals), initial=0.0))
    if top == 0.0:
        return 0
    return int(np.sum(vals > rel * top))


def psd_project(a: np.ndarray) -> np.ndarray:
    """Frobenius-nearest PSD matrix: eigenvalues clipped at zero."""
    e = eig_hermitian(a)
    clipped = np.maximum(e.values, 0.0)
    return hermitian_part((e.vectors * clipped) @ e.vectors.conj().T)


def sqrt_psd(a: np.ndarray, tol: Tolerances = TOL) -> np.ndarray:
    """Hermitian square root of a PSD matrix.

    Eigenvalues down to -sqrt_neg_rel * ||A||_F are treated as rounding
    and clipped; anything lower raises NotPSDError.
    """
    e = eig_hermitian(a)
    scale = max(frob(a), 1.0)
    if e.values.size and e.values.min() < -tol.sqrt_neg_rel * scale:
        raise NotPSDError(
            f"min eigenvalue {e.values.min():.3e} below -{tol.sqrt_neg_rel:.0e} * scale"
        )
    root = np.sqrt(np.maximum(e.values, 0.0))
    return hermitian_part((e.vectors * root) @ e.vectors.conj().T)


def logdet_psd(a: np.ndarray, tol: Tolerances = TOL) -> float:
    """log det A via Cholesky, for Hermitian positive definite A."""
    m = hermitian_part(as_complex_matrix(a))
    require_finite(m)
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPDError("Cholesky failed: matrix not positive definite") from exc
    diag = np.real(np.diag(chol))
    if np.min(diag**2) <= tol.chol_pivot:
        raise NotPDError(f"Cholesky pivot {np.min(diag**2):.3e} <= {tol.chol_pivot:.0e}")
    return float(2.0 * np.sum(np.log(diag)))


def hermitian_basis(dim: int) -> list[np.ndarray]:
    """Orthonormal (Frobenius) basis of the real vector space of Hermitian dim x dim."""
    basis: list[np.ndarray] = []
    for i in range(dim):
        e = np.zeros((dim, dim), dtype=np.complex128)
        e[i, i] = 1.0
        basis.append(e)
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    for i in range(dim):
        for j in range(i + 1, dim):
            e = np.zeros((dim, dim), dtype=np.complex128)
            e[i, j] = inv_sqrt2
            e[j, i] = inv_sqrt2
            basis.append(e)
            e = np.zeros((dim, dim), dtype=np.complex128)
            e[i, j] = 1j * inv_sqrt2
            e[j, i] = -1j * inv_sqrt2
            basis.append(e)
    return basis


def fd_gradient_check(
    f: Callable[[np.ndarray], float],
    grad: np.ndarray,
    at: np.ndarray,
    eps: float = 1e-5,
) -> float:
    """Max relative mismatch between central differences of f and <grad, D>.

    Directions run over the orthonormal Hermitian basis; the inner product
    is the real trace pairing Re tr(G^H D). Relative to 1 + |f(at)|.
    """
    if not (1e-7 <= eps <= 1e-4):
        raise DomainError(f"eps {eps} outside [1e-7, 1e-4]")
    at = as_complex_matrix(at)
    g = as_complex_matrix(grad)
    f0 = float(f(at))
    if not np.isfinite(f0):
        raise NonFiniteError("f(at) is not finite")
    scale = 1.0 + abs(f0)
    worst = 0.0
    for d in hermitian_basis(at.shape[0]):
        fp = float(f(at + eps * d))
        fm = float(f(at - eps * d))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError("f evaluated non-finite during differencing")
        fd = (fp - fm) / (2.0 * eps)
        ip = float(np.real(np.trace(g.conj().T @ d)))
        worst = max(worst, abs(fd - ip) / scale)
    return worst

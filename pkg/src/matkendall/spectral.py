"""Symmetric eigendecomposition with a fixed ordering/sign convention, and
the eigenvalue-ratio rank selector."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateError, ParameterError, ValidationError

SYMMETRY_TOL = 1e-8


@dataclass(frozen=True)
class EigenDecomp:
    """Eigenvalues in non-increasing order with matching sign-normalized columns."""

    values: np.ndarray
    vectors: np.ndarray

    def leading(self, k: int) -> np.ndarray:
        return self.vectors[:, :k]

    def gap(self, k: int) -> float:
        """Spectral gap ``values[k-1] - values[k]`` (infinite when k equals the dimension)."""
        if k >= self.values.size:
            return float("inf")
        return float(self.values[k - 1] - self.values[k])


def normalize_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive.

    Ties go to the first index, which is what ``argmax`` returns.
    """
    vectors = np.array(vectors, dtype=np.float64, copy=True)
    if vectors.size == 0:
        return vectors
    pivot = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivot, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def sym_eigen(mat: np.ndarray) -> EigenDecomp:
    """Full eigendecomposition of a symmetric matrix.

    The input must be symmetric to ``1e-8`` (absolute, relative to its scale)
    and finite. Only the lower triangle is read by LAPACK, so the result is a
    deterministic function of the input bits.
    """
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise ValidationError("matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(mat)))) if mat.size else 1.0
    asym = float(np.max(np.abs(mat - mat.T))) if mat.size else 0.0
    if asym > SYMMETRY_TOL * scale:
        raise ValidationError(f"matrix is not symmetric (max asymmetry {asym:.3g})")
    values, vectors = np.linalg.eigh(mat)
    values = values[::-1].copy()
    vectors = normalize_signs(vectors[:, ::-1])
    values.setflags(write=False)
    vectors.setflags(write=False)
    return EigenDecomp(values=values, vectors=vectors)


@dataclass(frozen=True)
class RankSelection:
    """Outcome of an eigenvalue-ratio search.

    ``ratios[j-1]`` is the (ridged) ratio of the j-th to the (j+1)-th eigenvalue,
    so ``k_hat == argmax(ratios) + 1``.
    """

    k_hat: int
    ratios: np.ndarray
    delta: float
    c: float
    kmax: int
    epsilon: float | None = None
    eigenvalues: np.ndarray = field(default_factory=lambda: np.empty(0))


def ratio_delta(p_other: int, T: int, epsilon: float) -> float:
    """Ridge scale ``1/sqrt(min(p_other, T**(1-epsilon)))``.

    For the row side pass ``p_other = p2``; for the column side ``p_other = p1``.
    """
    if T < 1 or p_other < 1:
        raise ParameterError("T and p must be positive")
    return 1.0 / np.sqrt(min(float(p_other), float(T) ** (1.0 - epsilon)))


def ratio_rank(
    values: np.ndarray,
    kmax: int,
    c: float = 0.0,
    delta: float = 0.0,
    epsilon: float | None = None,
) -> RankSelection:
    """Pick the rank maximizing ``lam_j / lam_{j+1}`` over ``j = 1..kmax``.

    Each eigenvalue is shifted by ``c * delta`` first. The first maximizer wins.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1:
        raise ParameterError("values must be one-dimensional")
    if kmax < 1 or kmax + 1 > values.size:
        raise ParameterError(f"need 1 <= kmax and kmax + 1 <= {values.size}, got kmax={kmax}")
    if c < 0 or delta < 0:
        raise ParameterError("ridge constant c and regularizer delta must be non-negative")
    head = values[: kmax + 1]
    if np.any(np.diff(head) > 1e-12 * max(1.0, float(np.abs(head).max()))):
        raise ParameterError("eigenvalues must be non-increasing")
    shifted = head + c * delta
    if np.any(shifted[1:] <= 0):
        raise DegenerateError("zero eigenvalue in a ratio denominator; use a positive ridge (c > 0)")
    ratios = shifted[:-1] / shifted[1:]
    k_hat = int(np.argmax(ratios)) + 1
    ratios.setflags(write=False)
    return RankSelection(
        k_hat=k_hat, ratios=ratios, delta=float(delta), c=float(c), kmax=int(kmax),
        epsilon=epsilon, eigenvalues=values,
    )

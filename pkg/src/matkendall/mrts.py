"""Two-step robust estimation of the matrix factor model ``X_t = R F_t C^T + E_t``.

Step one takes ``sqrt(p1)`` (``sqrt(p2)``) times the leading eigenvectors of the
row (column) matrix Kendall's tau as loadings. Step two projects each
observation: ``F_t = R^T X_t C / (p1 p2)``, the least-squares solution of
``vec(X_t) ~ (C ⊗ R) vec(F_t)`` under the loading normalization.

The non-robust baseline (``apca``) swaps the Kendall matrices for the
mean-centered second moments ``sum_t (X_t - Xbar)(X_t - Xbar)^T / (T p1 p2)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .kendall import kendall_sides
from .spectral import EigenDecomp, RankSelection, ratio_delta, ratio_rank, sym_eigen
from .tensor_io import MatrixSeries

METHODS = ("mrts", "apca")
GAP_TOL = 1e-10
DEFAULT_KMAX = 8
DEFAULT_EPSILON = 0.05


class DegenerateGapWarning(UserWarning):
    """Leading-k eigenspace is not separated from the rest of the spectrum."""


@dataclass(frozen=True)
class LoadingEstimate:
    R_hat: np.ndarray
    C_hat: np.ndarray
    row_eigenvalues: np.ndarray
    col_eigenvalues: np.ndarray
    method: str
    warnings: tuple[str, ...] = ()

    @property
    def k1(self) -> int:
        return self.R_hat.shape[1]

    @property
    def k2(self) -> int:
        return self.C_hat.shape[1]


@dataclass(frozen=True)
class FactorFit:
    loadings: LoadingEstimate
    factors: np.ndarray  # (T, k1, k2)
    common: MatrixSeries | None = None


def _as_series(series) -> MatrixSeries:
    return series if isinstance(series, MatrixSeries) else MatrixSeries(series)


def _check_ranks(series: MatrixSeries, k1: int, k2: int) -> None:
    if series.T < 2:
        raise ParameterError("loading estimation needs T >= 2")
    if not (1 <= k1 <= series.p1 and 1 <= k2 <= series.p2):
        raise ParameterError(f"need 1 <= k1 <= {series.p1} and 1 <= k2 <= {series.p2}, got ({k1}, {k2})")


def kendall_spectra(series: MatrixSeries, threads: int = 1) -> tuple[EigenDecomp, EigenDecomp]:
    row, col = kendall_sides(series, ("row", "column"), threads=threads)
    return sym_eigen(row.mat), sym_eigen(col.mat)


def second_moment_spectra(series: MatrixSeries) -> tuple[EigenDecomp, EigenDecomp]:
    T, p1, p2 = series.shape
    Xc = series.data - series.data.mean(axis=0)
    scale = 1.0 / (T * p1 * p2)
    M_row = Xc.transpose(1, 0, 2).reshape(p1, T * p2)
    M_col = Xc.reshape(T * p1, p2)
    row = M_row @ M_row.T * scale
    col = M_col.T @ M_col * scale
    return sym_eigen(0.5 * (row + row.T)), sym_eigen(0.5 * (col + col.T))


def loadings_from_spectra(row: EigenDecomp, col: EigenDecomp, k1: int, k2: int, method: str) -> LoadingEstimate:
    p1, p2 = row.values.size, col.values.size
    notes = []
    for side, eig, k in (("row", row, k1), ("column", col, k2)):
        if eig.gap(k) < GAP_TOL:
            msg = f"degenerate {side} spectral gap at k={k} ({eig.gap(k):.3g})"
            notes.append(msg)
            warnings.warn(msg, DegenerateGapWarning, stacklevel=3)
    return LoadingEstimate(
        R_hat=np.sqrt(p1) * row.leading(k1),
        C_hat=np.sqrt(p2) * col.leading(k2),
        row_eigenvalues=row.values,
        col_eigenvalues=col.values,
        method=method,
        warnings=tuple(notes),
    )


def mrts_loadings(series, k1: int, k2: int, threads: int = 1) -> LoadingEstimate:
    """Scaled leading eigenvectors of the row/column Kendall matrices."""
    series = _as_series(series)
    _check_ranks(series, k1, k2)
    row, col = kendall_spectra(series, threads=threads)
    return loadings_from_spectra(row, col, k1, k2, "mrts")


def apca_loadings(series, k1: int, k2: int) -> LoadingEstimate:
    """Second-moment PCA baseline (alpha = 0, temporally centered)."""
    series = _as_series(series)
    _check_ranks(series, k1, k2)
    row, col = second_moment_spectra(series)
    return loadings_from_spectra(row, col, k1, k2, "apca")


def project_factors(data: np.ndarray, R_hat: np.ndarray, C_hat: np.ndarray) -> np.ndarray:
    p1, p2 = R_hat.shape[0], C_hat.shape[0]
    return np.einsum("ia,tij,jb->tab", R_hat, data, C_hat) / (p1 * p2)


def reconstruct(factors: np.ndarray, R_hat: np.ndarray, C_hat: np.ndarray) -> np.ndarray:
    return np.einsum("ia,tab,jb->tij", R_hat, factors, C_hat)


def mrts_factors(series, loadings: LoadingEstimate, common: bool = True) -> FactorFit:
    """Least-squares factor scores ``R^T X_t C / (p1 p2)`` and the fitted common components."""
    series = _as_series(series)
    if loadings.R_hat.shape[0] != series.p1 or loadings.C_hat.shape[0] != series.p2:
        raise ParameterError(
            f"loadings are for ({loadings.R_hat.shape[0]}, {loadings.C_hat.shape[0]}) matrices, "
            f"series has ({series.p1}, {series.p2})"
        )
    F = project_factors(series.data, loadings.R_hat, loadings.C_hat)
    S = MatrixSeries(reconstruct(F, loadings.R_hat, loadings.C_hat)) if common else None
    return FactorFit(loadings=loadings, factors=F, common=S)


def fit(series, k1: int, k2: int, method: str = "mrts", threads: int = 1) -> FactorFit:
    if method == "mrts":
        load = mrts_loadings(series, k1, k2, threads=threads)
    elif method == "apca":
        load = apca_loadings(series, k1, k2)
    else:
        raise ParameterError(f"unknown method {method!r}; expected one of {METHODS}")
    return mrts_factors(series, load)


def _check_kmax(series: MatrixSeries, kmax: int) -> None:
    if series.T < 2:
        raise ParameterError("rank selection needs T >= 2")
    if kmax < 1 or kmax + 1 > min(series.p1, series.p2):
        raise ParameterError(f"kmax={kmax} needs kmax + 1 <= min(p1, p2) = {min(series.p1, series.p2)}")


def mker_ranks_from(row: EigenDecomp, col: EigenDecomp, T: int, kmax: int = DEFAULT_KMAX, c: float = 0.0,
                    epsilon: float = DEFAULT_EPSILON) -> tuple[RankSelection, RankSelection]:
    p1, p2 = row.values.size, col.values.size
    d1 = ratio_delta(p2, T, epsilon)
    d2 = ratio_delta(p1, T, epsilon)
    return (ratio_rank(row.values, kmax, c=c, delta=d1, epsilon=epsilon),
            ratio_rank(col.values, kmax, c=c, delta=d2, epsilon=epsilon))


def mker_ranks(series, kmax: int = DEFAULT_KMAX, c: float = 0.0, epsilon: float = DEFAULT_EPSILON,
               threads: int = 1) -> tuple[RankSelection, RankSelection]:
    """Eigenvalue-ratio factor numbers from the Kendall spectra.

    The ridge ``c * delta`` uses ``delta_row = 1/sqrt(min(p2, T^(1-eps)))`` and
    ``delta_col = 1/sqrt(min(p1, T^(1-eps)))``; ``c = 0`` disables it.
    """
    series = _as_series(series)
    _check_kmax(series, kmax)
    row, col = kendall_spectra(series, threads=threads)
    return mker_ranks_from(row, col, series.T, kmax, c, epsilon)


def apca_ranks_from(row: EigenDecomp, col: EigenDecomp, kmax: int = DEFAULT_KMAX
                    ) -> tuple[RankSelection, RankSelection]:
    return ratio_rank(row.values, kmax), ratio_rank(col.values, kmax)


def apca_ranks(series, kmax: int = DEFAULT_KMAX) -> tuple[RankSelection, RankSelection]:
    """Eigenvalue-ratio factor numbers from the second-moment spectra (no ridge)."""
    series = _as_series(series)
    _check_kmax(series, kmax)
    return apca_ranks_from(*second_moment_spectra(series), kmax)

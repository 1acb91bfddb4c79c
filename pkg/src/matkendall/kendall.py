"""Row/column matrix Kendall's tau.

For a pair of observations with difference ``D = X - X'`` the row kernel is
``D D^T / ||D||_F^2`` and the column kernel ``D^T D / ||D||_F^2``. The sample
statistic averages the kernel over all unordered pairs ``t < t'``.

The pair sum is evaluated in fixed-size chunks of pairs. Each chunk stacks its
normalized differences and reduces them with a single matrix product; chunk
partial sums are then added in chunk order, so the result does not depend on
how many worker threads evaluated the chunks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, ParameterError
from .tensor_io import MatrixSeries

SIDES = ("row", "column")
CHUNK_PAIRS = 256


@dataclass(frozen=True)
class KendallTau:
    side: str
    mat: np.ndarray
    pairs_used: int
    subsampled: bool = False

    @property
    def dim(self) -> int:
        return self.mat.shape[0]


def _check_side(side: str) -> None:
    if side not in SIDES:
        raise ParameterError(f"side must be 'row' or 'column', got {side!r}")


def pair_kernel(X: np.ndarray, Xp: np.ndarray, side: str = "row") -> np.ndarray:
    """Normalized outer (row) or inner (column) product of ``X - Xp``."""
    _check_side(side)
    D = np.asarray(X, dtype=np.float64) - np.asarray(Xp, dtype=np.float64)
    if D.ndim != 2:
        raise ParameterError(f"pair_kernel expects matrices, got shape {D.shape}")
    norm2 = float(np.sum(D * D))
    if norm2 == 0.0:
        raise DegenerateError("degenerate pair: the two observations are identical")
    K = D @ D.T if side == "row" else D.T @ D
    return K / norm2


def _kernel_sums(D: np.ndarray, sides: tuple[str, ...]) -> tuple[list[np.ndarray], int]:
    """Sum the normalized kernels of the difference stack ``D`` (overwritten)."""
    norm2 = np.einsum("kab,kab->k", D, D)
    keep = norm2 > 0
    if not np.all(keep):
        D, norm2 = D[keep], norm2[keep]
    n, p1, p2 = D.shape
    out = []
    if n:
        D *= (1.0 / np.sqrt(norm2))[:, None, None]
    for side in sides:
        if n == 0:
            dim = p1 if side == "row" else p2
            out.append(np.zeros((dim, dim)))
        elif side == "row":
            A = D.transpose(1, 0, 2).reshape(p1, n * p2)
            out.append(A @ A.T)
        else:
            A = D.reshape(n * p1, p2)
            out.append(A.T @ A)
    return out, n


def _anchor_chunks(T: int, chunk_pairs: int) -> list[tuple[int, int]]:
    """Split anchors ``t = 0..T-2`` into consecutive runs of about ``chunk_pairs`` pairs.

    Anchor ``t`` owns the pairs ``(t, s)`` with ``s > t``. The split depends only
    on ``T`` and ``chunk_pairs``.
    """
    chunks = []
    start, count = 0, 0
    for t in range(T - 1):
        count += T - 1 - t
        if count >= chunk_pairs:
            chunks.append((start, t + 1))
            start, count = t + 1, 0
    if start < T - 1:
        chunks.append((start, T - 1))
    return chunks


def _anchor_diffs(data: np.ndarray, lo: int, hi: int) -> np.ndarray:
    T = data.shape[0]
    n = sum(T - 1 - t for t in range(lo, hi))
    D = np.empty((n,) + data.shape[1:])
    k = 0
    for t in range(lo, hi):
        m = T - 1 - t
        np.subtract(data[t], data[t + 1:], out=D[k:k + m])
        k += m
    return D


def _pair_diffs(data: np.ndarray, ii: np.ndarray, jj: np.ndarray) -> np.ndarray:
    return data[ii] - data[jj]


def _series_array(series) -> np.ndarray:
    data = series.data if isinstance(series, MatrixSeries) else np.asarray(series, dtype=np.float64)
    if data.ndim != 3:
        raise ParameterError(f"expected a (T, p1, p2) series, got shape {data.shape}")
    return data


def kendall_sides(
    series: MatrixSeries | np.ndarray,
    sides: tuple[str, ...] = SIDES,
    subsample: int | None = None,
    rng: np.random.Generator | None = None,
    threads: int = 1,
    chunk_pairs: int = CHUNK_PAIRS,
) -> tuple[KendallTau, ...]:
    """Kendall matrices for several sides sharing one pass over the pairs.

    See :func:`kendall` for the parameters.
    """
    for side in sides:
        _check_side(side)
    data = _series_array(series)
    T = data.shape[0]
    if T < 2:
        raise ParameterError("matrix Kendall's tau needs at least two observations")
    if chunk_pairs < 1:
        raise ParameterError("chunk_pairs must be positive")
    total_pairs = T * (T - 1) // 2
    if subsample is not None:
        if subsample < 1:
            raise ParameterError("subsample must be a positive pair count")
        if rng is None:
            raise ParameterError("subsample requires an rng")
    if subsample is not None and subsample < total_pairs:
        ii, jj = np.triu_indices(T, k=1)
        pick = np.sort(rng.choice(total_pairs, size=subsample, replace=False))
        ii, jj = ii[pick], jj[pick]
        units = [(s, min(s + chunk_pairs, ii.size)) for s in range(0, ii.size, chunk_pairs)]
        make = lambda lo, hi: _pair_diffs(data, ii[lo:hi], jj[lo:hi])  # noqa: E731
        subsampled = True
    else:
        units = _anchor_chunks(T, chunk_pairs)
        make = lambda lo, hi: _anchor_diffs(data, lo, hi)  # noqa: E731
        subsampled = False

    def work(unit: tuple[int, int]) -> tuple[list[np.ndarray], int]:
        return _kernel_sums(make(*unit), sides)

    if threads > 1 and len(units) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, units))
    else:
        parts = [work(u) for u in units]

    totals = [m.copy() for m in parts[0][0]]
    used = parts[0][1]
    for mats, n in parts[1:]:
        for acc, m in zip(totals, mats):
            acc += m
        used += n
    if used == 0:
        raise DegenerateError("all observation pairs are tied; Kendall's tau is undefined")
    out = []
    for side, total in zip(sides, totals):
        mat = total / used
        out.append(KendallTau(side=side, mat=0.5 * (mat + mat.T), pairs_used=used, subsampled=subsampled))
    return tuple(out)


def kendall(
    series: MatrixSeries | np.ndarray,
    side: str = "row",
    subsample: int | None = None,
    rng: np.random.Generator | None = None,
    threads: int = 1,
    chunk_pairs: int = CHUNK_PAIRS,
) -> KendallTau:
    """Sample row or column matrix Kendall's tau.

    Parameters
    ----------
    series : MatrixSeries or (T, p1, p2) array
    side : {"row", "column"}
    subsample : int, optional
        Average over this many distinct pairs drawn uniformly with ``rng``
        instead of all ``T(T-1)/2`` pairs.
    threads : int
        Worker threads for the chunked reduction. Does not affect the result.
    chunk_pairs : int
        Pairs per chunk. Fixes the summation order, so changing it may
        change the last bits of the result.

    Tied pairs (zero difference) are skipped; ``pairs_used`` counts the pairs
    that were averaged.
    """
    _check_side(side)
    return kendall_sides(series, (side,), subsample=subsample, rng=rng, threads=threads,
                         chunk_pairs=chunk_pairs)[0]


def kendall_naive(series: MatrixSeries | np.ndarray, side: str = "row") -> np.ndarray:
    """Reference double loop over pairs; used as a test oracle."""
    data = _series_array(series)
    T = data.shape[0]
    if T < 2:
        raise ParameterError("matrix Kendall's tau needs at least two observations")
    acc = None
    n = 0
    for t in range(T):
        for s in range(t + 1, T):
            if not np.any(data[t] != data[s]):
                continue
            K = pair_kernel(data[t], data[s], side)
            acc = K if acc is None else acc + K
            n += 1
    if n == 0:
        raise DegenerateError("all observation pairs are tied")
    return acc / n


def _sqrt_psd(M: np.ndarray, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or not np.allclose(M, M.T, atol=1e-10):
        raise ParameterError(f"{name} must be a symmetric square matrix")
    w, V = np.linalg.eigh(M)
    if w[0] < -1e-10 * max(1.0, abs(w[-1])):
        raise ParameterError(f"{name} is not positive semidefinite")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def population_kendall_mc(
    Sigma: np.ndarray,
    Omega: np.ndarray,
    n_pairs: int,
    rng: np.random.Generator,
    dist: str = "normal",
    nu: float | None = None,
    side: str = "row",
    batch: int = 20000,
) -> KendallTau:
    """Monte-Carlo estimate of the population Kendall matrix of ``E(0, Sigma ⊗ Omega)``.

    Each pair is two independent draws ``A Z B`` (normal) or ``A Z B / sqrt(w/nu)``
    with ``w ~ chi2(nu)`` (t), where ``A, B`` are the symmetric square roots.
    """
    _check_side(side)
    if n_pairs < 1:
        raise ParameterError("n_pairs must be positive")
    if dist not in ("normal", "t"):
        raise ParameterError("dist must be 'normal' or 't'")
    if dist == "t" and (nu is None or nu <= 0):
        raise ParameterError("t sampling needs a positive nu")
    A = _sqrt_psd(Sigma, "Sigma")
    B = _sqrt_psd(Omega, "Omega")
    p1, p2 = A.shape[0], B.shape[0]
    dim = p1 if side == "row" else p2
    total = np.zeros((dim, dim))
    used = 0
    remaining = n_pairs
    while remaining > 0:
        m = min(batch, remaining)
        Z = rng.standard_normal((2, m, p1, p2))
        Y = A @ Z @ B
        if dist == "t":
            w = rng.chisquare(nu, size=(2, m))
            Y = Y / np.sqrt(w / nu)[:, :, None, None]
        (part,), n = _kernel_sums(Y[0] - Y[1], (side,))
        total += part
        used += n
        remaining -= m
    mat = total / used
    return KendallTau(side=side, mat=0.5 * (mat + mat.T), pairs_used=used)

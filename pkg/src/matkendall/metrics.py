"""Rotation-invariant evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateError, ParameterError, ValidationError
from .tensor_io import MatrixSeries

ORTHO_TOL = 1e-8


def _orthonormal(Q: np.ndarray, name: str) -> np.ndarray:
    Q = np.asarray(Q, dtype=np.float64)
    if Q.ndim == 1:
        Q = Q[:, None]
    if Q.ndim != 2 or Q.shape[1] < 1:
        raise ValidationError(f"{name} must be a non-empty matrix, got shape {Q.shape}")
    q = Q.shape[1]
    if np.max(np.abs(Q.T @ Q - np.eye(q))) <= ORTHO_TOL:
        return Q
    Qo, Rr = np.linalg.qr(Q)
    diag = np.abs(np.diag(Rr))
    if diag.size < q or diag.min() <= 1e-12 * max(1.0, diag.max()):
        raise ValidationError(f"{name} is rank deficient")
    return Qo


def subspace_distance(Q1: np.ndarray, Q2: np.ndarray) -> float:
    """``sqrt(1 - tr(P1 P2) / max(q1, q2))`` between the column spaces of ``Q1`` and ``Q2``.

    Inputs that are not column-orthonormal are orthonormalized by QR first.
    """
    A = _orthonormal(Q1, "Q1")
    B = _orthonormal(Q2, "Q2")
    if A.shape[0] != B.shape[0]:
        raise ParameterError(f"ambient dimensions differ: {A.shape[0]} vs {B.shape[0]}")
    if A.shape[0] < max(A.shape[1], B.shape[1]):
        raise ValidationError("more columns than ambient dimension")
    if A.shape == B.shape and np.array_equal(A, B):
        return 0.0
    if A.shape[1] < B.shape[1]:
        A, B = B, A
    q_big, q_small = A.shape[1], B.shape[1]
    # max(q1,q2) - ||A^T B||_F^2 == ||B - A A^T B||_F^2 + (q_big - q_small); the
    # residual form keeps full relative accuracy when the spans nearly coincide
    resid = B - A @ (A.T @ B)
    radicand = (float(np.sum(resid * resid)) + (q_big - q_small)) / q_big
    return float(np.sqrt(min(1.0, max(0.0, radicand))))


def _data(x) -> np.ndarray:
    return x.data if isinstance(x, MatrixSeries) else np.asarray(x, dtype=np.float64)


def mse_common(est, truth) -> float:
    """Mean squared entrywise error ``sum_t ||S_hat_t - S_t||_F^2 / (T p1 p2)``."""
    a, b = _data(est), _data(truth)
    if a.shape != b.shape:
        raise ParameterError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def factor_mse(F_hat: np.ndarray, R_hat: np.ndarray, C_hat: np.ndarray,
               F: np.ndarray, R: np.ndarray, C: np.ndarray) -> float:
    """Per-entry factor error after mapping the true factors into the estimated basis.

    The estimate targets ``H_R^T F_t H_C`` with ``H_R = R^T R_hat / p1`` and
    ``H_C = C^T C_hat / p2``, i.e. the projection of the true common component
    onto the estimated loadings.
    """
    p1, p2 = R.shape[0], C.shape[0]
    HR = R.T @ R_hat / p1
    HC = C.T @ C_hat / p2
    target = np.einsum("ab,tac,cd->tbd", HR, F, HC)
    return float(np.mean((np.asarray(F_hat) - target) ** 2))


def pricing_errors(actual, fitted) -> tuple[float, float]:
    """Window pricing error and unexplained share of variance.

    ``MSE = sum_i ||Yhat_i - Y_i||_F^2 / (n p1 p2)`` and
    ``rho = sum_i ||Yhat_i - Y_i||_F^2 / sum_i ||Y_i - Ybar||_F^2``.
    """
    a, f = _data(actual), _data(fitted)
    if a.shape != f.shape:
        raise ParameterError(f"shape mismatch: {a.shape} vs {f.shape}")
    if a.ndim != 3 or a.shape[0] < 1:
        raise ParameterError("window must be a non-empty (n, p1, p2) stack")
    sse = float(np.sum((f - a) ** 2))
    sst = float(np.sum((a - a.mean(axis=0)) ** 2))
    if sst == 0.0:
        raise DegenerateError("window is constant over time; unexplained variance ratio undefined")
    return sse / a.size, sse / sst


def loading_variation(R_prev: np.ndarray, C_prev: np.ndarray, R_curr: np.ndarray, C_curr: np.ndarray) -> float:
    """Distance between the spans of ``C_curr ⊗ R_curr`` and ``C_prev ⊗ R_prev``."""
    if R_prev.shape[0] != R_curr.shape[0] or C_prev.shape[0] != C_curr.shape[0]:
        raise ParameterError("loading dimensions changed between windows")
    return subspace_distance(np.kron(C_curr, R_curr), np.kron(C_prev, R_prev))


@dataclass
class RollingReport:
    window: int
    block: int
    k1: int
    k2: int
    method: str
    records: list[dict] = field(default_factory=list)

    def means(self) -> dict:
        mse = [r["MSE"] for r in self.records]
        rho = [r["rho"] for r in self.records]
        v = [r["v"] for r in self.records if r["v"] is not None]
        return {
            "MSE": float(np.mean(mse)),
            "rho": float(np.mean(rho)),
            "v": float(np.mean(v)) if v else None,
        }

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_orthogonal
from matkendall.errors import DegenerateError, ParameterError, ValidationError
from matkendall.metrics import factor_mse, loading_variation, mse_common, pricing_errors, subspace_distance

e = np.eye(3)


def test_subspace_examples(rng):
    Q = random_orthogonal(rng, 5)[:, :2]
    assert subspace_distance(Q, Q) == 0.0
    assert subspace_distance(np.eye(2)[:, :1], np.eye(2)[:, 1:]) == 1.0
    assert subspace_distance(e[:, :2], e[:, :1]) == pytest.approx(np.sqrt(0.5), abs=1e-15)


def test_subspace_rank_deficient():
    with pytest.raises(ValidationError):
        subspace_distance(np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]]), e[:, :1])
    with pytest.raises(ParameterError):
        subspace_distance(np.eye(3)[:, :1], np.eye(4)[:, :1])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 4))
def test_subspace_symmetry_and_span_invariance(seed, q1, q2):
    r = np.random.default_rng(seed)
    p = 6
    A, B = r.standard_normal((p, q1)), r.standard_normal((p, q2))
    d = subspace_distance(A, B)
    assert 0.0 <= d <= 1.0
    assert subspace_distance(B, A) == pytest.approx(d, abs=1e-12)
    G1 = r.standard_normal((q1, q1)) + 3 * np.eye(q1)
    G2 = r.standard_normal((q2, q2)) + 3 * np.eye(q2)
    assert subspace_distance(A @ G1, B @ G2) == pytest.approx(d, abs=1e-9)
    assert subspace_distance(A @ G1, A) <= 1e-7


def test_mse_examples(rng):
    a = rng.standard_normal((3, 4, 2))
    assert mse_common(a, a) == 0.0
    assert mse_common(np.ones((1, 2, 2)), np.zeros((1, 2, 2))) == 1.0
    b = rng.standard_normal((3, 4, 2))
    assert mse_common(a, b) == mse_common(b, a)
    with pytest.raises(ParameterError):
        mse_common(a, b[:, :3])


def test_pricing_errors_hand_computed():
    actual = np.array([[[1.0, 0.0], [0.0, 0.0]], [[3.0, 0.0], [0.0, 2.0]]])
    fitted = np.array([[[1.0, 1.0], [0.0, 0.0]], [[2.0, 0.0], [0.0, 2.0]]])
    # SSE = 1 + 1; SST about the mean [[2,0],[0,1]] = 2 + 2; n p1 p2 = 8
    assert pricing_errors(actual, fitted) == (0.25, 0.5)


def test_pricing_errors_edge_cases(rng):
    y = rng.standard_normal((12, 3, 3))
    assert pricing_errors(y, y) == (0.0, 0.0)
    mean = np.broadcast_to(y.mean(axis=0), y.shape)
    assert pricing_errors(y, mean)[1] == pytest.approx(1.0, abs=1e-14)
    f = y + 0.3 * rng.standard_normal(y.shape)
    assert pricing_errors(4.5 * y, 4.5 * f)[1] == pytest.approx(pricing_errors(y, f)[1], rel=1e-12)
    with pytest.raises(DegenerateError):
        pricing_errors(np.ones((3, 2, 2)), np.zeros((3, 2, 2)))


def test_loading_variation(rng):
    R, C = rng.standard_normal((4, 2)), rng.standard_normal((3, 1))
    assert loading_variation(R, C, R, C) == 0.0
    e4, e3 = np.eye(4), np.eye(3)
    assert loading_variation(e4[:, :1], e3[:, :1], e4[:, 1:2], e3[:, 1:2]) == pytest.approx(1.0)
    rot = np.array([[np.cos(0.7), -np.sin(0.7)], [np.sin(0.7), np.cos(0.7)]])
    assert loading_variation(R, C, R @ rot, C) <= 1e-7


def test_factor_mse_zero_for_exact_projection(rng):
    R, C = rng.uniform(-1, 1, (8, 2)), rng.uniform(-1, 1, (6, 2))
    F = rng.standard_normal((5, 2, 2))
    Q1, _ = np.linalg.qr(R)
    Q2, _ = np.linalg.qr(C)
    R_hat, C_hat = np.sqrt(8) * Q1, np.sqrt(6) * Q2
    X = np.einsum("ia,tab,jb->tij", R, F, C)
    F_hat = np.einsum("ia,tij,jb->tab", R_hat, X, C_hat) / 48
    assert factor_mse(F_hat, R_hat, C_hat, F, R, C) <= 1e-25

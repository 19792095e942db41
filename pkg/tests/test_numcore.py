import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from robust_transfer.errors import InputError, NumericError, SpectralNormError
from robust_transfer.numcore import finite_diff_grad, matvec, spectral_norm


def _oracle(W):
    # largest eigenvalue of W^T W from a dense symmetric eigensolver
    return math.sqrt(max(np.linalg.eigvalsh(W.T @ W)[-1], 0.0))


def test_matvec_examples():
    assert np.array_equal(matvec(np.eye(2), [3, -1]), [3, -1])
    assert np.array_equal(matvec([[1, 2], [3, 4]], [1, 1]), [3, 7])
    assert np.array_equal(matvec(np.zeros((3, 2)), [5, -2]), np.zeros(3))


def test_matvec_dimension_mismatch():
    with pytest.raises(InputError):
        matvec(np.eye(2), [1, 2, 3])


@pytest.mark.parametrize("W, expected", [
    (np.diag([3.0, 4.0]), 4.0),
    (np.eye(5), 1.0),
    (np.ones((2, 2)), 2.0),
    (np.zeros((3, 4)), 0.0),
])
def test_spectral_norm_examples(W, expected):
    assert spectral_norm(W) == pytest.approx(expected, abs=1e-9)


def test_spectral_norm_reports_nonconvergence():
    rng = np.random.default_rng(0)
    W = rng.standard_normal((6, 6))
    with pytest.raises(SpectralNormError) as info:
        spectral_norm(W, tol=1e-300, max_iter=3)
    assert info.value.residual >= 0
    assert info.value.last_estimate > 0


matrices = st.tuples(st.integers(1, 8), st.integers(1, 8)).flatmap(
    lambda s: arrays(np.float64, s, elements=st.floats(-1, 1)))


@settings(max_examples=200, deadline=None)
@given(matrices)
def test_spectral_norm_matches_eigen_oracle(W):
    assert abs(spectral_norm(W) - _oracle(W)) <= 1e-6


@settings(max_examples=100, deadline=None)
@given(matrices, st.floats(-5, 5))
def test_spectral_norm_homogeneous(W, c):
    assert abs(spectral_norm(c * W) - abs(c) * spectral_norm(W)) <= 1e-8 * max(1.0, abs(c) * spectral_norm(W))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_operator_norm_bound(m, n, seed):
    rng = np.random.default_rng(seed)
    W, g = rng.uniform(-1, 1, (m, n)), rng.uniform(-1, 1, n)
    assert np.linalg.norm(W @ g) <= spectral_norm(W) * np.linalg.norm(g) + 1e-9


def test_finite_diff_examples():
    assert np.allclose(finite_diff_grad(lambda x: float(x @ x), [1.0, 2.0]), [2, 4], atol=1e-8)
    assert np.array_equal(finite_diff_grad(lambda x: 7.0, [1.0, 2.0]), [0, 0])
    assert np.allclose(finite_diff_grad(lambda x: 3 * x[0] - x[1], [0.3, 0.2]), [3, -1], atol=1e-8)


def test_finite_diff_names_coordinate():
    def fn(x):
        return math.inf if x[1] > 0.5 else 0.0

    with pytest.raises(NumericError, match="coordinate 1"):
        finite_diff_grad(fn, [0.0, 0.5])

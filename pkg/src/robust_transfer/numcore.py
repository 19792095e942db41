"""Dense linear algebra helpers, spectral norm and finite-difference gradients.

Matrices and vectors are plain float64 numpy arrays; the ``as_matrix`` and
``as_vector`` helpers enforce shape and finiteness at module boundaries.
"""
import numpy as np

from ._rng import stream
from .errors import InputError, NumericError, SpectralNormError


def as_vector(v, name="vector"):
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1 or arr.size == 0:
        raise InputError(f"{name} must be a non-empty 1-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    return arr


def as_matrix(m, name="matrix"):
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise InputError(f"{name} must be a non-empty 2-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    return arr


def matvec(W, g):
    W = as_matrix(W, "W")
    g = as_vector(g, "g")
    if W.shape[1] != g.shape[0]:
        raise InputError(f"dimension mismatch: W has {W.shape[1]} columns, g has {g.shape[0]} entries")
    return W @ g


def spectral_norm(W, tol=1e-10, max_iter=10_000, seed=0):
    """Largest singular value of ``W`` by power iteration on ``W.T @ W``.

    The start vector is the normalized all-ones vector plus seeded uniform
    noise of size 1e-3, so symmetric matrices cannot trap it in an
    orthogonal subspace. Iteration stops once consecutive estimates differ by
    at most ``tol * max(1, sigma)``.

    Raises
    ------
    SpectralNormError
        If ``max_iter`` iterations pass without meeting the tolerance. The
        exception carries the last estimate and the eigen-residual.
    """
    W = as_matrix(W, "W")
    if tol <= 0:
        raise InputError("tol must be positive")
    # work on W / max|W| so that W.T @ W cannot overflow; the norm is homogeneous
    scale = float(np.max(np.abs(W)))
    if scale == 0.0:
        return 0.0
    W = W / scale
    n = W.shape[1]
    v = np.ones(n) / np.sqrt(n) + 1e-3 * stream(seed, "power").uniform(-1.0, 1.0, size=n)
    v /= np.linalg.norm(v)
    sigma_prev = np.linalg.norm(W @ v)
    for _ in range(max_iter):
        w = W.T @ (W @ v)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            # v lies in the null space; with the perturbed start this means W == 0
            return 0.0
        v = w / norm_w
        sigma = np.linalg.norm(W @ v)
        if abs(sigma - sigma_prev) <= tol * max(1.0, sigma):
            return float(sigma) * scale
        sigma_prev = sigma
    residual = float(np.linalg.norm(W.T @ (W @ v) - sigma_prev**2 * v))
    raise SpectralNormError(
        f"power iteration did not converge in {max_iter} iterations "
        f"(estimate {sigma_prev * scale:.6g}, residual {residual * scale**2:.3g})",
        last_estimate=float(sigma_prev) * scale,
        residual=residual * scale**2,
        vector=v,
    )


def finite_diff_grad(fn, x, h=1e-5):
    """Central-difference gradient of a scalar function."""
    if h <= 0:
        raise InputError("h must be positive")
    x = np.array(as_vector(x, "x"), dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + h
        f_plus = fn(x.copy())
        x[i] = orig - h
        f_minus = fn(x.copy())
        x[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError(f"non-finite function value while differentiating coordinate {i}")
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad

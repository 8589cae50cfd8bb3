"""Pure-numpy Gram-matrix routines.

Reference implementation of the functions in ``_kernels_cy.pyx``; used when
the compiled extension is missing or ``JUMBO_BACKEND=python`` is set.

Kernel codes: 0 = Matern 5/2, 1 = RBF, 2 = Linear.
"""
import numpy as np

MATERN52, RBF, LINEAR = 0, 1, 2
_SQRT5 = np.sqrt(5.0)


def _scaled_dist(X1, X2, lengthscale):
    diff = X1[:, None, :] - X2[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1)) / lengthscale


def gram(X1, X2, kind, lengthscale, variance):
    """Cross-covariance matrix ``K[i, j] = k(X1[i], X2[j])``."""
    X1 = np.ascontiguousarray(X1, dtype=np.float64)
    X2 = np.ascontiguousarray(X2, dtype=np.float64)
    if kind == LINEAR:
        return variance * (X1 @ X2.T)
    r = _scaled_dist(X1, X2, lengthscale)
    if kind == MATERN52:
        return variance * (1.0 + _SQRT5 * r + (5.0 / 3.0) * r * r) * np.exp(-_SQRT5 * r)
    return variance * np.exp(-0.5 * r * r)


def gram_with_grad(X, kind, lengthscale, variance):
    """Symmetric Gram matrix and its derivative with respect to log-lengthscale."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if kind == LINEAR:
        K = variance * (X @ X.T)
        return K, np.zeros_like(K)
    r = _scaled_dist(X, X, lengthscale)
    r2 = r * r
    if kind == MATERN52:
        e = np.exp(-_SQRT5 * r)
        K = variance * (1.0 + _SQRT5 * r + (5.0 / 3.0) * r2) * e
        dK = variance * (5.0 / 3.0) * r2 * (1.0 + _SQRT5 * r) * e
        return K, dK
    e = np.exp(-0.5 * r2)
    return variance * e, variance * r2 * e

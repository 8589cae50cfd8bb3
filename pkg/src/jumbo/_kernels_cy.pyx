# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Gram-matrix routines (same contract as ``_kernels_py``)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()

cdef double SQRT5 = sqrt(5.0)

cdef inline double _sqdist(const double[:, ::1] A, Py_ssize_t i,
                           const double[:, ::1] B, Py_ssize_t j,
                           Py_ssize_t d) noexcept nogil:
    cdef double s = 0.0, t
    cdef Py_ssize_t k
    for k in range(d):
        t = A[i, k] - B[j, k]
        s += t * t
    return s


def gram(X1, X2, int kind, double lengthscale, double variance):
    if kind == 2:
        # A dot product is already optimal in BLAS.
        return variance * (np.asarray(X1, dtype=np.float64) @ np.asarray(X2, dtype=np.float64).T)
    cdef const double[:, ::1] A = np.ascontiguousarray(X1, dtype=np.float64)
    cdef const double[:, ::1] B = np.ascontiguousarray(X2, dtype=np.float64)
    cdef Py_ssize_t n1 = A.shape[0], n2 = B.shape[0], d = A.shape[1]
    out = np.empty((n1, n2), dtype=np.float64)
    cdef double[:, ::1] K = out
    cdef Py_ssize_t i, j
    cdef double r
    with nogil:
        for i in range(n1):
            for j in range(n2):
                r = sqrt(_sqdist(A, i, B, j, d)) / lengthscale
                if kind == 0:
                    K[i, j] = variance * (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * exp(-SQRT5 * r)
                else:
                    K[i, j] = variance * exp(-0.5 * r * r)
    return out


def gram_with_grad(X, int kind, double lengthscale, double variance):
    cdef const double[:, ::1] A = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = A.shape[0], d = A.shape[1]
    if kind == 2:
        K0 = gram(X, X, kind, lengthscale, variance)
        return K0, np.zeros_like(K0)
    outK = np.empty((n, n), dtype=np.float64)
    outG = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] K = outK
    cdef double[:, ::1] G = outG
    cdef Py_ssize_t i, j
    cdef double r, r2, e
    with nogil:
        for i in range(n):
            for j in range(i, n):
                r = sqrt(_sqdist(A, i, A, j, d)) / lengthscale
                r2 = r * r
                if kind == 0:
                    e = exp(-SQRT5 * r)
                    K[i, j] = variance * (1.0 + SQRT5 * r + (5.0 / 3.0) * r2) * e
                    G[i, j] = variance * (5.0 / 3.0) * r2 * (1.0 + SQRT5 * r) * e
                else:
                    e = exp(-0.5 * r2)
                    K[i, j] = variance * e
                    G[i, j] = variance * r2 * e
                K[j, i] = K[i, j]
                G[j, i] = G[i, j]
    return outK, outG

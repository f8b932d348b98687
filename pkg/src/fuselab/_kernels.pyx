# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: anisotropic Gaussian Gram matrix, its gradient
contraction, and the fixed-point 8-bit Gaussian blur."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


def gram(const double[:, ::1] X1, const double[:, ::1] X2, const double[::1] w):
    cdef Py_ssize_t n = X1.shape[0], m = X2.shape[0], d = X1.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double s, diff
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] R = out
    for i in range(n):
        for j in range(m):
            s = 0.0
            for k in range(d):
                diff = X1[i, k] - X2[j, k]
                s += w[k] * diff * diff
            R[i, j] = exp(-s)
    return out


def gram_sym(const double[:, ::1] X, const double[::1] w):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double s, diff, v
    out = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] R = out
    for i in range(n):
        R[i, i] = 1.0
        for j in range(i + 1, n):
            s = 0.0
            for k in range(d):
                diff = X[i, k] - X[j, k]
                s += w[k] * diff * diff
            v = exp(-s)
            R[i, j] = v
            R[j, i] = v
    return out


def sqdist_contract(const double[:, ::1] W, const double[:, ::1] X):
    """``out[k] = sum_ab W[a, b] * (X[a, k] - X[b, k])**2`` for symmetric ``W``."""
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t a, b, k
    cdef double diff, wab
    out = np.zeros(d, dtype=np.float64)
    cdef double[::1] acc = out
    for a in range(n):
        for b in range(a + 1, n):
            wab = W[a, b]
            for k in range(d):
                diff = X[a, k] - X[b, k]
                acc[k] += wab * diff * diff
    for k in range(d):
        acc[k] *= 2.0
    return out


def blur_u8(const cnp.uint8_t[:, ::1] img, const cnp.int64_t[::1] taps):
    """Separable integer convolution with edge replication.

    Returns ``round_half_up(acc / S)`` where ``acc`` is the exact integer
    2-D weighted sum and ``S = sum(taps)**2``.
    """
    cdef Py_ssize_t H = img.shape[0], W = img.shape[1], K = taps.shape[0], r = K // 2
    cdef Py_ssize_t i, j, t, jj, ii
    cdef cnp.int64_t s1 = 0, S, acc
    for t in range(K):
        s1 += taps[t]
    S = s1 * s1
    tmp_arr = np.empty((H, W), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] tmp = tmp_arr
    for i in range(H):
        for j in range(W):
            acc = 0
            for t in range(K):
                jj = j + t - r
                if jj < 0:
                    jj = 0
                elif jj >= W:
                    jj = W - 1
                acc += taps[t] * img[i, jj]
            tmp[i, j] = acc
    out_arr = np.empty((H, W), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] out = out_arr
    for i in range(H):
        for j in range(W):
            acc = 0
            for t in range(K):
                ii = i + t - r
                if ii < 0:
                    ii = 0
                elif ii >= H:
                    ii = H - 1
                acc += taps[t] * tmp[ii, j]
            out[i, j] = <cnp.uint8_t>((2 * acc + S) // (2 * S))
    return out_arr

"""NumPy implementations of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def gram(X1, X2, w):
    diff = X1[:, None, :] - X2[None, :, :]
    return np.exp(-np.einsum("ijk,k->ij", diff * diff, w))


def gram_sym(X, w):
    R = gram(X, X, w)
    np.fill_diagonal(R, 1.0)
    return R


def sqdist_contract(W, X):
    """``out[k] = sum_ab W[a, b] * (X[a, k] - X[b, k])**2`` for symmetric ``W``."""
    s = W.sum(axis=1)
    return 2.0 * (s @ (X * X)) - 2.0 * np.einsum("ak,ak->k", X, W @ X)


def blur_u8(img, taps):
    img = np.ascontiguousarray(img, dtype=np.uint8).astype(np.int64)
    taps = np.asarray(taps, dtype=np.int64)
    K = taps.size
    r = K // 2
    H, W = img.shape
    padded = np.pad(img, ((0, 0), (r, r)), mode="edge")
    tmp = np.zeros((H, W), dtype=np.int64)
    for t in range(K):
        tmp += taps[t] * padded[:, t:t + W]
    padded = np.pad(tmp, ((r, r), (0, 0)), mode="edge")
    acc = np.zeros((H, W), dtype=np.int64)
    for t in range(K):
        acc += taps[t] * padded[t:t + H, :]
    S = int(taps.sum()) ** 2
    return ((2 * acc + S) // (2 * S)).astype(np.uint8)

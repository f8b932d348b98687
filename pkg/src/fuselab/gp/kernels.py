"""Grouped one-hot encoding, matrix embedding and the mixed-input Gaussian kernel."""

import numpy as np

from ..errors import DomainError


def encode_categorical(levels, cardinalities) -> np.ndarray:
    """Grouped one-hot vector of length ``sum(cardinalities)``.

    >>> encode_categorical([1, 1], [2, 3])
    array([0., 1., 0., 1., 0.])
    """
    levels = list(levels)
    cardinalities = list(cardinalities)
    if len(levels) != len(cardinalities):
        raise DomainError(f"expected {len(cardinalities)} categorical values, got {len(levels)}")
    out = np.zeros(sum(cardinalities))
    offset = 0
    for idx, card in zip(levels, cardinalities):
        if not 0 <= int(idx) < card:
            raise DomainError(f"level index {idx} out of range for a variable with {card} levels")
        out[offset + int(idx)] = 1.0
        offset += card
    return out


def encode_batch(T, cardinalities) -> np.ndarray:
    T = np.asarray(T, dtype=np.int64)
    n = T.shape[0]
    out = np.zeros((n, sum(cardinalities)))
    offset = 0
    for j, card in enumerate(cardinalities):
        col = T[:, j]
        if n and (col.min() < 0 or col.max() >= card):
            raise DomainError(f"level index out of range in categorical column {j}")
        out[np.arange(n), offset + col] = 1.0
        offset += card
    return out


def embed(pi, A) -> np.ndarray:
    """Latent coordinates ``h = pi @ A`` for one encoding or a batch of them."""
    pi = np.asarray(pi, dtype=float)
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or pi.shape[-1] != A.shape[0]:
        raise DomainError(f"encoding length {pi.shape[-1]} does not match mapping matrix {A.shape}")
    return pi @ A


def kernel(x, h, x2, h2, omega) -> float:
    """Correlation ``exp(-sum 10**omega (x - x2)**2 - sum (h - h2)**2)``."""
    x, x2, h, h2, omega = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (x, x2, h, h2, omega))
    if x.shape != x2.shape or h.shape != h2.shape or x.shape != omega.shape:
        raise DomainError("kernel inputs do not share a schema")
    dq = x - x2
    dh = h - h2
    return float(np.exp(-np.sum(10.0**omega * dq * dq) - np.sum(dh * dh)))


def mixed_kernel(u, u2, omega, A, cardinalities) -> float:
    """Kernel between ``u = (x, t)`` pairs; ``t`` holds level indices."""
    (x, t), (x2, t2) = u, u2
    if len(cardinalities):
        h = embed(encode_categorical(t, cardinalities), A)
        h2 = embed(encode_categorical(t2, cardinalities), A)
    else:
        h = h2 = np.zeros(0)
    return kernel(x, h, x2, h2, omega)

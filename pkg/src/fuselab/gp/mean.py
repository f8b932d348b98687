"""Constant and small feed-forward (tanh) mean functions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError


@dataclass
class MeanFunction:
    """GP prior mean ``m(x, h; beta)``.

    For ``kind="ffnn"`` the network has ``hidden`` tanh layers followed by a
    linear output. Dropout (inverted scaling) acts on the last hidden layer
    only, so the inference-mode output is exactly the expectation of the
    training-mode output. ``source_dependent`` appends the embedded
    categorical coordinates ``h`` to the network input.
    """

    kind: str = "constant"
    hidden: tuple = ()
    dropout: float = 0.0
    source_dependent: bool = False
    in_dim: int = 0
    params: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        if self.kind not in ("constant", "ffnn"):
            raise DomainError(f"unknown mean kind {self.kind!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise DomainError(f"dropout rate must lie in [0, 1), got {self.dropout}")
        self.hidden = tuple(int(w) for w in self.hidden)
        if self.kind == "ffnn" and not self.hidden:
            raise DomainError("an ffnn mean needs at least one hidden layer")
        self.params = np.asarray(self.params, dtype=float).ravel()
        if self.params.size != self.n_params:
            if self.params.size == 1 and not np.any(self.params):
                self.params = np.zeros(self.n_params)
            else:
                raise DomainError(f"expected {self.n_params} mean parameters, got {self.params.size}")

    def _shapes(self):
        shapes = []
        prev = self.in_dim
        for width in self.hidden:
            shapes.append((prev, width))
            prev = width
        shapes.append((prev, 1))
        return shapes

    @property
    def n_params(self) -> int:
        if self.kind == "constant":
            return 1
        return sum(a * b + b for a, b in self._shapes())

    def unpack(self, params=None):
        p = self.params if params is None else params
        layers, k = [], 0
        for a, b in self._shapes():
            W = p[k:k + a * b].reshape(a, b)
            k += a * b
            layers.append((W, p[k:k + b]))
            k += b
        return layers

    def init_params(self, rng) -> np.ndarray:
        if self.kind == "constant":
            return np.zeros(1)
        parts = []
        for a, b in self._shapes():
            parts.append(rng.normal(0.0, np.sqrt(2.0 / (a + b)), size=a * b))
            parts.append(np.zeros(b))
        return np.concatenate(parts)

    def draw_masks(self, n, rng):
        """Frozen inverted-dropout masks for ``n`` training rows (or None)."""
        if self.kind != "ffnn" or self.dropout == 0.0:
            return None
        keep = rng.random((n, self.hidden[-1])) >= self.dropout
        return keep / (1.0 - self.dropout)

    def __call__(self, x, h=None, mode="infer", params=None, masks=None, rng=None):
        return eval_mean(self, x, h, mode=mode, params=params, masks=masks, rng=rng)


def eval_mean(mean: MeanFunction, x, h=None, mode="infer", params=None, masks=None, rng=None):
    """Evaluate the mean at the rows of ``x`` (with latent ``h`` if source dependent).

    In ``mode="train"`` dropout is applied using ``masks`` when given, else
    a fresh mask drawn from ``rng``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    p = mean.params if params is None else params
    if mean.kind == "constant":
        return np.full(x.shape[0], p[0])
    if mean.source_dependent and h is not None:
        a = np.hstack([x, np.atleast_2d(np.asarray(h, dtype=float)).reshape(x.shape[0], -1)])
    else:
        a = x
    if a.shape[1] != mean.in_dim:
        raise DomainError(f"mean expects {mean.in_dim} inputs, got {a.shape[1]}")
    layers = mean.unpack(p)
    for W, b in layers[:-1]:
        a = np.tanh(a @ W + b)
    if mode == "train" and mean.dropout > 0.0:
        if masks is None:
            rng = np.random.default_rng() if rng is None else rng
            masks = (rng.random(a.shape) >= mean.dropout) / (1.0 - mean.dropout)
        a = a * masks
    elif mode not in ("train", "infer"):
        raise DomainError(f"mode must be 'train' or 'infer', got {mode!r}")
    W, b = layers[-1]
    return (a @ W + b).ravel()


def _forward_batch(mean: MeanFunction, inputs, params, masks):
    """Forward pass for a stack of inputs ``(B, n, d)`` and parameter sets ``(B, P)``."""
    a = inputs
    shapes = mean._shapes()
    k = 0
    for li, (fa, fb) in enumerate(shapes):
        W = params[:, k:k + fa * fb].reshape(-1, fa, fb)
        k += fa * fb
        b = params[:, k:k + fb]
        k += fb
        z = np.matmul(a, W) + b[:, None, :]
        if li < len(shapes) - 1:
            a = np.tanh(z)
            if li == len(shapes) - 2 and masks is not None:
                a = a * masks
        else:
            return z[..., 0]


def fd_jacobians(mean: MeanFunction, x, h, params, masks=None, h_dirs=None, step=1e-6):
    """Central-difference Jacobians of an ffnn mean.

    Returns ``(J_params, J_h)`` where ``J_params`` is ``(n, P)`` and ``J_h``
    holds one column per direction in ``h_dirs`` (each an ``(n, dh)`` array
    perturbing the latent input), or None.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[0]
    base = np.hstack([x, h]) if (mean.source_dependent and h is not None) else x
    P = params.size
    eye = np.eye(P) * step
    pstack = np.concatenate([params + eye, params - eye])
    out = _forward_batch(mean, np.broadcast_to(base, (2 * P,) + base.shape), pstack, masks)
    J_p = ((out[:P] - out[P:]) / (2.0 * step)).T
    J_h = None
    if h_dirs is not None and len(h_dirs):
        dirs = np.asarray(h_dirs, dtype=float)
        m = dirs.shape[0]
        pad = np.concatenate([np.zeros((m, n, x.shape[1])), dirs * step], axis=2)
        inputs = np.concatenate([base[None] + pad, base[None] - pad])
        out = _forward_batch(mean, inputs, np.broadcast_to(params, (2 * m, P)), masks)
        J_h = ((out[:m] - out[m:]) / (2.0 * step)).T
    return J_p, J_h

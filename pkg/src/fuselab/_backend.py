"""Select the compiled kernels when available, otherwise the NumPy fallback.

Set ``FUSELAB_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _kernels_py

NAME = "python"
_impl = _kernels_py

if os.environ.get("FUSELAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # noqa: F811

        NAME = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py


def _c(a, dtype=np.float64):
    return np.ascontiguousarray(a, dtype=dtype)


def gram(X1, X2, w):
    return _impl.gram(_c(X1), _c(X2), _c(w))


def gram_sym(X, w):
    return _impl.gram_sym(_c(X), _c(w))


def sqdist_contract(W, X):
    # two matrix products through BLAS beat the compiled double loop here
    # (see benchmarks/bench_kernels.py), so both backends use the NumPy form
    return _kernels_py.sqdist_contract(_c(W), _c(X))


def blur_u8(img, taps):
    return _impl.blur_u8(_c(img, np.uint8), _c(taps, np.int64))

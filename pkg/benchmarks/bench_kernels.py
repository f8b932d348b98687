"""Compare the compiled kernels against the NumPy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel is timed on representative shapes (a 324-row GP gram matrix,
the latent-distance contraction, and a 1024x1024 micrograph blur) and the
outputs of the two backends are compared.
"""

import argparse
import timeit

import numpy as np

from fuselab import _kernels_py
from fuselab.imaging import gaussian_taps

try:
    from fuselab import _kernels
except ImportError:  # pragma: no cover
    _kernels = None


def cases(rng):
    X = rng.random((324, 4))
    w = 10.0 ** rng.uniform(-1, 1, 4)
    G = rng.normal(size=(324, 324))
    G = G + G.T
    img = rng.integers(0, 256, (1024, 1024), dtype=np.uint8)
    taps = gaussian_taps(5)
    return {
        "gram_sym (324x4)": ("gram_sym", (X, w)),
        "gram (324x500)": ("gram", (X, np.ascontiguousarray(rng.random((500, 4))), w)),
        "sqdist_contract (324x4)": ("sqdist_contract", (G, X)),
        "blur_u8 (1024x1024)": ("blur_u8", (img, taps)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':24s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}  match")
    for label, (name, a) in cases(rng).items():
        py = getattr(_kernels_py, name)
        t_py = min(timeit.repeat(lambda: py(*a), number=1, repeat=args.repeat)) * 1e3
        if _kernels is None:
            print(f"{label:24s} {t_py:10.3f} {'n/a':>10s}")
            continue
        cy = getattr(_kernels, name)
        t_cy = min(timeit.repeat(lambda: cy(*a), number=1, repeat=args.repeat)) * 1e3
        ref, out = py(*a), cy(*a)
        match = np.array_equal(ref, out) if ref.dtype.kind in "ui" else bool(np.allclose(ref, out, rtol=1e-12))
        print(f"{label:24s} {t_py:10.3f} {t_cy:10.3f} {t_py / t_cy:7.1f}x  {match}")


if __name__ == "__main__":
    main()

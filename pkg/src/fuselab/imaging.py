"""Porosity extraction from optical micrographs: crop, blur, threshold, count.

Images are plain ``(height, width)`` uint8 arrays. Every step uses integer
arithmetic, so results are bit-identical across platforms and between the
compiled and NumPy kernels.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import _backend
from .errors import DomainError

DEFAULT_MARGINS = (50, 50, 50, 80)  # top, right, left, bottom
DEFAULT_THRESHOLD = 75
TAP_SCALE = 1 << 12
IMAGE_SUFFIXES = (".png", ".tif", ".tiff")


def as_gray(img) -> np.ndarray:
    a = np.asarray(img)
    if a.ndim != 2:
        raise DomainError(f"expected a 2-D grayscale image, got shape {a.shape}")
    if a.size == 0:
        raise DomainError("empty image")
    if a.dtype != np.uint8:
        if not np.issubdtype(a.dtype, np.integer) or a.min() < 0 or a.max() > 255:
            raise DomainError("pixel values must be integers in [0, 255]")
        a = a.astype(np.uint8)
    return a


def rgb_to_luma(rgb) -> np.ndarray:
    """Integer BT.601 luma ``(299 R + 587 G + 114 B + 500) // 1000``."""
    a = np.asarray(rgb, dtype=np.int64)
    if a.ndim != 3 or a.shape[2] < 3:
        raise DomainError(f"expected an (h, w, 3) image, got shape {a.shape}")
    return ((299 * a[..., 0] + 587 * a[..., 1] + 114 * a[..., 2] + 500) // 1000).astype(np.uint8)


def load_image(path) -> np.ndarray:
    """Read a PNG or 8-bit TIFF as a grayscale uint8 array."""
    from PIL import Image

    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image not found: {path}")
    with Image.open(path) as im:
        mode = im.mode
        if mode == "L":
            return np.array(im, dtype=np.uint8)
        if mode == "1":
            return np.array(im.convert("L"), dtype=np.uint8)
        if mode in ("RGB", "RGBA", "P", "LA", "CMYK", "YCbCr"):
            return rgb_to_luma(np.array(im.convert("RGB")))
    raise DomainError(f"{path}: unsupported image mode {mode!r} (need 8-bit gray or RGB)")


def crop_margins(img, top=50, right=50, left=50, bottom=80) -> np.ndarray:
    a = as_gray(img)
    if min(top, right, left, bottom) < 0:
        raise DomainError("margins must be non-negative")
    h, w = a.shape
    if top + bottom >= h or left + right >= w:
        raise DomainError(f"margins ({top}, {right}, {left}, {bottom}) leave nothing of a {w}x{h} image")
    return a[top:h - bottom, left:w - right].copy()


def default_sigma(kernel_size: int) -> float:
    return 0.3 * ((kernel_size - 1) / 2 - 1) + 0.8


def gaussian_taps(kernel_size: int = 5, sigma=None) -> np.ndarray:
    """Integer 1-D Gaussian taps (fixed point with scale ``TAP_SCALE``)."""
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise DomainError(f"kernel_size must be a positive odd integer, got {kernel_size}")
    if kernel_size == 1:
        return np.array([1], dtype=np.int64)
    sigma = default_sigma(kernel_size) if sigma is None else float(sigma)
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    r = kernel_size // 2
    g = np.exp(-0.5 * (np.arange(-r, r + 1) / sigma) ** 2)
    return np.floor(TAP_SCALE * g / g.sum() + 0.5).astype(np.int64)


def gaussian_blur(img, kernel_size: int = 5, sigma=None) -> np.ndarray:
    """Separable Gaussian blur with replicated edges, rounded half up to 8 bits.

    The 2-D kernel is the outer product of :func:`gaussian_taps`; the sum is
    accumulated exactly in integers and divided once.
    """
    a = as_gray(img)
    taps = gaussian_taps(kernel_size, sigma)
    if taps.size == 1:
        return a.copy()
    return _backend.blur_u8(a, taps)


def porosity_fraction(img, threshold: int = DEFAULT_THRESHOLD) -> float:
    """Fraction of pixels strictly darker than ``threshold``."""
    a = as_gray(img)
    return int(np.count_nonzero(a < threshold)) / a.size


def pixel_histogram(img) -> np.ndarray:
    return np.bincount(as_gray(img).ravel(), minlength=256).astype(np.int64)


def process_image(img, margins=DEFAULT_MARGINS, kernel_size=5, sigma=None, threshold=DEFAULT_THRESHOLD):
    """Crop, blur and threshold; returns ``(porosity, processed image)``."""
    top, right, left, bottom = margins
    a = crop_margins(img, top, right, left, bottom)
    a = gaussian_blur(a, kernel_size, sigma)
    return porosity_fraction(a, threshold), a

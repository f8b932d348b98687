import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from fuselab.errors import DomainError
from fuselab.imaging import (
    crop_margins, default_sigma, gaussian_blur, gaussian_taps, load_image, pixel_histogram, porosity_fraction,
    process_image, rgb_to_luma,
)


def brute_blur(img, taps):
    """Direct 2-D convolution with the outer-product kernel, replicate edges, half-up rounding."""
    K = np.outer(taps, taps).astype(np.int64)
    r = len(taps) // 2
    h, w = img.shape
    out = np.empty((h, w), dtype=np.uint8)
    S = int(K.sum())
    for i in range(h):
        for j in range(w):
            acc = 0
            for a in range(-r, r + 1):
                for b in range(-r, r + 1):
                    ii = min(max(i + a, 0), h - 1)
                    jj = min(max(j + b, 0), w - 1)
                    acc += int(K[a + r, b + r]) * int(img[ii, jj])
            out[i, j] = (2 * acc + S) // (2 * S)
    return out


def test_crop_examples():
    img = np.zeros((200, 200), np.uint8)
    assert crop_margins(img).shape == (70, 100)
    np.testing.assert_array_equal(crop_margins(img, 0, 0, 0, 0), img)
    with pytest.raises(DomainError):
        crop_margins(np.zeros((99, 99), np.uint8))


def test_crop_oracle(rng):
    img = rng.integers(0, 256, (120, 150), dtype=np.uint8)
    out = crop_margins(img, 3, 5, 7, 11)
    np.testing.assert_array_equal(out, img[3:120 - 11, 7:150 - 5])


def test_blur_constant_and_identity(rng):
    c = np.full((20, 30), 137, np.uint8)
    np.testing.assert_array_equal(gaussian_blur(c), c)
    img = rng.integers(0, 256, (10, 10), dtype=np.uint8)
    np.testing.assert_array_equal(gaussian_blur(img, kernel_size=1), img)
    with pytest.raises(DomainError):
        gaussian_blur(img, kernel_size=4)


def test_blur_impulse_is_kernel_stamp():
    img = np.zeros((11, 11), np.uint8)
    img[5, 5] = 255
    taps = gaussian_taps(5)
    K = np.outer(taps, taps)
    S = int(K.sum())
    stamp = (2 * 255 * K + S) // (2 * S)
    out = gaussian_blur(img)
    np.testing.assert_array_equal(out[3:8, 3:8], stamp)
    assert out.sum() == stamp.sum()


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.sampled_from([3, 5, 7]), st.integers(0, 2**31 - 1))
def test_blur_bruteforce_oracle(h, w, k, seed):
    img = np.random.default_rng(seed).integers(0, 256, (h, w), dtype=np.uint8)
    np.testing.assert_array_equal(gaussian_blur(img, k), brute_blur(img, gaussian_taps(k)))


def test_default_sigma_rule():
    assert default_sigma(5) == pytest.approx(1.1)
    taps = gaussian_taps(5)
    assert taps.sum() == 4096 and list(taps) == list(taps[::-1])


def test_porosity_examples():
    assert porosity_fraction(np.full((10, 10), 150, np.uint8)) == 0.0
    img = np.full((100, 100), 200, np.uint8)
    img.flat[np.random.default_rng(0).choice(10000, 250, replace=False)] = 20
    assert porosity_fraction(img) == 0.025
    assert porosity_fraction(img, threshold=256) == 1.0


def test_threshold_is_strict():
    img = np.array([[74, 75, 76]], np.uint8)
    assert porosity_fraction(img) == pytest.approx(1 / 3)


@given(st.integers(0, 255), st.integers(0, 255))
def test_porosity_monotone_in_threshold(a, b):
    img = np.arange(256, dtype=np.uint8).reshape(16, 16)
    lo, hi = sorted((a, b))
    assert porosity_fraction(img, lo) <= porosity_fraction(img, hi)


def test_histogram(rng):
    img = np.full((7, 9), 42, np.uint8)
    h = pixel_histogram(img)
    assert h[42] == 63 and np.count_nonzero(h) == 1
    img = rng.integers(0, 256, (40, 50), dtype=np.uint8)
    h = pixel_histogram(img)
    ref = [0] * 256
    for v in img.ravel():
        ref[int(v)] += 1
    assert h.tolist() == ref and h.sum() == 2000


def _pore_image(fraction=0.05, size=(600, 700), radius=6, gap=10, pore=0, matrix=150, seed=0):
    """Disc pores on a flat matrix, at least ``gap`` px apart, inside the default crop window.

    Returns the image and its exact pore fraction over the cropped region.
    """
    h, w = size
    img = np.full((h, w), matrix, np.uint8)
    ih, iw = h - 130, w - 100
    yy, xx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    disc = yy**2 + xx**2 <= radius**2
    d = 2 * radius + 1
    step = d + gap
    slots = [(r, c) for r in range(0, ih - d + 1, step) for c in range(0, iw - d + 1, step)]
    n_pores = int(round(fraction * ih * iw / disc.sum()))
    pick = np.random.default_rng(seed).choice(len(slots), n_pores, replace=False)
    for k in pick:
        r, c = slots[k]
        block = img[50 + r:50 + r + d, 50 + c:50 + c + d]
        block[disc] = pore
    return img, n_pores * int(disc.sum()) / (ih * iw)


def test_pipeline_on_synthetic_pores():
    # threshold 75 sits in the valley between the pore (0) and matrix (150) modes
    img, truth = _pore_image()
    assert truth == pytest.approx(0.05, abs=1e-3)
    frac, _ = process_image(img)
    assert frac == pytest.approx(0.05, abs=0.005)


def test_blur_band_bound():
    img, _ = _pore_image(size=(400, 400), radius=5, gap=10, matrix=255, seed=3)
    before = porosity_fraction(img)
    after = porosity_fraction(gaussian_blur(img))
    n_pores = before * img.size / np.sum(np.add.outer(np.arange(-5, 6) ** 2, np.arange(-5, 6) ** 2) <= 25)
    perimeter = 2 * np.pi * 5
    bound = n_pores * perimeter * 2 / img.size
    assert abs(after - before) < bound


def test_load_png_gray_and_rgb(tmp_path, rng):
    g = rng.integers(0, 256, (20, 30), dtype=np.uint8)
    Image.fromarray(g, "L").save(tmp_path / "g.png")
    np.testing.assert_array_equal(load_image(tmp_path / "g.png"), g)
    rgb = rng.integers(0, 256, (5, 6, 3), dtype=np.uint8)
    Image.fromarray(rgb, "RGB").save(tmp_path / "c.png")
    luma = load_image(tmp_path / "c.png")
    r, gg, b = (rgb[..., i].astype(int) for i in range(3))
    np.testing.assert_array_equal(luma, (299 * r + 587 * gg + 114 * b + 500) // 1000)
    Image.fromarray(g, "L").save(tmp_path / "g.tif")
    np.testing.assert_array_equal(load_image(tmp_path / "g.tif"), g)


def test_rgb_luma_extremes():
    assert rgb_to_luma(np.array([[[255, 255, 255]]]))[0, 0] == 255
    assert rgb_to_luma(np.array([[[0, 0, 0]]]))[0, 0] == 0

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import qmc

from fuselab.domain import (
    DEFAULT_RANGES, ProcessParams, compute_ved, doe_unit_points, generate_doe, reduce_map_to_median,
    vickers_hv,
)
from fuselab.errors import DomainError


def test_ved_anchor_row():
    assert compute_ved(ProcessParams.from_um(233, 1471, 20, 71)) == pytest.approx(111.4, abs=0.2)


def test_ved_round_numbers():
    assert compute_ved(ProcessParams.from_um(100, 1000, 50, 100)) == pytest.approx(20.0, rel=1e-12)


def test_ved_hand_evaluated():
    # 400 / (150 * 0.070 * 0.020)
    assert compute_ved(ProcessParams.from_um(400, 150, 20, 70)) == pytest.approx(1904.7619047619, rel=1e-10)


@pytest.mark.parametrize("field", ["power", "speed", "layer_thickness", "hatch_spacing"])
def test_non_positive_field_named(field):
    kw = dict(power=200.0, speed=800.0, layer_thickness=0.03, hatch_spacing=0.1)
    kw[field] = 0.0
    with pytest.raises(DomainError, match=field):
        ProcessParams(**kw)


def test_scan_rotation_levels():
    with pytest.raises(DomainError):
        ProcessParams.from_um(200, 800, 30, 100, scan_rotation=45)


@given(st.floats(1, 500), st.floats(10, 2000), st.floats(5, 100), st.floats(20, 200))
def test_ved_homogeneity(p, v, l, h):
    base = compute_ved(ProcessParams.from_um(p, v, l, h))
    assert compute_ved(ProcessParams.from_um(2 * p, v, l, h)) == pytest.approx(2 * base, rel=1e-12)
    assert compute_ved(ProcessParams.from_um(p, 2 * v, l, h)) == pytest.approx(base / 2, rel=1e-12)
    assert compute_ved(ProcessParams.from_um(p, v, 2 * l, h)) == pytest.approx(base / 2, rel=1e-12)
    assert compute_ved(ProcessParams.from_um(p, v, l, 2 * h)) == pytest.approx(base / 2, rel=1e-12)


def test_doe_270_unique_in_bounds():
    pts = generate_doe(270)
    assert len(pts) == 270
    assert len({p.quantitative() + (p.scan_rotation,) for p in pts}) == 270
    for p in pts:
        for name, val in zip(("power", "speed", "layer_um", "hatch_um"), p.quantitative()):
            lo, hi = DEFAULT_RANGES[name]
            assert lo <= val <= hi
        assert p.scan_rotation in (67, 90)
    rots = [p.scan_rotation for p in pts]
    assert 0 < rots.count(67) < 270


def test_doe_single_point():
    (p,) = generate_doe(1)
    assert DEFAULT_RANGES["power"][0] <= p.power <= DEFAULT_RANGES["power"][1]


def test_doe_reproducible():
    a = [p.quantitative() for p in generate_doe(64, seed=3, scramble=True)]
    b = [p.quantitative() for p in generate_doe(64, seed=3, scramble=True)]
    assert a == b


def test_doe_degenerate_bounds():
    bad = dict(DEFAULT_RANGES, speed=(500, 500))
    with pytest.raises(DomainError, match="speed"):
        generate_doe(10, ranges=bad)


def test_doe_discrepancy_beats_uniform():
    u = doe_unit_points(1024)
    d_sobol = qmc.discrepancy(u, method="L2-star")
    d_rand = np.median([qmc.discrepancy(np.random.default_rng(s).random((1024, 5)), method="L2-star")
                        for s in range(20)])
    assert d_sobol < d_rand


def test_vickers_examples():
    assert vickers_hv(0.5, 0.05) == pytest.approx(370.88, rel=1e-12)
    assert vickers_hv(1.8544, 1.0) == pytest.approx(3.43879936, rel=1e-8)
    assert vickers_hv(0.5, 0.1) == pytest.approx(vickers_hv(0.5, 0.05) / 4, rel=1e-12)
    with pytest.raises(DomainError):
        vickers_hv(0.0, 0.05)
    with pytest.raises(DomainError):
        vickers_hv(0.5, -1.0)


def test_median_examples(rng):
    assert reduce_map_to_median([1, 2, 3]) == 2
    assert reduce_map_to_median([1, 2, 3, 100]) == 2.5
    with pytest.raises(DomainError):
        reduce_map_to_median([])
    draws = rng.normal(400, 20, 36)
    s = sorted(draws)
    assert reduce_map_to_median(draws) == (s[17] + s[18]) / 2


@settings(max_examples=50)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40), st.randoms())
def test_median_permutation_invariant_and_bounded(values, rnd):
    m = reduce_map_to_median(values)
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert reduce_map_to_median(shuffled) == m
    assert min(values) <= m <= max(values)

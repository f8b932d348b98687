"""Ground-truth campaign generator with analytic process-property relations.

The default family links the properties the way LPBF data tends to behave:
hardness saturates with energy density but also carries a term in power and
speed that energy density cannot express; porosity is high at low energy
density (lack of fusion) with a small keyhole rise at very high density;
yield strength is affine in hardness with a porosity penalty; ductility
first rises and then falls with yield strength.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .domain import DEFAULT_RANGES, CuboidRecord, TensileRecord, generate_doe, ved_array
from .errors import DomainError

FAMILIES = ("default",)


def _logistic(z):
    return 1.0 / (1.0 + np.exp(-z))


def _unit(a, name):
    lo, hi = DEFAULT_RANGES[name]
    return (np.asarray(a, dtype=float) - lo) / (hi - lo)


@dataclass(frozen=True)
class GroundTruth:
    """Noise-free property functions over arrays of process parameters (um for lengths)."""

    family: str = "default"
    rotation_effect: float = 0.0

    def hardness(self, power, speed, layer_um, hatch_um, scan_rot=90):
        ln_e = np.log(ved_array(power, speed, layer_um, hatch_um))
        p, v = _unit(power, "power"), _unit(speed, "speed")
        lt, hs = _unit(layer_um, "layer_um"), _unit(hatch_um, "hatch_um")
        consolidation = _logistic((ln_e - np.log(60.0)) / 0.45)
        embrittlement = _logistic((ln_e - np.log(260.0)) / 0.3)
        off_ved = 18.0 * np.sin(np.pi * p) * np.cos(0.5 * np.pi * v) + 10.0 * lt * (1.0 - hs)
        rot = self.rotation_effect * (np.asarray(scan_rot, dtype=float) == 67)
        return 300.0 + 110.0 * consolidation + 45.0 * embrittlement + off_ved + rot

    def porosity(self, power, speed, layer_um, hatch_um, scan_rot=90):
        ln_e = np.log(ved_array(power, speed, layer_um, hatch_um))
        lack_of_fusion = 1.0 - _logistic((ln_e - np.log(45.0)) / 0.35)
        keyhole = _logistic((ln_e - np.log(500.0)) / 0.3)
        return 0.002 + 0.14 * lack_of_fusion + 0.008 * keyhole

    def yield_strength(self, power, speed, layer_um, hatch_um, scan_rot=90):
        h = self.hardness(power, speed, layer_um, hatch_um, scan_rot)
        p = self.porosity(power, speed, layer_um, hatch_um, scan_rot)
        return -420.0 + 3.6 * h - 3000.0 * p

    def ductility(self, power, speed, layer_um, hatch_um, scan_rot=90):
        ys = self.yield_strength(power, speed, layer_um, hatch_um, scan_rot)
        p = self.porosity(power, speed, layer_um, hatch_um, scan_rot)
        return 1.0 + 17.0 * np.exp(-(((ys - 1000.0) / 300.0) ** 2)) * (1.0 - 3.0 * p)

    def evaluate(self, params):
        """Dict of noise-free property arrays for a list of :class:`ProcessParams`."""
        cols = np.array([p.quantitative() for p in params], dtype=float).reshape(-1, 4)
        sr = np.array([p.scan_rotation for p in params])
        args = (*cols.T, sr)
        return {
            "hardness": self.hardness(*args),
            "porosity": self.porosity(*args),
            "yield_strength": self.yield_strength(*args),
            "ductility": self.ductility(*args),
        }


@dataclass(frozen=True)
class CampaignSpec:
    """Settings for :func:`generate_campaign`; noise entries are variances in data units."""

    n_cuboid: int = 270
    n_tensile: int = 54
    seed: int = 0
    family: str = "default"
    noise: dict = field(default_factory=lambda: {
        "hardness": 36.0, "porosity": 4e-6, "yield_strength": 625.0, "ductility": 1.44,
    })
    subset: bool = True
    rotation_effect: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown ground-truth family {self.family!r}")
        for key in ("hardness", "porosity", "yield_strength", "ductility"):
            if self.noise.get(key, 0.0) < 0:
                raise DomainError(f"noise variance for {key} must be >= 0")
        if self.n_cuboid < 1 or self.n_tensile < 0:
            raise DomainError("sample counts must be positive")
        if self.subset and self.n_tensile > self.n_cuboid:
            raise DomainError("a tensile subset cannot exceed the cuboid count")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        noise = {**cls().noise, **d.pop("noise", {})}
        return cls(noise=noise, **d)


def generate_campaign(spec: CampaignSpec = CampaignSpec()):
    """Return ``(cuboids, tensile, truth)`` for ``spec``."""
    truth = GroundTruth(spec.family, spec.rotation_effect)
    cub_rng, ten_rng, pick_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(spec.seed).spawn(3))

    params = generate_doe(spec.n_cuboid)
    true_c = truth.evaluate(params)

    def noisy(key, values, gen):
        sd = float(np.sqrt(spec.noise.get(key, 0.0)))
        if sd == 0.0:
            return values.copy()
        return values + gen.normal(0.0, sd, size=values.shape)

    hard = noisy("hardness", true_c["hardness"], cub_rng)
    por = np.clip(noisy("porosity", true_c["porosity"], cub_rng), 0.0, 1.0)
    cuboids = [CuboidRecord(i + 1, p, float(po), float(h)) for i, (p, po, h) in enumerate(zip(params, por, hard))]

    if spec.subset:
        idx = np.sort(pick_rng.choice(spec.n_cuboid, size=spec.n_tensile, replace=False))
        t_params = [params[i] for i in idx]
        t_ids = [int(i) + 1 for i in idx]
    else:
        t_params = generate_doe(spec.n_tensile, seed=spec.seed, scramble=True)
        t_ids = list(range(1, spec.n_tensile + 1))
    true_t = truth.evaluate(t_params)
    ys = noisy("yield_strength", true_t["yield_strength"], ten_rng)
    ef = np.clip(noisy("ductility", true_t["ductility"], ten_rng), 0.0, None)
    uts = ys * 1.08 + 30.0
    tensile = [TensileRecord(i, p, float(a), float(b), float(c))
               for i, p, a, b, c in zip(t_ids, t_params, ys, ef, uts)]
    return cuboids, tensile, truth

"""Process-parameter types, energy density, DOE sampling and measurement reduction."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .errors import DomainError

SCAN_ROTATIONS = (67, 90)

#: DOE bounds in user units (W, mm/s, um, um).
DEFAULT_RANGES = {
    "power": (80.0, 400.0),
    "speed": (150.0, 1500.0),
    "layer_um": (20.0, 75.0),
    "hatch_um": (70.0, 120.0),
}
QUANT_NAMES = ("power", "speed", "layer_um", "hatch_um")

VICKERS_CONSTANT = 1.8544


@dataclass(frozen=True)
class ProcessParams:
    """One LPBF parameter combination.

    Lengths are held in millimetres internally; use :meth:`from_um` to build
    from the micrometre values found in data files.
    """

    power: float
    speed: float
    layer_thickness: float
    hatch_spacing: float
    scan_rotation: int = 90

    def __post_init__(self):
        for name in ("power", "speed", "layer_thickness", "hatch_spacing"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float, np.floating, np.integer)) and math.isfinite(value)) or value <= 0:
                raise DomainError(f"{name} must be strictly positive, got {value!r}")
        if int(self.scan_rotation) not in SCAN_ROTATIONS or self.scan_rotation != int(self.scan_rotation):
            raise DomainError(f"scan_rotation must be one of {SCAN_ROTATIONS}, got {self.scan_rotation!r}")

    @classmethod
    def from_um(cls, power, speed, layer_um, hatch_um, scan_rotation=90):
        return cls(float(power), float(speed), float(layer_um) / 1000.0,
                   float(hatch_um) / 1000.0, int(scan_rotation))

    @property
    def layer_um(self) -> float:
        return self.layer_thickness * 1000.0

    @property
    def hatch_um(self) -> float:
        return self.hatch_spacing * 1000.0

    def quantitative(self) -> tuple:
        """Feature tuple ``(power, speed, layer_um, hatch_um)``."""
        return (self.power, self.speed, self.layer_um, self.hatch_um)


@dataclass(frozen=True)
class CuboidRecord:
    id: int
    params: ProcessParams
    porosity: float
    hardness: float

    def __post_init__(self):
        if not (0.0 <= self.porosity <= 1.0):
            raise DomainError(f"cuboid {self.id}: porosity must lie in [0, 1], got {self.porosity}")
        if not (self.hardness > 0 and math.isfinite(self.hardness)):
            raise DomainError(f"cuboid {self.id}: hardness must be positive, got {self.hardness}")


@dataclass(frozen=True)
class TensileRecord:
    id: int
    params: ProcessParams
    yield_strength: float
    ductility: float
    ultimate_strength: Optional[float] = None
    replicate_values: Optional[tuple] = field(default=None, compare=False)

    def __post_init__(self):
        if not math.isfinite(self.yield_strength):
            raise DomainError(f"tensile {self.id}: yield strength must be finite")
        if not (self.ductility >= 0 and math.isfinite(self.ductility)):
            raise DomainError(f"tensile {self.id}: ductility must be >= 0, got {self.ductility}")
        if self.ultimate_strength is not None and self.yield_strength > self.ultimate_strength:
            raise DomainError(
                f"tensile {self.id}: yield strength {self.yield_strength} exceeds "
                f"ultimate strength {self.ultimate_strength}"
            )


def compute_ved(params: ProcessParams) -> float:
    """Volumetric energy density in J/mm^3: ``P / (v * h * l)``."""
    for name in ("power", "speed", "layer_thickness", "hatch_spacing"):
        if getattr(params, name) <= 0:
            raise DomainError(f"{name} must be strictly positive")
    return params.power / (params.speed * params.hatch_spacing * params.layer_thickness)


def ved_array(power, speed, layer_um, hatch_um):
    """Vectorised :func:`compute_ved` over arrays in user units (um for lengths)."""
    power, speed, layer_um, hatch_um = (np.asarray(a, dtype=float) for a in (power, speed, layer_um, hatch_um))
    if np.any(power <= 0) or np.any(speed <= 0) or np.any(layer_um <= 0) or np.any(hatch_um <= 0):
        raise DomainError("all process parameters must be strictly positive")
    return power / (speed * (hatch_um / 1000.0) * (layer_um / 1000.0))


def _check_ranges(ranges):
    out = {}
    for name in QUANT_NAMES:
        if name not in ranges:
            raise DomainError(f"missing bounds for {name}")
        lo, hi = (float(v) for v in ranges[name])
        if not lo < hi:
            raise DomainError(f"degenerate bounds for {name}: min {lo} >= max {hi}")
        if lo <= 0:
            raise DomainError(f"lower bound for {name} must be positive")
        out[name] = (lo, hi)
    return out


def sobol_unit_points(n: int, dim: int, seed: int = 0, scramble: bool = False) -> np.ndarray:
    """First ``n`` points of a ``dim``-dimensional Sobol sequence in ``[0, 1)``."""
    if n < 1:
        raise DomainError("n must be >= 1")
    engine = qmc.Sobol(d=dim, scramble=scramble, seed=seed if scramble else None)
    with warnings.catch_warnings():
        # balance warning for non powers of two
        warnings.simplefilter("ignore", UserWarning)
        return engine.random(n)


def doe_unit_points(n: int, seed: int = 0, scramble: bool = False) -> np.ndarray:
    """Unit-cube pre-image of :func:`generate_doe` (columns: 4 quantitative + rotation)."""
    return sobol_unit_points(n, 5, seed=seed, scramble=scramble)


def scale_unit_points(u: np.ndarray, ranges=None) -> list:
    ranges = _check_ranges(ranges or DEFAULT_RANGES)
    out = []
    for row in np.atleast_2d(u):
        vals = [lo + row[i] * (hi - lo) for i, (lo, hi) in enumerate(ranges[name] for name in QUANT_NAMES)]
        sr = SCAN_ROTATIONS[1] if row[4] >= 0.5 else SCAN_ROTATIONS[0]
        out.append(ProcessParams.from_um(*vals, scan_rotation=sr))
    return out


def generate_doe(n: int, ranges=None, seed: int = 0, scramble: bool = False) -> list:
    """Low-discrepancy design of ``n`` process-parameter combinations.

    The fifth Sobol coordinate picks the scan rotation (``< 0.5`` gives 67).
    Without scrambling the design does not depend on ``seed``.
    """
    ranges = _check_ranges(ranges or DEFAULT_RANGES)
    return scale_unit_points(doe_unit_points(n, seed=seed, scramble=scramble), ranges)


def vickers_hv(force: float, mean_diagonal: float) -> float:
    """Vickers hardness from indentation force (kgf) and mean diagonal (mm)."""
    if force <= 0:
        raise DomainError(f"force must be positive, got {force}")
    if mean_diagonal <= 0:
        raise DomainError(f"mean diagonal must be positive, got {mean_diagonal}")
    return VICKERS_CONSTANT * force / mean_diagonal**2


def reduce_map_to_median(values: Sequence[float]) -> float:
    """Median of an indentation map (mean of the two central values for even counts)."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        raise DomainError("cannot take the median of an empty measurement list")
    return float(np.median(arr))

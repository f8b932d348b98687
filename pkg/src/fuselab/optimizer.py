"""Screening optimizer over the process-parameter box and two-parameter design maps."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .domain import DEFAULT_RANGES, QUANT_NAMES, ProcessParams, _check_ranges, doe_unit_points, scale_unit_points, ved_array
from .errors import DomainError
from .fusion import HierarchyPipeline, predict_tensile

RANK_MODES = ("ys", "ef", "combined")
SAMPLERS = ("sobol", "uniform")


@dataclass(frozen=True)
class Filters:
    """Screening thresholds; None disables a filter. VED bounds are inclusive, property minima strict."""

    ved_min: Optional[float] = 100.0
    ved_max: Optional[float] = 200.0
    ys_min: Optional[float] = 1000.0
    ef_min: Optional[float] = 12.0

    def to_dict(self):
        return asdict(self)


def _predictor(pipeline):
    if isinstance(pipeline, HierarchyPipeline):
        return lambda params: predict_tensile(pipeline, params)
    if callable(pipeline):
        return pipeline
    raise DomainError("pipeline must be a HierarchyPipeline or a prediction callable")


@dataclass
class CandidateSet:
    """Screened candidates in sample order with per-filter flags.

    ``ys_scale``/``ef_scale`` are the spreads of the predicted means over the
    whole sample; they put the two predictive sds on a common scale for the
    combined uncertainty ranking.
    """

    params: list
    ys: np.ndarray
    ys_sd: np.ndarray
    ef: np.ndarray
    ef_sd: np.ndarray
    ved: np.ndarray
    flags: dict
    filters: Filters
    seed: int
    sampler: str
    ys_scale: float = 1.0
    ef_scale: float = 1.0

    def __len__(self):
        return len(self.params)

    @property
    def passed(self) -> np.ndarray:
        ok = np.ones(len(self), dtype=bool)
        for f in self.flags.values():
            ok &= f
        return ok

    @property
    def objective(self) -> np.ndarray:
        return log_objective(self.ys, self.ef)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return CandidateSet(
            [self.params[i] for i in idx], self.ys[idx], self.ys_sd[idx], self.ef[idx], self.ef_sd[idx],
            self.ved[idx], {k: v[idx] for k, v in self.flags.items()}, self.filters, self.seed, self.sampler,
            self.ys_scale, self.ef_scale,
        )

    def passing(self):
        return self.subset(np.flatnonzero(self.passed))


def log_objective(ys, ef):
    """``log(ys) + log(ef)`` with NaN wherever either prediction is non-positive."""
    ys = np.asarray(ys, dtype=float)
    ef = np.asarray(ef, dtype=float)
    out = np.full(np.broadcast(ys, ef).shape, np.nan)
    ok = (ys > 0) & (ef > 0)
    out[ok] = np.log(np.broadcast_to(ys, out.shape)[ok]) + np.log(np.broadcast_to(ef, out.shape)[ok])
    return out


def apply_filters(ved, ys, ef, filters: Filters) -> dict:
    n = len(ved)
    flags = {}
    lo = -np.inf if filters.ved_min is None else filters.ved_min
    hi = np.inf if filters.ved_max is None else filters.ved_max
    flags["ved"] = (ved >= lo) & (ved <= hi) if (filters.ved_min is not None or filters.ved_max is not None) \
        else np.ones(n, dtype=bool)
    flags["ys"] = ys > filters.ys_min if filters.ys_min is not None else np.ones(n, dtype=bool)
    flags["ef"] = ef > filters.ef_min if filters.ef_min is not None else np.ones(n, dtype=bool)
    return flags


def sample_candidates(n, ranges=None, seed=0, sampler="sobol"):
    if n < 1:
        raise DomainError("n must be >= 1")
    if sampler == "sobol":
        u = doe_unit_points(n, seed=seed, scramble=True)
    elif sampler == "uniform":
        u = np.random.default_rng(seed).random((n, 5))
    else:
        raise DomainError(f"unknown sampler {sampler!r}; expected one of {SAMPLERS}")
    return scale_unit_points(u, _full_ranges(ranges))


def screen(pipeline, n=10000, ranges=None, filters: Optional[Filters] = None, seed=0, sampler="sobol") -> CandidateSet:
    """Sample ``n`` parameter sets, predict strength and ductility, and flag them against ``filters``.

    ``pipeline`` is a trained :class:`HierarchyPipeline` or any callable
    mapping a list of :class:`ProcessParams` to an object with ``ys_mean``,
    ``ys_sd``, ``ef_mean`` and ``ef_sd`` arrays.
    """
    filters = filters or Filters()
    params = sample_candidates(n, ranges, seed, sampler)
    pred = _predictor(pipeline)(params)
    q = np.array([p.quantitative() for p in params])
    ved = ved_array(*q.T)
    ys, ef = np.asarray(pred.ys_mean, float), np.asarray(pred.ef_mean, float)
    flags = apply_filters(ved, ys, ef, filters)
    ys_scale = float(ys.std()) or 1.0
    ef_scale = float(ef.std()) or 1.0
    return CandidateSet(params, ys, np.asarray(pred.ys_sd, float), ef, np.asarray(pred.ef_sd, float), ved,
                        flags, filters, seed, sampler, ys_scale, ef_scale)


def uncertainty_key(cset: CandidateSet, mode="combined") -> np.ndarray:
    if mode == "ys":
        return cset.ys_sd
    if mode == "ef":
        return cset.ef_sd
    if mode == "combined":
        return np.sqrt((cset.ys_sd / cset.ys_scale) ** 2 + (cset.ef_sd / cset.ef_scale) ** 2)
    raise DomainError(f"unknown ranking mode {mode!r}; expected one of {RANK_MODES}")


def rank_by_uncertainty(cset: CandidateSet, mode="combined") -> np.ndarray:
    """Indices into ``cset`` sorted by ascending predictive uncertainty (stable)."""
    if len(cset) == 0:
        raise DomainError("cannot rank an empty candidate set")
    return np.argsort(uncertainty_key(cset, mode), kind="stable")


# ---------------------------------------------------------------------------
# design maps

@dataclass
class DesignMap:
    """Rectilinear prediction grid; arrays are indexed ``[iy, ix]``."""

    x_name: str
    y_name: str
    x: np.ndarray
    y: np.ndarray
    fixed: dict
    ys: np.ndarray
    ef: np.ndarray
    ved: np.ndarray
    isolines: dict = field(default_factory=dict)

    @property
    def objective(self):
        return log_objective(self.ys, self.ef)

    def rows(self):
        """Long-form records ``(x, y, ved, ys, ef, objective)``, x varying fastest."""
        obj = self.objective
        for iy, yv in enumerate(self.y):
            for ix, xv in enumerate(self.x):
                o = obj[iy, ix]
                yield (xv, yv, self.ved[iy, ix], self.ys[iy, ix], self.ef[iy, ix], None if np.isnan(o) else o)


def _full_ranges(ranges):
    r = dict(DEFAULT_RANGES)
    if ranges:
        r.update(ranges)
    _check_ranges(r)
    return r


def ved_isoline(level, x_name, y_name, x_values, fixed, ranges=None):
    """Points ``(x, y)`` on which VED equals ``level`` with the remaining inputs held at ``fixed``.

    VED is ``p / (v * h * l)``, so along the grid's x values the y coordinate
    follows in closed form; points outside the y range are dropped.
    """
    if level <= 0:
        raise DomainError("VED level must be positive")
    r = _full_ranges(ranges)
    vals = {k: float(v) for k, v in fixed.items() if k in QUANT_NAMES}
    x_values = np.asarray(x_values, dtype=float)
    vals[x_name] = x_values
    scale = {"power": 1.0, "speed": 1.0, "layer_um": 1e-3, "hatch_um": 1e-3}
    denom_names = [k for k in ("speed", "layer_um", "hatch_um") if k != y_name]
    prod = 1.0
    for k in denom_names:
        prod = prod * (vals[k] * scale[k])
    if y_name == "power":
        y = level * prod
    else:
        y = vals["power"] / (level * prod) / scale[y_name]
    y = np.broadcast_to(y, x_values.shape)
    lo, hi = r[y_name]
    keep = (y >= lo) & (y <= hi)
    return np.column_stack([x_values[keep], y[keep]])


def design_map(pipeline, free=("power", "speed"), fixed=None, resolution=200, ranges=None,
               ved_levels=(100.0, 200.0)) -> DesignMap:
    """Predict ``ys`` and ``ef`` on a grid over two free parameters.

    ``fixed`` supplies values for the two remaining quantitative inputs and
    optionally ``scan_rot`` (default 90). ``resolution`` is an int or an
    ``(nx, ny)`` pair.
    """
    x_name, y_name = free
    if x_name == y_name or x_name not in QUANT_NAMES or y_name not in QUANT_NAMES:
        raise DomainError(f"free axes must be two distinct names from {QUANT_NAMES}")
    fixed = dict(fixed or {})
    r = _full_ranges(ranges)
    missing = [k for k in QUANT_NAMES if k not in free and k not in fixed]
    if missing:
        raise DomainError(f"missing fixed values for {missing}")
    for k, v in fixed.items():
        if k in QUANT_NAMES and not r[k][0] <= v <= r[k][1]:
            raise DomainError(f"fixed {k}={v} outside range {r[k]}")
    nx, ny = (resolution, resolution) if np.isscalar(resolution) else resolution
    if nx < 2 or ny < 2:
        raise DomainError("resolution must be >= 2 per axis")
    xs = np.linspace(*r[x_name], int(nx))
    ys_axis = np.linspace(*r[y_name], int(ny))
    gx, gy = np.meshgrid(xs, ys_axis)
    cols = {k: np.full(gx.size, float(fixed[k])) for k in QUANT_NAMES if k in fixed}
    cols[x_name] = gx.ravel()
    cols[y_name] = gy.ravel()
    rot = int(fixed.get("scan_rot", 90))
    params = [ProcessParams.from_um(p, v, l, h, rot)
              for p, v, l, h in zip(cols["power"], cols["speed"], cols["layer_um"], cols["hatch_um"])]
    pred = _predictor(pipeline)(params)
    shape = gx.shape
    ved = ved_array(cols["power"], cols["speed"], cols["layer_um"], cols["hatch_um"]).reshape(shape)
    iso = {float(lv): ved_isoline(lv, x_name, y_name, xs, fixed, r) for lv in ved_levels}
    return DesignMap(x_name, y_name, xs, ys_axis, fixed, np.asarray(pred.ys_mean, float).reshape(shape),
                     np.asarray(pred.ef_mean, float).reshape(shape), ved, iso)

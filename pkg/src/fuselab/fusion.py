"""Source-indicator data fusion and the four-stage hardness -> porosity -> strength -> ductility hierarchy."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .dataset import MixedDataset
from .domain import QUANT_NAMES, SCAN_ROTATIONS
from .errors import DomainError, FuselabError, TrainingError
from .gp import GpConfig, GpModel, fit

log = logging.getLogger(__name__)

VERSION = "pipeline_v1"
SOURCE = "source"
ROTATION = "scan_rot"
STAGES = ("h", "ep", "ys", "ef")


def engineered_porosity(hardness_pred, porosity):
    """``hardness_pred * exp(porosity)``; amplifies tiny porosity differences."""
    porosity = np.asarray(porosity, dtype=float)
    if np.any(porosity < 0) or np.any(porosity > 1):
        raise DomainError("porosity must lie in [0, 1]")
    out = np.asarray(hardness_pred, dtype=float) * np.exp(porosity)
    return float(out) if out.ndim == 0 else out


def concat(datasets) -> MixedDataset:
    """Row-concatenate datasets that share a schema, without adding a source column."""
    datasets = list(datasets)
    first = datasets[0]
    for d in datasets[1:]:
        _check_same_schema(first, d)
    return MixedDataset(np.vstack([d.X for d in datasets]), np.vstack([d.T for d in datasets]),
                        np.concatenate([d.y for d in datasets]), first.x_names, first.cat_names, first.cat_levels)


def _check_same_schema(a: MixedDataset, b: MixedDataset):
    problems = []
    if a.x_names != b.x_names:
        only_a = [c for c in a.x_names if c not in b.x_names]
        only_b = [c for c in b.x_names if c not in a.x_names]
        problems.append(f"quantitative columns differ (only in first: {only_a}, only in second: {only_b}, "
                        f"order {list(a.x_names)} vs {list(b.x_names)})")
    if a.cat_names != b.cat_names or a.cat_levels != b.cat_levels:
        problems.append(f"categorical columns differ ({list(a.cat_names)} vs {list(b.cat_names)})")
    if problems:
        raise DomainError("schema conflict: " + "; ".join(problems))


def fuse(datasets, source_name: str = SOURCE) -> MixedDataset:
    """Stack ``(tag, dataset)`` pairs and append a categorical source column.

    Rows keep dataset order, then original order; the source column has one
    level per tag, in the order given.
    """
    datasets = list(datasets)
    if len(datasets) < 2:
        raise DomainError("fusion needs at least two datasets")
    tags = [str(t) for t, _ in datasets]
    if len(set(tags)) != len(tags):
        raise DomainError(f"source tags must be unique, got {tags}")
    if source_name in datasets[0][1].cat_names:
        raise DomainError(f"datasets already carry a {source_name!r} column")
    stacked = concat([d for _, d in datasets])
    src = np.concatenate([np.full(d.n, j, dtype=np.int64) for j, (_, d) in enumerate(datasets)])
    return MixedDataset(stacked.X, np.column_stack([stacked.T, src]), stacked.y, stacked.x_names,
                        stacked.cat_names + (source_name,), stacked.cat_levels + (tuple(tags),))


# ---------------------------------------------------------------------------
# hierarchy

def default_stage_configs():
    return {
        "h": GpConfig(),
        "ep": GpConfig(),
        "ys": GpConfig(mean="ffnn", hidden=(2, 2, 2), dropout=0.2, source_dependent=True, source_column=SOURCE),
        "ef": GpConfig(mean="ffnn", hidden=(2, 2), dropout=0.2, source_dependent=True, source_column=SOURCE),
    }


@dataclass
class HierarchyConfig:
    stages: dict = field(default_factory=default_stage_configs)
    include_rotation: bool = False
    seed: int = 0

    def to_dict(self):
        return {"stages": {k: v.to_dict() for k, v in self.stages.items()},
                "include_rotation": self.include_rotation, "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        stages = default_stage_configs()
        for k, v in d.get("stages", {}).items():
            stages[k] = GpConfig.from_dict(v)
        return cls(stages, bool(d.get("include_rotation", False)), int(d.get("seed", 0)))

    def with_overrides(self, **gp_overrides):
        """Copy with the same GpConfig field overrides applied to every stage."""
        return replace(self, stages={k: replace(v, **gp_overrides) for k, v in self.stages.items()})


WIRING = {
    "h": {"inputs": list(QUANT_NAMES), "response": "hardness_hv"},
    "ep": {"inputs": list(QUANT_NAMES) + ["h_pred"], "response": "ep"},
    "ys": {"inputs": list(QUANT_NAMES) + ["h_pred", "ep_pred"], "response": "ys_mpa", "sources": ["H", "YS"]},
    "ef": {"inputs": list(QUANT_NAMES) + ["h_pred", "ep_pred", "ys_pred"], "response": "ef_pct",
           "sources": ["H", "EF"]},
}


def _param_block(params, include_rotation):
    X = np.array([p.quantitative() for p in params], dtype=float).reshape(len(params), 4)
    if include_rotation:
        T = np.array([[SCAN_ROTATIONS.index(int(p.scan_rotation))] for p in params], dtype=np.int64).reshape(-1, 1)
        return X, T, (ROTATION,), (tuple(str(r) for r in SCAN_ROTATIONS),)
    return X, np.zeros((len(params), 0), dtype=np.int64), (), ()


def _dataset(params, extra, names, y, include_rotation):
    X, T, cn, cl = _param_block(params, include_rotation)
    if extra:
        X = np.column_stack([X] + [np.asarray(e, dtype=float) for e in extra])
    return MixedDataset(X, T, y, tuple(list(QUANT_NAMES) + list(names)), cn, cl)


def _with_source(X, T, level):
    return X, np.column_stack([T, np.full(X.shape[0], level, dtype=np.int64)])


@dataclass(frozen=True)
class TensilePrediction:
    """Chained predictions for a batch of process parameters.

    ``dummy_hardness*`` come from the fused strength stage evaluated with the
    cuboid source tag; they only exist to enable fusion and carry no
    physical meaning (``dummy_is_physical`` is always False).
    """

    ys_mean: np.ndarray
    ys_sd: np.ndarray
    ef_mean: np.ndarray
    ef_sd: np.ndarray
    h_pred: np.ndarray
    ep_pred: np.ndarray
    dummy_hardness: np.ndarray
    dummy_hardness_sd: np.ndarray
    dummy_is_physical: bool = False

    def __len__(self):
        return len(self.ys_mean)


@dataclass(frozen=True, eq=False)
class HierarchyPipeline:
    gp_h: GpModel
    gp_ep: GpModel
    gp_ys: GpModel
    gp_ef: GpModel
    include_rotation: bool = False
    config: HierarchyConfig = field(default_factory=HierarchyConfig)
    wiring: dict = field(default_factory=lambda: {k: dict(v) for k, v in WIRING.items()})

    @property
    def stages(self):
        return {"h": self.gp_h, "ep": self.gp_ep, "ys": self.gp_ys, "ef": self.gp_ef}

    # feature chain --------------------------------------------------------
    def _base(self, params):
        X, T, _, _ = _param_block(params, self.include_rotation)
        return X, T

    def predict_hardness(self, params):
        X, T = self._base(params)
        mu, var = self.gp_h.predict(X, T)
        return mu, np.sqrt(var)

    def predict_ep(self, params, h_pred=None):
        X, T = self._base(params)
        if h_pred is None:
            h_pred, _ = self.gp_h.predict(X, T)
        mu, var = self.gp_ep.predict(np.column_stack([X, h_pred]), T)
        return mu, np.sqrt(var)

    def _ys(self, X, T, h, ep, level):
        Xs, Ts = _with_source(np.column_stack([X, h, ep]), T, level)
        mu, var = self.gp_ys.predict(Xs, Ts)
        return mu, np.sqrt(var)

    def _ef(self, X, T, h, ep, ys, level):
        Xs, Ts = _with_source(np.column_stack([X, h, ep, ys]), T, level)
        mu, var = self.gp_ef.predict(Xs, Ts)
        return mu, np.sqrt(var)

    def to_dict(self):
        return {
            "version": VERSION,
            "include_rotation": self.include_rotation,
            "config": self.config.to_dict(),
            "wiring": self.wiring,
            "stages": {k: m.to_dict() for k, m in self.stages.items()},
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != VERSION:
            raise DomainError(f"unsupported pipeline version {d.get('version')!r}")
        st = {k: GpModel.from_dict(d["stages"][k]) for k in STAGES}
        return cls(st["h"], st["ep"], st["ys"], st["ef"], bool(d["include_rotation"]),
                   HierarchyConfig.from_dict(d["config"]), d["wiring"])


def _fit_stage(name, data, config, seed):
    try:
        return fit(data, config, seed=seed)
    except FuselabError as exc:
        if isinstance(exc, TrainingError):
            raise TrainingError(str(exc), stage=name, diagnostics=exc.diagnostics) from exc
        raise type(exc)(f"[{name}] {exc}") from exc


def train_upstream(cuboids, config: Optional[HierarchyConfig] = None):
    """Fit the hardness and engineered-porosity stages from cuboid data only."""
    config = config or HierarchyConfig()
    if not cuboids:
        raise DomainError("cuboid dataset is empty")
    params = [c.params for c in cuboids]
    hard = np.array([c.hardness for c in cuboids])
    por = np.array([c.porosity for c in cuboids])
    d_h = _dataset(params, [], [], hard, config.include_rotation)
    gp_h = _fit_stage("h", d_h, config.stages["h"], config.seed)
    h_hat, _ = gp_h.predict(d_h.X, d_h.T)
    ep = engineered_porosity(h_hat, por)
    d_ep = _dataset(params, [h_hat], ["h_pred"], ep, config.include_rotation)
    gp_ep = _fit_stage("ep", d_ep, config.stages["ep"], config.seed + 1)
    return gp_h, gp_ep


def build_strength_dataset(gp_h, gp_ep, cuboids, tensile, include_rotation=False) -> MixedDataset:
    """Fused strength-stage data: cuboid hardness (tag H) + tensile yield strength (tag YS)."""
    if not tensile:
        raise DomainError("stage ys: tensile dataset is empty")
    pipe = _Partial(gp_h, gp_ep, include_rotation)
    c_params = [c.params for c in cuboids]
    t_params = [t.params for t in tensile]
    c_h, c_ep = pipe.features(c_params)
    t_h, t_ep = pipe.features(t_params)
    names = ["h_pred", "ep_pred"]
    d_c = _dataset(c_params, [c_h, c_ep], names, [c.hardness for c in cuboids], include_rotation)
    d_t = _dataset(t_params, [t_h, t_ep], names, [t.yield_strength for t in tensile], include_rotation)
    return fuse([("H", d_c), ("YS", d_t)])


class _Partial:
    def __init__(self, gp_h, gp_ep, include_rotation):
        self.gp_h, self.gp_ep, self.include_rotation = gp_h, gp_ep, include_rotation

    def features(self, params):
        X, T, _, _ = _param_block(params, self.include_rotation)
        h, _ = self.gp_h.predict(X, T)
        ep, _ = self.gp_ep.predict(np.column_stack([X, h]), T)
        return h, ep


def train_hierarchy(cuboids, tensile, config: Optional[HierarchyConfig] = None,
                    upstream: Optional[tuple] = None) -> HierarchyPipeline:
    """Train H -> EP -> YS -> EF in order.

    Downstream stages see only predicted upstream features. ``upstream`` may
    pass an already fitted ``(gp_h, gp_ep)`` pair trained on the same cuboids.
    """
    config = config or HierarchyConfig()
    if not cuboids:
        raise DomainError("cuboid dataset is empty")
    if not tensile:
        raise DomainError("stages ys/ef need tensile data: tensile dataset is empty")
    gp_h, gp_ep = upstream if upstream is not None else train_upstream(cuboids, config)
    inc = config.include_rotation

    d_ys = build_strength_dataset(gp_h, gp_ep, cuboids, tensile, inc)
    gp_ys = _fit_stage("ys", d_ys, config.stages["ys"], config.seed + 2)

    # ductility stage: every row also gets the predicted yield strength
    ys_level = d_ys.cat_levels[-1].index("YS")
    Xb, Tb = d_ys.X, d_ys.T[:, :-1]
    Xq, Tq = _with_source(Xb, Tb, ys_level)
    ys_hat, _ = gp_ys.predict(Xq, Tq)
    n_c = len(cuboids)
    names = ["h_pred", "ep_pred", "ys_pred"]
    X_ef = np.column_stack([Xb, ys_hat])
    cn, cl = d_ys.cat_names[:-1], d_ys.cat_levels[:-1]
    d_c = MixedDataset(X_ef[:n_c], Tb[:n_c], [c.hardness for c in cuboids], tuple(QUANT_NAMES) + tuple(names), cn, cl)
    d_t = MixedDataset(X_ef[n_c:], Tb[n_c:], [t.ductility for t in tensile], tuple(QUANT_NAMES) + tuple(names), cn, cl)
    d_ef = fuse([("H", d_c), ("EF", d_t)])
    gp_ef = _fit_stage("ef", d_ef, config.stages["ef"], config.seed + 3)
    return HierarchyPipeline(gp_h, gp_ep, gp_ys, gp_ef, inc, config)


def predict_tensile(pipeline: HierarchyPipeline, params) -> TensilePrediction:
    """Chain the four stages (means only are propagated) for a batch of parameters."""
    params = list(params)
    if not params:
        e = np.zeros(0)
        return TensilePrediction(e, e, e, e, e, e, e, e)
    X, T = pipeline._base(params)
    h, _ = pipeline.gp_h.predict(X, T)
    ep, _ = pipeline.gp_ep.predict(np.column_stack([X, h]), T)
    ys_levels = pipeline.gp_ys.cat_levels[-1]
    ys, ys_sd = pipeline._ys(X, T, h, ep, ys_levels.index("YS"))
    dummy, dummy_sd = pipeline._ys(X, T, h, ep, ys_levels.index("H"))
    ef_levels = pipeline.gp_ef.cat_levels[-1]
    ef, ef_sd = pipeline._ef(X, T, h, ep, ys, ef_levels.index("EF"))
    return TensilePrediction(ys, ys_sd, ef, ef_sd, h, ep, dummy, dummy_sd)


def stage_function(pipeline: HierarchyPipeline, stage: str):
    """Deterministic scalar response of one stage as a function of process parameters."""
    if stage == "h":
        return lambda params: pipeline.predict_hardness(params)[0]
    if stage == "ep":
        return lambda params: pipeline.predict_ep(params)[0]
    if stage == "ys":
        return lambda params: predict_tensile(pipeline, params).ys_mean
    if stage == "ef":
        return lambda params: predict_tensile(pipeline, params).ef_mean
    raise DomainError(f"unknown stage {stage!r}; expected one of {STAGES}")

"""Accuracy metrics, k-fold cross-validation, correlation screening and Sobol indices."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dataset import MixedDataset
from .domain import QUANT_NAMES, sobol_unit_points
from .errors import DomainError, FuselabError
from .gp import GpConfig, fit

log = logging.getLogger(__name__)


def _pair(y, yhat, min_len):
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.size != yhat.size:
        raise DomainError(f"length mismatch: {y.size} measured vs {yhat.size} predicted")
    if y.size < min_len:
        raise DomainError(f"need at least {min_len} values")
    return y, yhat


def mse(y, yhat, squared: bool = False) -> float:
    """Root of the mean squared residual (``squared=True`` gives the plain mean)."""
    y, yhat = _pair(y, yhat, 1)
    m = float(np.mean((y - yhat) ** 2))
    return m if squared else float(np.sqrt(m))


def r_squared(y, yhat) -> float:
    y, yhat = _pair(y, yhat, 2)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise DomainError("R^2 is undefined for a constant response")
    return 1.0 - float(np.sum((y - yhat) ** 2)) / ss_tot


def kfold_partition(n: int, k: int, seed: int = 0) -> list:
    """Shuffled split of ``range(n)`` into ``k`` folds whose sizes differ by at most one."""
    if k < 2:
        raise DomainError("k must be >= 2")
    if n < k:
        raise DomainError(f"cannot split {n} rows into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


@dataclass
class CvReport:
    """Per-fold root-mean-square errors plus pooled out-of-fold R^2.

    ``fold_metric`` is on the standardised output scale of the evaluated
    rows (``fold_metric_raw`` in data units); failed folds hold None.
    """

    k: int
    seed: int
    fold_sizes: list
    fold_metric: list
    fold_metric_raw: list
    r2: Optional[float]
    noise_variance: Optional[float]
    squared: bool = False
    failed_folds: list = field(default_factory=list)
    oof_pred: Optional[np.ndarray] = None
    y_eval: Optional[np.ndarray] = None

    def to_dict(self):
        return {
            "k": self.k,
            "seed": self.seed,
            "metric": "mse" if self.squared else "metric_eq1",
            "fold_sizes": list(self.fold_sizes),
            "fold_metric": list(self.fold_metric),
            "fold_metric_raw": list(self.fold_metric_raw),
            "r2": self.r2,
            "noise_variance": self.noise_variance,
            "failed_folds": list(self.failed_folds),
        }


def estimate_noise_variance(dataset: MixedDataset, config: Optional[GpConfig] = None, seed: int = 0) -> float:
    """Fitted nugget of one GP trained on all rows (standardised output scale)."""
    if dataset.n < 2:
        raise DomainError("need at least two rows")
    return fit(dataset, config or GpConfig(), seed=seed).nugget


def kfold_cv(dataset: MixedDataset, k: int = 5, config: Optional[GpConfig] = None, seed: int = 0,
             eval_mask=None, squared: bool = False, with_noise: bool = True) -> CvReport:
    """k-fold cross-validation of a GP on ``dataset``.

    Only rows selected by ``eval_mask`` (default: all) are partitioned and
    scored; the remaining rows always stay in the training set.
    """
    config = config or GpConfig()
    eval_idx = np.arange(dataset.n) if eval_mask is None else np.flatnonzero(np.asarray(eval_mask, dtype=bool))
    folds = kfold_partition(eval_idx.size, k, seed)
    y_eval = dataset.y[eval_idx]
    mu, sd = float(y_eval.mean()), float(y_eval.std()) or 1.0
    oof = np.full(eval_idx.size, np.nan)
    metrics, metrics_raw, failed = [], [], []
    for j, fold in enumerate(folds):
        test = eval_idx[fold]
        train = np.setdiff1d(np.arange(dataset.n), test)
        try:
            model = fit(dataset.subset(train), config, seed=seed + j)
            pred, _ = model.predict(dataset.X[test], dataset.T[test])
        except FuselabError as exc:
            log.warning("fold %d failed: %s", j, exc)
            failed.append(j)
            metrics.append(None)
            metrics_raw.append(None)
            continue
        oof[fold] = pred
        metrics_raw.append(mse(dataset.y[test], pred, squared))
        metrics.append(mse((dataset.y[test] - mu) / sd, (pred - mu) / sd, squared))
    ok = ~np.isnan(oof)
    r2 = r_squared(y_eval[ok], oof[ok]) if ok.sum() >= 2 else None
    noise = None
    if with_noise:
        try:
            noise = estimate_noise_variance(dataset, config, seed)
        except FuselabError as exc:
            log.warning("noise variance estimate failed: %s", exc)
    return CvReport(k, seed, [len(f) for f in folds], metrics, metrics_raw, r2, noise, squared, failed, oof, y_eval)


def pearson_matrix(columns: dict):
    """Pairwise Pearson coefficients; returns ``(names, matrix)`` with an exact unit diagonal."""
    names = list(columns)
    data = [np.asarray(columns[c], dtype=float).ravel() for c in names]
    n = {d.size for d in data}
    if len(n) != 1:
        raise DomainError("all columns must have the same length")
    if n.pop() < 2:
        raise DomainError("need at least two observations")
    for name, d in zip(names, data):
        if np.all(d == d[0]):
            raise DomainError(f"column {name!r} is constant")
    M = np.corrcoef(np.vstack(data))
    M = np.clip(0.5 * (M + M.T), -1.0, 1.0)
    np.fill_diagonal(M, 1.0)
    return names, M


# ---------------------------------------------------------------------------
# Sobol indices

@dataclass(frozen=True)
class SobolSpace:
    """Input box: ``quantitative`` is ``[(name, lo, hi)]``, ``categorical`` is ``[(name, levels)]``."""

    quantitative: tuple
    categorical: tuple = ()

    @property
    def names(self):
        return [q[0] for q in self.quantitative] + [c[0] for c in self.categorical]

    @property
    def dim(self):
        return len(self.quantitative) + len(self.categorical)

    def map(self, U):
        """Unit samples -> (quantitative values, categorical level indices)."""
        nq = len(self.quantitative)
        lo = np.array([q[1] for q in self.quantitative], dtype=float)
        hi = np.array([q[2] for q in self.quantitative], dtype=float)
        Xq = lo + U[:, :nq] * (hi - lo)
        Tc = np.empty((U.shape[0], len(self.categorical)), dtype=np.int64)
        for j, (_, levels) in enumerate(self.categorical):
            L = len(levels)
            Tc[:, j] = np.minimum((U[:, nq + j] * L).astype(np.int64), L - 1)
        return Xq, Tc


@dataclass
class SobolReport:
    names: list
    main: np.ndarray
    total: np.ndarray
    main_se: np.ndarray
    total_se: np.ndarray
    n_base: int
    seed: int
    variance: float

    def to_dict(self):
        return {
            "features": list(self.names),
            "main": [float(v) for v in self.main],
            "total": [float(v) for v in self.total],
            "main_se": [float(v) for v in self.main_se],
            "total_se": [float(v) for v in self.total_se],
            "n_base": self.n_base,
            "seed": self.seed,
            "variance": self.variance,
        }


def sobol_indices(model: Callable, space: SobolSpace, n_base: int = 4096, seed: int = 0) -> SobolReport:
    """Main and total Sobol indices from paired sample matrices ``A``, ``B``, ``A_B^(i)``.

    ``model(Xq, Tc)`` maps an ``(N, n_quant)`` array and an ``(N, n_cat)``
    array of level indices to ``N`` outputs. Main effects use the Saltelli
    estimator, totals the Jansen estimator; categorical inputs occupy one
    uniform coordinate split evenly among their levels.
    """
    d = space.dim
    if d < 1:
        raise DomainError("empty input space")
    if n_base < 2:
        raise DomainError("n_base must be >= 2")
    base = sobol_unit_points(n_base, 2 * d, seed=seed, scramble=True)
    A, B = base[:, :d], base[:, d:]

    def f(U):
        out = np.asarray(model(*space.map(U)), dtype=float).ravel()
        if out.size != U.shape[0]:
            raise DomainError("model returned the wrong number of outputs")
        return out

    fA, fB = f(A), f(B)
    V = float(np.var(np.concatenate([fA, fB])))
    if not V > 0:
        raise DomainError("model output has zero variance over the input space")
    main, total, main_se, total_se = (np.empty(d) for _ in range(4))
    for i in range(d):
        ABi = A.copy()
        ABi[:, i] = B[:, i]
        fABi = f(ABi)
        s_terms = fB * (fABi - fA)
        t_terms = 0.5 * (fA - fABi) ** 2
        main[i] = s_terms.mean() / V
        total[i] = t_terms.mean() / V
        main_se[i] = s_terms.std(ddof=1) / np.sqrt(n_base) / V
        total_se[i] = t_terms.std(ddof=1) / np.sqrt(n_base) / V
    return SobolReport(space.names, main, total, main_se, total_se, n_base, seed, V)


def screen_features(report: SobolReport, threshold: float = 0.05):
    """Split features into ``(kept, dropped)``; drop when both main and total SI < threshold."""
    kept, dropped = [], []
    for name, s, t in zip(report.names, report.main, report.total):
        (dropped if (s < threshold and t < threshold) else kept).append(name)
    return kept, dropped


# ---------------------------------------------------------------------------
# hierarchy-level cross-validation

def strength_cv(cuboids, tensile, k=5, config=None, seed=0, fused=True, upstream=None, squared=False):
    """Cross-validate the yield-strength stage over tensile records.

    With ``fused=True`` the cuboid hardness rows always stay in training and
    only tensile rows are held out; otherwise a GP is fitted to the tensile
    rows alone using the process parameters as the only inputs (no fusion and
    no predicted upstream features) with a constant mean.
    """
    from .fusion import SOURCE, HierarchyConfig, build_strength_dataset, train_upstream

    hconf = config or HierarchyConfig()
    gp_h, gp_ep = upstream if upstream is not None else train_upstream(cuboids, hconf)
    data = build_strength_dataset(gp_h, gp_ep, cuboids, tensile, hconf.include_rotation)
    ys_mask = data.level_mask(SOURCE, "YS")
    if fused:
        return kfold_cv(data, k, hconf.stages["ys"], seed, eval_mask=ys_mask, squared=squared, with_noise=False)
    solo = data.filter_level(SOURCE, "YS")
    nq = len(QUANT_NAMES)
    solo = MixedDataset(solo.X[:, :nq], solo.T, solo.y, solo.x_names[:nq], solo.cat_names, solo.cat_levels)
    return kfold_cv(solo, k, GpConfig(n_starts=hconf.stages["ys"].n_starts, jobs=hconf.stages["ys"].jobs),
                    seed, squared=squared, with_noise=False)


def hierarchy_cv(cuboids, tensile, k=5, config=None, seed=0, squared=False) -> dict:
    """Out-of-fold accuracy of every stage of the hierarchy.

    Hardness is cross-validated over cuboids. For yield strength and
    ductility the tensile records are partitioned; each fold retrains the
    two downstream stages (upstream stages see cuboid data only and are
    shared across folds) and predicts the held-out records through the chain.
    """
    from .fusion import HierarchyConfig, _dataset, predict_tensile, train_hierarchy, train_upstream

    hconf = config or HierarchyConfig()
    params = [c.params for c in cuboids]
    d_h = _dataset(params, [], [], np.array([c.hardness for c in cuboids]), hconf.include_rotation)
    reports = {"h": kfold_cv(d_h, k, hconf.stages["h"], seed, squared=squared, with_noise=False)}

    upstream = train_upstream(cuboids, hconf)
    folds = kfold_partition(len(tensile), k, seed)
    y = {"ys": np.array([t.yield_strength for t in tensile]), "ef": np.array([t.ductility for t in tensile])}
    oof = {s: np.full(len(tensile), np.nan) for s in y}
    per_fold = {s: [] for s in y}
    failed = []
    for j, fold in enumerate(folds):
        train = [t for i, t in enumerate(tensile) if i not in set(fold.tolist())]
        try:
            pipe = train_hierarchy(cuboids, train, replace_seed(hconf, hconf.seed + 10 * j), upstream=upstream)
        except FuselabError as exc:
            log.warning("hierarchy fold %d failed: %s", j, exc)
            failed.append(j)
            for s in y:
                per_fold[s].append(None)
            continue
        pred = predict_tensile(pipe, [tensile[i].params for i in fold])
        for s, p in (("ys", pred.ys_mean), ("ef", pred.ef_mean)):
            oof[s][fold] = p
            per_fold[s].append(mse(y[s][fold], p, squared))
    for s in y:
        ok = ~np.isnan(oof[s])
        mu, sd = float(y[s].mean()), float(y[s].std()) or 1.0
        std_metric = [None if m is None else (m / sd if not squared else m / sd ** 2) for m in per_fold[s]]
        reports[s] = CvReport(k, seed, [len(f) for f in folds], std_metric, per_fold[s],
                              r_squared(y[s][ok], oof[s][ok]) if ok.sum() >= 2 else None, None, squared,
                              list(failed), oof[s], y[s])
    return reports


def replace_seed(config, seed):
    from dataclasses import replace

    return replace(config, seed=seed)


def process_space(ranges=None) -> SobolSpace:
    """The four quantitative process parameters plus scan rotation as a categorical."""
    from .domain import DEFAULT_RANGES, SCAN_ROTATIONS, _check_ranges

    r = _check_ranges({**DEFAULT_RANGES, **(ranges or {})})
    return SobolSpace(tuple((n, *r[n]) for n in QUANT_NAMES), (("scan_rot", SCAN_ROTATIONS),))


def pipeline_sobol(pipeline, stage: str, n_base: int = 4096, seed: int = 0, ranges=None) -> SobolReport:
    """Sobol indices of one hierarchy stage with respect to the process parameters."""
    from .domain import ProcessParams
    from .fusion import stage_function

    space = process_space(ranges)
    fn = stage_function(pipeline, stage)
    rot = space.categorical[0][1]

    def model(Xq, Tc):
        params = [ProcessParams.from_um(p, v, l, h, rot[t])
                  for (p, v, l, h), t in zip(Xq.tolist(), Tc[:, 0].tolist())]
        return fn(params)

    return sobol_indices(model, space, n_base, seed)

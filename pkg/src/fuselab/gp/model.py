"""Mixed-input Gaussian-process emulator trained by maximum a posteriori estimation."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg, optimize
from scipy.linalg import lapack

from .. import _backend
from ..dataset import MixedDataset
from ..errors import DomainError, NumericalError, TrainingError
from .kernels import encode_batch
from .mean import MeanFunction, eval_mean, fd_jacobians

log = logging.getLogger(__name__)

VERSION = "gpmodel_v1"
LN10 = math.log(10.0)
# objective value reported for parameters whose covariance cannot be factorised
_FAIL_VALUE = 1e10


@dataclass
class GpConfig:
    """Training settings. Nugget values are on the standardised output scale."""

    mean: str = "constant"
    hidden: tuple = ()
    dropout: float = 0.0
    source_dependent: bool = False
    dh: int = 2
    n_starts: int = 8
    maxiter: int = 250
    nugget_floor: float = 1e-8
    nugget_floor_max: float = 1e-4
    nugget_prior_median: float = 1e-4
    nugget_prior_logsd: float = 3.0
    omega_bounds: tuple = (-6.0, 4.0)
    embedding_bound: float = 5.0
    source_column: Optional[str] = None
    jobs: int = 1

    def __post_init__(self):
        self.hidden = tuple(self.hidden)
        self.omega_bounds = tuple(self.omega_bounds)
        if self.n_starts < 1:
            raise DomainError("n_starts must be >= 1")
        if self.dh < 1:
            raise DomainError("dh must be >= 1")

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["omega_bounds"] = list(self.omega_bounds)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("hidden", "omega_bounds"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def latent_dim(cardinalities, dh) -> int:
    total = sum(cardinalities)
    if total == 0:
        return 0
    return max(0, min(dh, total - 1))


def _stats(v):
    mu = float(np.mean(v))
    sd = float(np.std(v))
    return mu, (sd if sd > 0 and np.isfinite(sd) else 1.0)


class _Standardizer:
    """Per-column input scaling and (optionally per-source) output scaling."""

    def __init__(self, x_mean, x_std, y_stats, source_index):
        self.x_mean = np.asarray(x_mean, dtype=float)
        self.x_std = np.asarray(x_std, dtype=float)
        self.y_stats = {int(k): tuple(v) for k, v in y_stats.items()}
        self.source_index = source_index

    @classmethod
    def from_data(cls, data: MixedDataset, source_column):
        if data.X.shape[1]:
            x_mean = data.X.mean(axis=0)
            x_std = data.X.std(axis=0)
            x_std = np.where(x_std > 0, x_std, 1.0)
        else:
            x_mean = x_std = np.zeros(0)
        if source_column is None:
            return cls(x_mean, x_std, {-1: _stats(data.y)}, None)
        j = data.cat_names.index(source_column)
        stats = {}
        for lv in range(len(data.cat_levels[j])):
            rows = data.y[data.T[:, j] == lv]
            stats[lv] = _stats(rows) if rows.size else (0.0, 1.0)
        return cls(x_mean, x_std, stats, j)

    def x(self, X):
        return (np.asarray(X, dtype=float) - self.x_mean) / self.x_std

    def _per_row(self, T, n):
        if self.source_index is None:
            mu, sd = self.y_stats[-1]
            return np.full(n, mu), np.full(n, sd)
        lv = np.asarray(T, dtype=np.int64)[:, self.source_index]
        mu = np.array([self.y_stats[int(k)][0] for k in lv])
        sd = np.array([self.y_stats[int(k)][1] for k in lv])
        return mu, sd

    def y(self, y, T):
        mu, sd = self._per_row(T, len(y))
        return (np.asarray(y, dtype=float) - mu) / sd

    def y_inverse(self, mean, var, T):
        mu, sd = self._per_row(T, len(mean))
        return mean * sd + mu, var * sd * sd

    def to_dict(self):
        return {
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "y_stats": {str(k): list(v) for k, v in sorted(self.y_stats.items())},
            "source_index": self.source_index,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["x_mean"], d["x_std"], {int(k): v for k, v in d["y_stats"].items()}, d["source_index"])


class MapProblem:
    """Negative log posterior over the packed parameter vector.

    Layout: ``[omega (dx), A (n_pi*dh), log sigma^2, log delta, mean params]``.
    """

    def __init__(self, Xs, Pi, ys, mean: MeanFunction, dh, config: GpConfig, nugget_floor):
        self.Xs = np.ascontiguousarray(Xs, dtype=float)
        self.Pi = np.asarray(Pi, dtype=float)
        self.y = np.asarray(ys, dtype=float)
        self.mean = mean
        self.dh = dh
        self.config = config
        self.floor = nugget_floor
        self.n, self.dx = self.Xs.shape
        self.n_pi = self.Pi.shape[1]
        self.n_A = self.n_pi * dh
        self.n_mean = mean.n_params
        self.size = self.dx + self.n_A + 2 + self.n_mean
        self._prior_mu = math.log(config.nugget_prior_median)
        self._prior_sd = config.nugget_prior_logsd

    def unpack(self, theta):
        theta = np.asarray(theta, dtype=float)
        k = self.dx
        omega = theta[:k]
        A = theta[k:k + self.n_A].reshape(self.n_pi, self.dh)
        k += self.n_A
        return omega, A, theta[k], theta[k + 1], theta[k + 2:]

    def pack(self, omega, A, log_s2, log_delta, beta):
        return np.concatenate([np.ravel(omega), np.ravel(A), [log_s2, log_delta], np.ravel(beta)])

    def bounds(self):
        lo, hi = self.config.omega_bounds
        eb = self.config.embedding_bound
        b = [(lo, hi)] * self.dx + [(-eb, eb)] * self.n_A
        b += [(-12.0, 6.0), (math.log(self.floor), math.log(10.0))]
        if self.mean.kind == "constant":
            b += [(None, None)]
        else:
            b += [(-20.0, 20.0)] * self.n_mean
        return b

    def initial(self, rng):
        lo, hi = self.config.omega_bounds
        # start with long lengthscales on the standardised inputs; short ones
        # make the initial kernel nearly white and the search drifts to the bound
        omega = rng.uniform(max(lo, -2.5), min(hi, -0.5), size=self.dx)
        A = rng.normal(0.0, 0.5, size=(self.n_pi, self.dh))
        log_s2 = rng.uniform(math.log(0.3), math.log(2.0))
        log_delta = rng.uniform(max(math.log(self.floor), math.log(1e-3)), math.log(0.1))
        beta = self.mean.init_params(rng)
        if self.mean.kind == "constant":
            beta = np.array([float(np.mean(self.y))])
        return self.pack(omega, A, log_s2, log_delta, beta)

    def nugget_penalty(self, log_delta):
        """Negative log of the normal prior on ``log delta``, and its derivative."""
        z = (log_delta - self._prior_mu) / self._prior_sd
        return 0.5 * z * z + math.log(self._prior_sd * math.sqrt(2.0 * math.pi)), z / self._prior_sd

    def _mean(self, H, beta, masks):
        mode = "train" if masks is not None else "infer"
        return eval_mean(self.mean, self.Xs, H, mode=mode, params=beta, masks=masks)

    def covariance(self, theta):
        omega, A, log_s2, log_delta, _ = self.unpack(theta)
        H = self.Pi @ A
        Z = np.hstack([self.Xs, H])
        w = np.concatenate([10.0**omega, np.ones(self.dh)])
        R = _backend.gram_sym(Z, w)
        C = math.exp(log_s2) * R
        C[np.diag_indices_from(C)] += math.exp(log_delta)
        return C, R, H

    def __call__(self, theta, masks=None, grad=True):
        omega, A, log_s2, log_delta, beta = self.unpack(theta)
        C, R, H = self.covariance(theta)
        try:
            L = linalg.cholesky(C, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise NumericalError(f"covariance not positive definite: {exc}") from None
        m = self._mean(H, beta, masks)
        r = self.y - m
        alpha = linalg.cho_solve((L, True), r, check_finite=False)
        penalty, dpenalty = self.nugget_penalty(log_delta)
        f = float(np.sum(np.log(np.diag(L))) + 0.5 * r @ alpha + penalty)
        if not grad:
            return f
        s2 = math.exp(log_s2)
        delta = math.exp(log_delta)
        Cinv = _chol_inverse(L)
        Wm = Cinv - np.outer(alpha, alpha)
        G = Wm * R
        w = 10.0**omega
        g_omega = -0.5 * LN10 * s2 * w * _backend.sqdist_contract(G, self.Xs) if self.dx else np.zeros(0)
        if self.n_A:
            rs = G.sum(axis=1)
            term1 = (self.Pi * rs[:, None]).T @ H
            term2 = self.Pi.T @ (G @ H)
            g_A = -2.0 * s2 * (term1 - term2)
        else:
            g_A = np.zeros((self.n_pi, self.dh))
        g_ls2 = 0.5 * s2 * float(G.sum())
        g_ld = 0.5 * delta * float(np.trace(Wm)) + dpenalty
        if self.mean.kind == "constant":
            g_beta = np.array([-float(alpha.sum())])
        else:
            h_dirs = None
            if self.mean.source_dependent and self.n_A:
                # d h / d A[k, j] = Pi[:, k] e_j
                h_dirs = np.zeros((self.n_A, self.n, self.dh))
                for k in range(self.n_pi):
                    for j in range(self.dh):
                        h_dirs[k * self.dh + j, :, j] = self.Pi[:, k]
            J, J_A = fd_jacobians(self.mean, self.Xs, H, beta, masks, h_dirs)
            g_beta = -J.T @ alpha
            if J_A is not None:
                g_A = g_A - (J_A.T @ alpha).reshape(self.n_pi, self.dh)
        return f, self.pack(g_omega, g_A, g_ls2, g_ld, g_beta)


def _chol_inverse(L):
    """Inverse of ``L @ L.T`` from its lower Cholesky factor."""
    inv, info = lapack.dpotri(L, lower=1)
    if info != 0:
        raise NumericalError(f"potri failed with info={info}")
    return np.tril(inv) + np.tril(inv, -1).T


@dataclass
class StartResult:
    index: int
    success: bool
    x: Optional[np.ndarray] = None
    fun: float = math.inf
    trace: list = field(default_factory=list)
    message: str = ""


def _run_start(problem: MapProblem, seed, index, record_trace):
    rng = np.random.default_rng([int(seed), int(index)])
    theta0 = problem.initial(rng)
    masks = problem.mean.draw_masks(problem.n, rng)
    try:
        f0 = problem(theta0, masks, grad=False)
    except NumericalError as exc:
        return StartResult(index, False, message=f"start {index}: initial point failed ({exc})")

    def fun(theta):
        try:
            return problem(theta, masks)
        except NumericalError:
            return _FAIL_VALUE, np.zeros_like(theta)

    trace = [f0] if record_trace else []

    def callback(intermediate_result):
        trace.append(float(intermediate_result.fun))

    res = optimize.minimize(
        fun, theta0, jac=True, method="L-BFGS-B", bounds=problem.bounds(),
        callback=callback if record_trace else None,
        options={"maxiter": problem.config.maxiter, "ftol": 1e-12, "gtol": 1e-7},
    )
    if not np.isfinite(res.fun) or res.fun >= _FAIL_VALUE:
        return StartResult(index, False, message=f"start {index}: optimiser ended in a failing region")
    return StartResult(index, True, np.asarray(res.x), float(res.fun), trace, str(res.message))


class GpModel:
    """Fitted emulator. Immutable after construction; safe to share for prediction."""

    def __init__(self, data: MixedDataset, config: GpConfig, standardizer: _Standardizer,
                 theta, nugget_floor, mean: MeanFunction, dh: int, starts=None):
        self.data = data
        self.config = config
        self.std = standardizer
        self.nugget_floor = float(nugget_floor)
        self.dh = dh
        self.starts = starts or []
        self.clamped_variance_count = 0
        self._problem = MapProblem(standardizer.x(data.X), encode_batch(data.T, data.cardinalities),
                                   standardizer.y(data.y, data.T), mean, dh, config, nugget_floor)
        self.theta = np.asarray(theta, dtype=float)
        omega, A, log_s2, log_delta, beta = self._problem.unpack(self.theta)
        self.omega = omega.copy()
        self.A = A.copy()
        self.sigma2 = math.exp(log_s2)
        self.nugget = math.exp(log_delta)
        self.mean = MeanFunction(mean.kind, mean.hidden, mean.dropout, mean.source_dependent, mean.in_dim, beta.copy())
        self._factorize()

    def _factorize(self):
        C, _, H = self._problem.covariance(self.theta)
        try:
            self.L = linalg.cholesky(C, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise NumericalError(f"cannot factorise the fitted covariance: {exc}") from None
        self._Z = np.hstack([self._problem.Xs, H])
        self._w = np.concatenate([10.0**self.omega, np.ones(self.dh)])
        self._m_train = eval_mean(self.mean, self._problem.Xs, H, mode="infer")
        self.alpha = linalg.cho_solve((self.L, True), self._problem.y - self._m_train, check_finite=False)

    # schema -----------------------------------------------------------------
    @property
    def x_names(self):
        return self.data.x_names

    @property
    def cat_names(self):
        return self.data.cat_names

    @property
    def cat_levels(self):
        return self.data.cat_levels

    @property
    def n_train(self):
        return self.data.n

    def objective(self, theta=None):
        """``L_MAP`` at ``theta`` (default: the fitted parameters), mean in inference mode."""
        return self._problem(self.theta if theta is None else theta, None, grad=False)

    def _check_schema(self, X, T):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.x_names):
            raise DomainError(f"expected {len(self.x_names)} quantitative columns {self.x_names}, got {X.shape[1]}")
        n = X.shape[0]
        if T is None:
            if self.cat_names:
                raise DomainError(f"categorical columns {self.cat_names} are required")
            T = np.zeros((n, 0), dtype=np.int64)
        T = np.asarray(T, dtype=np.int64).reshape(n, len(self.cat_names))
        return X, T

    def predict_standardized(self, X, T=None):
        """Mean and variance on the standardised output scale."""
        X, T = self._check_schema(X, T)
        if X.shape[0] == 0:
            return np.zeros(0), np.zeros(0)
        Xs = self.std.x(X)
        H = encode_batch(T, self.data.cardinalities) @ self.A
        Zs = np.hstack([Xs, H])
        K = self.sigma2 * _backend.gram(Zs, self._Z, self._w)
        mu = eval_mean(self.mean, Xs, H, mode="infer") + K @ self.alpha
        V = linalg.solve_triangular(self.L, K.T, lower=True, check_finite=False)
        var = self.sigma2 + self.nugget - np.einsum("ij,ij->j", V, V)
        neg = var < 0
        if np.any(neg):
            self.clamped_variance_count += int(neg.sum())
            log.warning("clamped %d negative predictive variances", int(neg.sum()))
            var = np.where(neg, 0.0, var)
        return mu, var

    def predict(self, X, T=None):
        """Predictive mean and variance (nugget included) in the data's units."""
        X, T = self._check_schema(X, T)
        mu, var = self.predict_standardized(X, T)
        return self.std.y_inverse(mu, var, T)

    # serialisation --------------------------------------------------------
    def to_dict(self):
        return {
            "version": VERSION,
            "config": self.config.to_dict(),
            "schema": {
                "x_names": list(self.x_names),
                "cat_names": list(self.cat_names),
                "cat_levels": [list(lv) for lv in self.cat_levels],
            },
            "standardization": self.std.to_dict(),
            "params": {
                "omega": self.omega.tolist(),
                "A": self.A.tolist(),
                "sigma2": self.sigma2,
                "nugget": self.nugget,
                "mean": {
                    "kind": self.mean.kind,
                    "hidden": list(self.mean.hidden),
                    "dropout": self.mean.dropout,
                    "source_dependent": self.mean.source_dependent,
                    "in_dim": self.mean.in_dim,
                    "beta": self.mean.params.tolist(),
                },
            },
            "dh": self.dh,
            "nugget_floor": self.nugget_floor,
            "training": {"X": self.data.X.tolist(), "T": self.data.T.tolist(), "y": self.data.y.tolist()},
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != VERSION:
            raise DomainError(f"unsupported model version {d.get('version')!r}")
        sch = d["schema"]
        tr = d["training"]
        data = MixedDataset(np.array(tr["X"], dtype=float).reshape(len(tr["y"]), len(sch["x_names"])),
                            np.array(tr["T"], dtype=np.int64).reshape(len(tr["y"]), len(sch["cat_names"])),
                            tr["y"], sch["x_names"], sch["cat_names"], sch["cat_levels"])
        config = GpConfig.from_dict(d["config"])
        p = d["params"]
        mp = p["mean"]
        mean = MeanFunction(mp["kind"], tuple(mp["hidden"]), mp["dropout"], mp["source_dependent"],
                            mp["in_dim"], np.array(mp["beta"]))
        A = np.array(p["A"], dtype=float).reshape(sum(data.cardinalities), d["dh"])
        theta = np.concatenate([p["omega"], A.ravel(), [math.log(p["sigma2"]), math.log(p["nugget"])],
                                mean.params])
        return cls(data, config, _Standardizer.from_dict(d["standardization"]), theta,
                   d["nugget_floor"], mean, d["dh"])


def _make_mean(data: MixedDataset, config: GpConfig, dh: int) -> MeanFunction:
    if config.mean == "constant":
        return MeanFunction("constant")
    in_dim = data.X.shape[1] + (dh if config.source_dependent else 0)
    return MeanFunction("ffnn", config.hidden, config.dropout, config.source_dependent, in_dim)


def map_objective(data: MixedDataset, theta, config: Optional[GpConfig] = None, nugget_floor=None):
    """``L_MAP`` of packed parameters ``theta`` on standardised ``data`` (mean in inference mode)."""
    config = config or GpConfig()
    dh = latent_dim(data.cardinalities, config.dh)
    std = _Standardizer.from_data(data, config.source_column)
    problem = MapProblem(std.x(data.X), encode_batch(data.T, data.cardinalities), std.y(data.y, data.T),
                         _make_mean(data, config, dh), dh, config,
                         config.nugget_floor if nugget_floor is None else nugget_floor)
    return problem(theta, None, grad=False)


def build_problem(data: MixedDataset, config: Optional[GpConfig] = None, nugget_floor=None) -> MapProblem:
    config = config or GpConfig()
    dh = latent_dim(data.cardinalities, config.dh)
    std = _Standardizer.from_data(data, config.source_column)
    return MapProblem(std.x(data.X), encode_batch(data.T, data.cardinalities), std.y(data.y, data.T),
                      _make_mean(data, config, dh), dh, config,
                      config.nugget_floor if nugget_floor is None else nugget_floor)


def fit(data: MixedDataset, config: Optional[GpConfig] = None, seed: int = 0, record_trace: bool = False) -> GpModel:
    """Best of ``config.n_starts`` L-BFGS-B minimisations of ``L_MAP``.

    The nugget floor starts at ``config.nugget_floor`` and is raised tenfold
    (up to ``config.nugget_floor_max``) whenever every start fails to
    factorise the covariance.
    """
    config = config or GpConfig()
    if data.n < 2:
        raise DomainError("at least two training points are required")
    if config.source_column is not None and config.source_column not in data.cat_names:
        raise DomainError(f"source column {config.source_column!r} not among {data.cat_names}")
    dh = latent_dim(data.cardinalities, config.dh)
    std = _Standardizer.from_data(data, config.source_column)
    Xs, Pi, ys = std.x(data.X), encode_batch(data.T, data.cardinalities), std.y(data.y, data.T)
    mean = _make_mean(data, config, dh)
    floor = config.nugget_floor
    diagnostics = []
    while True:
        problem = MapProblem(Xs, Pi, ys, mean, dh, config, floor)
        if config.jobs > 1 and config.n_starts > 1:
            with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                results = list(pool.map(lambda i: _run_start(problem, seed, i, record_trace), range(config.n_starts)))
        else:
            results = [_run_start(problem, seed, i, record_trace) for i in range(config.n_starts)]
        ok = sorted((r for r in results if r.success), key=lambda r: (r.fun, r.index))
        diagnostics += [f"floor={floor:g}: {r.message}" for r in results if not r.success]
        for best in ok:
            try:
                return GpModel(data, config, std, best.x, floor, mean, dh, results)
            except NumericalError as exc:
                diagnostics.append(f"floor={floor:g}: start {best.index} optimum not factorisable ({exc})")
        floor *= 10.0
        if floor > config.nugget_floor_max * (1 + 1e-9):
            raise TrainingError("all restarts failed to factorise the covariance", diagnostics=diagnostics)
        log.info("raising nugget floor to %g", floor)

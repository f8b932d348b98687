"""Mixed-input Gaussian-process regression."""

from .kernels import embed, encode_batch, encode_categorical, kernel, mixed_kernel
from .mean import MeanFunction, eval_mean
from .model import GpConfig, GpModel, MapProblem, build_problem, fit, latent_dim, map_objective

__all__ = [
    "GpConfig", "GpModel", "MapProblem", "MeanFunction", "build_problem", "embed", "encode_batch",
    "encode_categorical", "eval_mean", "fit", "kernel", "latent_dim", "map_objective", "mixed_kernel",
]

"""Tabular mixed-input dataset shared by the GP, fusion and analysis layers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True, eq=False)
class MixedDataset:
    """Rows of quantitative features, categorical level indices and one response.

    ``cat_levels[i]`` lists the level labels of categorical column ``i``;
    ``T[:, i]`` holds indices into it.
    """

    X: np.ndarray
    T: np.ndarray
    y: np.ndarray
    x_names: tuple
    cat_names: tuple = ()
    cat_levels: tuple = ()

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if X.shape[0] == 1 and len(self.x_names) != X.shape[1] and X.shape[1] == 0:
            X = X.reshape(0, len(self.x_names))
        y = np.asarray(self.y, dtype=float).ravel()
        T = np.asarray(self.T, dtype=np.int64)
        if T.size == 0:
            T = T.reshape(y.size, len(self.cat_names))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "x_names", tuple(self.x_names))
        object.__setattr__(self, "cat_names", tuple(self.cat_names))
        object.__setattr__(self, "cat_levels", tuple(tuple(lv) for lv in self.cat_levels))
        if X.shape[0] != y.size or T.shape[0] != y.size:
            raise DomainError(f"row count mismatch: X {X.shape[0]}, T {T.shape[0]}, y {y.size}")
        if X.shape[1] != len(self.x_names):
            raise DomainError(f"X has {X.shape[1]} columns but {len(self.x_names)} names")
        if T.shape[1] != len(self.cat_names) or len(self.cat_levels) != len(self.cat_names):
            raise DomainError("categorical columns, names and level lists disagree")
        if not np.all(np.isfinite(y)):
            raise DomainError("responses must be finite")
        if not np.all(np.isfinite(X)):
            raise DomainError("quantitative features must be finite")
        for i, levels in enumerate(self.cat_levels):
            if T.size and (T[:, i].min() < 0 or T[:, i].max() >= len(levels)):
                raise DomainError(f"level index out of range in categorical column {self.cat_names[i]!r}")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def cardinalities(self) -> tuple:
        return tuple(len(lv) for lv in self.cat_levels)

    def subset(self, idx) -> "MixedDataset":
        idx = np.asarray(idx)
        return MixedDataset(self.X[idx], self.T[idx], self.y[idx], self.x_names, self.cat_names, self.cat_levels)

    def with_response(self, y) -> "MixedDataset":
        return MixedDataset(self.X, self.T, y, self.x_names, self.cat_names, self.cat_levels)

    def level_mask(self, column: str, level) -> np.ndarray:
        j = self.cat_names.index(column)
        return self.T[:, j] == self.cat_levels[j].index(level)

    def filter_level(self, column: str, level, drop_column: bool = True) -> "MixedDataset":
        """Rows whose ``column`` equals ``level``, optionally removing that column."""
        mask = self.level_mask(column, level)
        sub = self.subset(np.flatnonzero(mask))
        if not drop_column:
            return sub
        j = self.cat_names.index(column)
        keep = [i for i in range(len(self.cat_names)) if i != j]
        return MixedDataset(sub.X, sub.T[:, keep], sub.y, sub.x_names,
                            tuple(self.cat_names[i] for i in keep), tuple(self.cat_levels[i] for i in keep))

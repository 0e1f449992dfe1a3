from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError

CLASSES = ("Other", "Excavator")
OTHER, EXCAVATOR = 0, 1


def class_index(label) -> int:
    """0/1 pass through; any label other than "Excavator" is Other."""
    if isinstance(label, (int, np.integer)):
        if label not in (OTHER, EXCAVATOR):
            raise DataError(f"class index must be 0 or 1, got {label}")
        return int(label)
    return EXCAVATOR if str(label) == "Excavator" else OTHER


@dataclass
class Dataset:
    """Feature matrix ``X`` (n, d) and integer targets ``y`` (1 = Excavator)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        self.y = np.asarray([class_index(v) for v in np.ravel(self.y)], dtype=np.int64)
        if len(self.X) != len(self.y):
            raise DataError(f"{len(self.X)} feature rows but {len(self.y)} targets")

    def __len__(self):
        return len(self.y)

    @property
    def onehot(self) -> np.ndarray:
        """Class indicator t_ij, columns ordered as ``CLASSES``."""
        t = np.zeros((len(self.y), len(CLASSES)))
        t[np.arange(len(self.y)), self.y] = 1.0
        return t

    def both_classes(self) -> bool:
        return len(np.unique(self.y)) == 2

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx])

    def split(self, fractions=(0.70, 0.15, 0.15), seed: int = 0):
        """Shuffle and cut into consecutive parts, stratified per class."""
        rng = np.random.default_rng(seed)
        parts = [[] for _ in fractions]
        edges = np.cumsum(fractions) / np.sum(fractions)
        for cls in np.unique(self.y):
            idx = rng.permutation(np.flatnonzero(self.y == cls))
            cuts = np.round(edges * len(idx)).astype(int)
            lo = 0
            for k, hi in enumerate(cuts):
                parts[k].append(idx[lo:hi])
                lo = hi
        return tuple(self.subset(np.sort(np.concatenate(p))) for p in parts)


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, data) -> "Standardizer":
        X = data.X if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=np.float64))
        if len(X) == 0:
            raise DataError("cannot standardize an empty dataset")
        std = X.std(axis=0, ddof=1) if len(X) > 1 else np.zeros(X.shape[1])
        # constant dims would otherwise blow up; 0 marks "map to zero"
        std = np.where(std > 1e-12 * np.maximum(1.0, np.abs(X.mean(axis=0))), std, 0.0)
        return cls(mean=X.mean(axis=0), std=std)

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.mean.shape[0]:
            raise DataError(f"expected {self.mean.shape[0]} features, got {X.shape[-1]}")
        safe = np.where(self.std > 0, self.std, 1.0)
        return np.where(self.std > 0, (X - self.mean) / safe, 0.0)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Standardizer":
        return cls(mean=np.asarray(d["mean"], dtype=np.float64), std=np.asarray(d["std"], dtype=np.float64))


def standardize_fit(train) -> Standardizer:
    return Standardizer.fit(train)


def standardize_apply(s: Standardizer, X) -> np.ndarray:
    return s.apply(X)

"""Trained classic model bundle, prediction, evaluation and JSON I/O."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..errors import DataError, FormatError
from .data import CLASSES, Dataset, Standardizer
from .mlp import MlpModel, train_mlp
from .svm import SvmModel, train_svm
from .tree import TreeModel, prune_tree, train_tree

SCHEMA = "dasdetect.classic-model/1"
KINDS = ("svm", "tree", "pruned_tree", "mlp")
_ESTIMATORS = {"svm": SvmModel, "tree": TreeModel, "pruned_tree": TreeModel, "mlp": MlpModel}


@dataclass
class ClassicModel:
    """An estimator plus the standardizer fitted on its training set.

    Takes raw FFT features; standardization happens inside.
    """

    kind: str
    standardizer: Standardizer
    estimator: object

    def predict_proba(self, X) -> np.ndarray:
        return self.estimator.predict_proba(self.standardizer.apply(np.atleast_2d(X)))

    def predict_labels(self, X) -> np.ndarray:
        return (self.predict_proba(X) > 0.5).astype(np.int64)

    def to_dict(self) -> dict:
        return {"schema": SCHEMA, "kind": self.kind, "standardizer": self.standardizer.to_dict(),
                "params": self.estimator.to_dict()}

    @classmethod
    def from_dict(cls, d) -> "ClassicModel":
        if d.get("schema") != SCHEMA:
            raise FormatError(f"unknown model schema {d.get('schema')!r}")
        if d.get("kind") not in KINDS:
            raise FormatError(f"unknown model kind {d.get('kind')!r}")
        return cls(kind=d["kind"], standardizer=Standardizer.from_dict(d["standardizer"]),
                   estimator=_ESTIMATORS[d["kind"]].from_dict(d["params"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "ClassicModel":
        with open(path, encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}: not a JSON model ({exc})") from exc
        return cls.from_dict(d)


def fit(kind: str, train: Dataset, holdout: Dataset | None = None, seed: int = 0, **kwargs) -> ClassicModel:
    """Standardize ``train`` and fit one of ``KINDS``.

    ``pruned_tree`` grows a full tree on ``train`` then prunes it on
    ``holdout``.
    """
    if kind not in KINDS:
        raise DataError(f"unknown classifier kind {kind!r}; choose from {KINDS}")
    scaler = Standardizer.fit(train)
    z = Dataset(scaler.apply(train.X), train.y)
    if kind == "svm":
        est = train_svm(z, **kwargs)
    elif kind == "mlp":
        est = train_mlp(z, seed=seed, **kwargs)
    else:
        est = train_tree(z, **kwargs)
        if kind == "pruned_tree":
            if holdout is None:
                raise DataError("pruned_tree needs a holdout set")
            est = prune_tree(est, Dataset(scaler.apply(holdout.X), holdout.y))
    return ClassicModel(kind=kind, standardizer=scaler, estimator=est)


def predict(model, fv) -> tuple:
    """Return ``(label, P(Excavator))`` for one feature vector.

    ``fv`` is raw when ``model`` is a :class:`ClassicModel`, otherwise it
    must already be standardized.
    """
    values = getattr(fv, "values", fv)
    p = float(model.predict_proba(np.atleast_2d(values))[0])
    return CLASSES[int(p > 0.5)], p


def evaluate(model, test: Dataset) -> dict:
    """Accuracy, per-class recall and a confusion matrix (rows = truth)."""
    if len(test) == 0:
        raise DataError("cannot evaluate on an empty dataset")
    if hasattr(model, "predict_labels"):
        pred = np.asarray(model.predict_labels(test.X))
    else:
        pred = (np.asarray(model.predict_proba(test.X)) > 0.5).astype(np.int64)
    confusion = np.zeros((len(CLASSES), len(CLASSES)), dtype=np.int64)
    np.add.at(confusion, (test.y, pred), 1)
    per_class = {}
    for k, name in enumerate(CLASSES):
        n = confusion[k].sum()
        per_class[name] = float(confusion[k, k] / n) if n else float("nan")
    return {
        "accuracy": float(np.trace(confusion) / len(test)),
        "per_class": per_class,
        "confusion": confusion.tolist(),
        "n": len(test),
    }

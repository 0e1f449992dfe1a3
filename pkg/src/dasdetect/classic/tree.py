"""CART classification tree (Gini) with reduced-error pruning."""
from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import DataError
from .data import Dataset

N_CLASSES = 2


@dataclass
class Node:
    counts: np.ndarray  # training samples per class reaching this node
    feature: int = -1
    threshold: float = 0.0
    left: Optional["Node"] = None  # x[feature] <= threshold
    right: Optional["Node"] = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def majority(self) -> int:
        return int(np.argmax(self.counts))

    def to_dict(self) -> dict:
        d = {"counts": [int(c) for c in self.counts]}
        if not self.is_leaf:
            d.update(feature=self.feature, threshold=self.threshold,
                     left=self.left.to_dict(), right=self.right.to_dict())
        return d

    @classmethod
    def from_dict(cls, d) -> "Node":
        node = cls(counts=np.asarray(d["counts"], dtype=np.int64))
        if "left" in d:
            node.feature = int(d["feature"])
            node.threshold = float(d["threshold"])
            node.left = cls.from_dict(d["left"])
            node.right = cls.from_dict(d["right"])
        return node


@dataclass
class TreeModel:
    root: Node
    n_features: int
    pruned: bool = False

    def node_count(self) -> int:
        return sum(1 for _ in _walk(self.root))

    def depth(self) -> int:
        def d(node):
            return 0 if node.is_leaf else 1 + max(d(node.left), d(node.right))
        return d(self.root)

    def leaves(self, X) -> list:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise DataError(f"expected {self.n_features} features, got {X.shape[1]}")
        out = []
        for x in X:
            node = self.root
            while not node.is_leaf:
                node = node.left if x[node.feature] <= node.threshold else node.right
            out.append(node)
        return out

    def predict_proba(self, X) -> np.ndarray:
        """Excavator frequency of the leaf each row lands in."""
        return np.array([leaf.counts[1] / leaf.counts.sum() for leaf in self.leaves(X)])

    def predict_labels(self, X) -> np.ndarray:
        return np.array([leaf.majority for leaf in self.leaves(X)])

    def to_dict(self) -> dict:
        return {"n_features": self.n_features, "pruned": self.pruned, "root": self.root.to_dict()}

    @classmethod
    def from_dict(cls, d) -> "TreeModel":
        return cls(root=Node.from_dict(d["root"]), n_features=int(d["n_features"]), pruned=bool(d["pruned"]))


def _walk(node):
    yield node
    if not node.is_leaf:
        yield from _walk(node.left)
        yield from _walk(node.right)


def _gini(counts: np.ndarray) -> np.ndarray:
    total = counts.sum(axis=-1)
    safe = np.where(total > 0, total, 1)
    p = counts / safe[..., None]
    return 1.0 - np.sum(p * p, axis=-1)


def _best_split(X, y, min_leaf):
    """Exhaustive search of midpoint thresholds; returns (gain, feature, threshold)."""
    n = len(y)
    parent = np.bincount(y, minlength=N_CLASSES)
    parent_imp = _gini(parent)
    best = (-np.inf, -1, 0.0)
    onehot = np.eye(N_CLASSES, dtype=np.int64)[y]
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        left = np.cumsum(onehot[order], axis=0)[:-1]  # split after position k
        right = parent - left
        nl = np.arange(1, n)
        nr = n - nl
        valid = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
        if not valid.any():
            continue
        weighted = (nl * _gini(left) + nr * _gini(right)) / n
        gain = np.where(valid, parent_imp - weighted, -np.inf)
        k = int(np.argmax(gain))
        if gain[k] > best[0] + 1e-15:
            best = (float(gain[k]), f, float((xs[k] + xs[k + 1]) / 2.0))
    return best


def train_tree(train: Dataset, min_leaf: int = 1, max_depth: Optional[int] = None) -> TreeModel:
    """Grow a binary tree greedily by Gini impurity decrease.

    A node becomes a leaf when it is pure, when no split leaves at least
    ``min_leaf`` samples on each side, or at ``max_depth``.
    """
    if len(train) == 0:
        raise DataError("cannot grow a tree on an empty dataset")
    X, y = train.X, train.y

    def grow(idx, depth):
        counts = np.bincount(y[idx], minlength=N_CLASSES)
        node = Node(counts=counts)
        if np.count_nonzero(counts) < 2 or len(idx) < 2 * min_leaf:
            return node
        if max_depth is not None and depth >= max_depth:
            return node
        gain, f, thr = _best_split(X[idx], y[idx], min_leaf)
        if f < 0:
            return node
        go_left = X[idx, f] <= thr
        node.feature, node.threshold = f, thr
        node.left = grow(idx[go_left], depth + 1)
        node.right = grow(idx[~go_left], depth + 1)
        return node

    return TreeModel(root=grow(np.arange(len(y)), 0), n_features=X.shape[1])


def prune_tree(tree: TreeModel, holdout: Dataset) -> TreeModel:
    """Reduced-error pruning against ``holdout``.

    Any internal node whose replacement by its majority leaf classifies at
    least as many of the holdout rows reaching it correctly is collapsed,
    bottom-up, until no such node remains. The input tree is not modified.
    """
    if len(holdout) == 0:
        raise DataError("pruning needs a non-empty holdout set")
    pruned = TreeModel(root=copy.deepcopy(tree.root), n_features=tree.n_features, pruned=True)
    X, y = holdout.X, holdout.y

    def visit(node, idx):
        """Prune below ``node``; return holdout rows it classifies correctly."""
        leaf_correct = int(np.sum(y[idx] == node.majority))
        if node.is_leaf:
            return leaf_correct
        go_left = X[idx, node.feature] <= node.threshold
        subtree_correct = visit(node.left, idx[go_left]) + visit(node.right, idx[~go_left])
        if leaf_correct >= subtree_correct:
            node.left = node.right = None
            node.feature, node.threshold = -1, 0.0
            return leaf_correct
        return subtree_correct

    while True:
        before = pruned.node_count()
        visit(pruned.root, np.arange(len(y)))
        if pruned.node_count() == before:
            break
    return pruned

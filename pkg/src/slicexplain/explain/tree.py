"""Small CART classifier (Gini impurity, axis-aligned binary splits).

Features are scanned in index order and thresholds in ascending order; the first
strictly best split wins, which keeps fitting deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import ATTR_NAMES
from .transitions import CATEGORY_ORDER, TransitionRecord

_MIN_GAIN = 1e-12


@dataclass
class TreeNode:
    counts: np.ndarray
    depth: int
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def label(self) -> int:
        return int(np.argmax(self.counts))

    @property
    def purity(self) -> float:
        return float(self.counts.max() / self.n) if self.n else 0.0


def gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.sum(p * p))


class DistillTree:
    def __init__(self, max_depth: int = 4, min_leaf: int = 5, classes: Sequence[str] | None = None,
                 feature_names: Sequence[str] | None = None):
        if max_depth < 0 or min_leaf < 1:
            raise ValueError("max_depth must be >= 0 and min_leaf >= 1")
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.classes = list(classes) if classes is not None else None
        self.feature_names = list(feature_names) if feature_names is not None else None
        self.root: TreeNode | None = None
        self.degenerate = False

    def fit(self, X: np.ndarray, y: Sequence) -> "DistillTree":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] != len(y) or X.shape[0] == 0:
            raise ValueError("X must be (n_samples, n_features) matching y")
        if self.classes is None:
            self.classes = sorted({str(v) for v in y})
        index = {c: i for i, c in enumerate(self.classes)}
        yi = np.array([index[str(v)] for v in y])
        if self.feature_names is None:
            self.feature_names = [f"x{j}" for j in range(X.shape[1])]
        self.degenerate = len(set(yi.tolist())) < 2
        self.root = self._grow(X, yi, 0)
        return self

    def _counts(self, yi: np.ndarray) -> np.ndarray:
        return np.bincount(yi, minlength=len(self.classes)).astype(float)

    def _grow(self, X: np.ndarray, yi: np.ndarray, depth: int) -> TreeNode:
        node = TreeNode(self._counts(yi), depth)
        if depth >= self.max_depth or node.purity == 1.0 or len(yi) < 2 * self.min_leaf:
            return node
        split = self._best_split(X, yi)
        if split is None:
            return node
        f, thr = split
        mask = X[:, f] <= thr
        node.feature, node.threshold = f, thr
        node.left = self._grow(X[mask], yi[mask], depth + 1)
        node.right = self._grow(X[~mask], yi[~mask], depth + 1)
        return node

    def _best_split(self, X: np.ndarray, yi: np.ndarray) -> tuple[int, float] | None:
        n, d = X.shape
        k = len(self.classes)
        parent = gini(self._counts(yi))
        onehot = np.eye(k)[yi]
        best: tuple[float, int, float] | None = None
        for f in range(d):
            order = np.argsort(X[:, f], kind="stable")
            xs = X[order, f]
            left = np.cumsum(onehot[order], axis=0)[:-1]  # left counts for split after position i
            total = left[-1] + onehot[order[-1]]
            right = total - left
            nl = np.arange(1, n, dtype=float)
            nr = n - nl
            gl = 1.0 - np.sum((left / nl[:, None]) ** 2, axis=1)
            gr = 1.0 - np.sum((right / nr[:, None]) ** 2, axis=1)
            score = (nl * gl + nr * gr) / n
            valid = (xs[:-1] < xs[1:]) & (nl >= self.min_leaf) & (nr >= self.min_leaf)
            if not valid.any():
                continue
            score = np.where(valid, score, np.inf)
            i = int(np.argmin(score))
            if best is None or score[i] < best[0]:
                thr = 0.5 * (xs[i] + xs[i + 1])
                if not xs[i] <= thr < xs[i + 1]:
                    thr = float(xs[i])
                best = (float(score[i]), f, float(thr))
        if best is None or parent - best[0] <= _MIN_GAIN:
            return None
        return best[1], best[2]

    def _leaf_for(self, x: np.ndarray) -> TreeNode:
        node = self.root
        if node is None:
            raise RuntimeError("tree is not fitted")
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right  # type: ignore[index,operator,assignment]
        return node

    def predict(self, X: np.ndarray) -> list[str]:
        X = np.asarray(X, dtype=float)
        return [self.classes[self._leaf_for(x).label] for x in X]  # type: ignore[index]

    def accuracy(self, X: np.ndarray, y: Sequence) -> float:
        pred = self.predict(X)
        return float(np.mean([p == str(t) for p, t in zip(pred, y)]))

    def depth(self) -> int:
        def walk(node: TreeNode | None) -> int:
            if node is None or node.is_leaf:
                return 0
            return 1 + max(walk(node.left), walk(node.right))

        return walk(self.root)

    def leaves(self) -> list[tuple[list[tuple[int, str, float]], TreeNode]]:
        """Root-to-leaf paths as (conditions, leaf); a condition is (feature, op, threshold)."""
        out: list[tuple[list[tuple[int, str, float]], TreeNode]] = []

        def walk(node: TreeNode, path: list[tuple[int, str, float]]) -> None:
            if node.is_leaf:
                out.append((path, node))
                return
            walk(node.left, path + [(node.feature, "<=", node.threshold)])  # type: ignore[arg-type,list-item]
            walk(node.right, path + [(node.feature, ">", node.threshold)])  # type: ignore[arg-type,list-item]

        if self.root is not None:
            walk(self.root, [])
        return out

    def to_obj(self) -> dict:
        def enc(node: TreeNode) -> dict:
            obj: dict = {
                "counts": [int(c) for c in node.counts],
                "label": self.classes[node.label],  # type: ignore[index]
                "purity": node.purity,
            }
            if not node.is_leaf:
                obj["feature"] = self.feature_names[node.feature]  # type: ignore[index]
                obj["threshold"] = node.threshold
                obj["left"] = enc(node.left)  # type: ignore[arg-type]
                obj["right"] = enc(node.right)  # type: ignore[arg-type]
            return obj

        return {
            "classes": self.classes,
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "degenerate": self.degenerate,
            "root": enc(self.root) if self.root is not None else None,
        }

    def render(self) -> str:
        lines: list[str] = []

        def walk(node: TreeNode, indent: str) -> None:
            if node.is_leaf:
                lines.append(f"{indent}-> {self.classes[node.label]} (n={node.n}, purity={node.purity:.2f})")  # type: ignore[index]
                return
            name = self.feature_names[node.feature]  # type: ignore[index]
            lines.append(f"{indent}if {name} <= {node.threshold:.4g}:")
            walk(node.left, indent + "    ")  # type: ignore[arg-type]
            lines.append(f"{indent}else:  # {name} > {node.threshold:.4g}")
            walk(node.right, indent + "    ")  # type: ignore[arg-type]

        if self.root is not None:
            walk(self.root, "")
        return "\n".join(lines)


def delta_feature_names() -> list[str]:
    return [f"d_{name}" for name in ATTR_NAMES]


def fit_distill_tree(records: Sequence[TransitionRecord], max_depth: int = 4, min_leaf: int = 5) -> DistillTree:
    """Fit a tree predicting the transition category from the KPI-delta vector.

    A single-category input yields a one-leaf tree with ``degenerate`` set.
    """
    if not records:
        raise ValueError("no transition records to fit")
    X = np.vstack([r.v for r in records])
    y = [r.category.value for r in records]
    tree = DistillTree(max_depth, min_leaf, classes=[c.value for c in CATEGORY_ORDER],
                       feature_names=delta_feature_names())
    return tree.fit(X, y)


def majority_baseline(labels: Sequence) -> float:
    if not labels:
        return 0.0
    _, counts = np.unique([str(x) for x in labels], return_counts=True)
    return float(counts.max() / len(labels))

"""Random-forest classifier over flattened multi-view features.

Trees greedily minimize the weighted cross-entropy of candidate splits.
Candidate thresholds are the midpoints between consecutive distinct sorted
values of each scanned dimension, scanned exhaustively over ``mtry``
randomly chosen dimensions per node, so the minimal-entropy claim is
directly checkable. Each tree draws from its own seeded stream derived from
(seed, tree index); training with any worker count yields the same forest.

The low-level split scan is shared with the survival-forest imputer, which
scores candidates on observed values only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import substream

__all__ = ["ForestConfig", "TreeNode", "Forest", "train_forest"]

FORMAT_NAME = "camsel-forest"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 20
    max_depth: int = 20
    min_leaf: int = 5
    mtry: int | None = None  # None: ceil(sqrt(n_dims)) at train time
    bootstrap: bool = True
    track_members: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")

    def resolve_mtry(self, n_dims: int) -> int:
        if self.mtry is not None:
            return min(self.mtry, n_dims)
        return min(n_dims, math.ceil(math.sqrt(n_dims)))


class TreeNode:
    """Internal node (split_dim, threshold, children) or leaf (histogram).

    Leaves hold per-class counts of the training rows that reached them and,
    when member tracking is on, the sorted unique original sample ids.
    """

    __slots__ = ("split_dim", "threshold", "left", "right", "histogram", "member_ids")

    def __init__(
        self,
        split_dim: int = -1,
        threshold: float = 0.0,
        left: "TreeNode | None" = None,
        right: "TreeNode | None" = None,
        histogram: np.ndarray | None = None,
        member_ids: np.ndarray | None = None,
    ) -> None:
        self.split_dim = split_dim
        self.threshold = threshold
        self.left = left
        self.right = right
        self.histogram = histogram
        self.member_ids = member_ids

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            d: dict = {"hist": [int(c) for c in self.histogram]}
            if self.member_ids is not None:
                d["members"] = [int(i) for i in self.member_ids]
            return d
        return {
            "dim": int(self.split_dim),
            "thr": float(self.threshold),
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "TreeNode":
        if "hist" in d:
            members = d.get("members")
            return TreeNode(
                histogram=np.asarray(d["hist"], dtype=np.int64),
                member_ids=None if members is None else np.asarray(members, dtype=np.int64),
            )
        return TreeNode(
            split_dim=int(d["dim"]),
            threshold=float(d["thr"]),
            left=TreeNode.from_dict(d["left"]),
            right=TreeNode.from_dict(d["right"]),
        )


def _nlogn(x: np.ndarray) -> np.ndarray:
    out = np.zeros(x.shape, dtype=np.float64)
    np.multiply(x, np.log(x, out=out, where=x > 0), out=out, where=x > 0)
    return out


def scan_candidates(
    values: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    min_leaf: int,
) -> tuple[float, int, float] | None:
    """Best midpoint split of one dimension by weighted children entropy.

    Returns (score, imbalance, threshold) of the minimal-entropy candidate,
    ties broken toward the most balanced then the lowest position, or None
    when no candidate leaves ``min_leaf`` values on each side. ``score`` is
    sum over children of |child|/n * H(child) with natural-log entropy.
    """
    m = values.size
    if m < 2 * min_leaf:
        return None
    order = np.argsort(values, kind="stable")
    v = values[order]
    onehot = np.zeros((m, n_classes), dtype=np.int64)
    onehot[np.arange(m), labels[order]] = 1
    cum = onehot.cumsum(axis=0)
    # split after position i: left = [0..i], right = [i+1..m-1]
    pos = np.arange(min_leaf - 1, m - min_leaf)
    pos = pos[v[pos] < v[pos + 1]]
    if pos.size == 0:
        return None
    nl = (pos + 1).astype(np.float64)
    nr = m - nl
    cl = cum[pos].astype(np.float64)
    cr = (cum[-1] - cum[pos]).astype(np.float64)
    score = (_nlogn(nl) - _nlogn(cl).sum(axis=1) + _nlogn(nr) - _nlogn(cr).sum(axis=1)) / m
    imbalance = np.abs(nl - nr)
    best = np.lexsort((pos, imbalance, score))[0]
    thr = (v[pos[best]] + v[pos[best] + 1]) / 2.0
    return float(score[best]), int(imbalance[best]), float(thr)


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    dims: np.ndarray,
    n_classes: int,
    min_leaf: int,
    mask: np.ndarray | None = None,
) -> tuple[int, float] | None:
    """Best (dim, threshold) over the scanned dims at one node.

    When ``mask`` is given, only rows observed in a dimension contribute to
    that dimension's candidates and entropies. Ties across dims fall to the
    earlier dim in scan order.
    """
    best_key: tuple[float, int, int] | None = None
    best_out: tuple[int, float] | None = None
    for oi, d in enumerate(dims):
        if mask is None:
            v = X[rows, d]
            lab = y[rows]
        else:
            obs = mask[rows, d]
            v = X[rows[obs], d]
            lab = y[rows[obs]]
        cand = scan_candidates(v, lab, n_classes, min_leaf)
        if cand is None:
            continue
        score, imb, thr = cand
        key = (score, imb, oi)
        if best_key is None or key < best_key:
            best_key = key
            best_out = (int(d), thr)
    return best_out


def _grow_classifier(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    depth: int,
    cfg: ForestConfig,
    mtry: int,
    n_classes: int,
    rng: np.random.Generator,
    sample_ids: np.ndarray,
) -> TreeNode:
    labels = y[rows]
    hist = np.bincount(labels, minlength=n_classes)
    pure = (hist > 0).sum() <= 1
    if depth >= cfg.max_depth or rows.size < 2 * cfg.min_leaf or pure:
        return _make_leaf(hist, rows, sample_ids, cfg)
    dims = rng.permutation(X.shape[1])[:mtry]
    split = best_split(X, y, rows, dims, n_classes, cfg.min_leaf)
    if split is None:
        return _make_leaf(hist, rows, sample_ids, cfg)
    dim, thr = split
    go_left = X[rows, dim] <= thr
    node = TreeNode(split_dim=dim, threshold=thr)
    node.left = _grow_classifier(
        X, y, rows[go_left], depth + 1, cfg, mtry, n_classes, rng, sample_ids
    )
    node.right = _grow_classifier(
        X, y, rows[~go_left], depth + 1, cfg, mtry, n_classes, rng, sample_ids
    )
    return node


def _make_leaf(
    hist: np.ndarray, rows: np.ndarray, sample_ids: np.ndarray, cfg: ForestConfig
) -> TreeNode:
    members = None
    if cfg.track_members:
        members = np.unique(sample_ids[rows])
    return TreeNode(histogram=hist.astype(np.int64), member_ids=members)


def _route_leaf(root: TreeNode, x: np.ndarray) -> TreeNode:
    node = root
    while not node.is_leaf:
        node = node.left if x[node.split_dim] <= node.threshold else node.right
    return node


def route_many(root: TreeNode, X: np.ndarray) -> list[TreeNode]:
    """Leaf reached by every row, computed by batched partition routing."""
    out: list[TreeNode | None] = [None] * X.shape[0]
    stack: list[tuple[TreeNode, np.ndarray]] = [(root, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        if node.is_leaf:
            for i in idx:
                out[i] = node
            continue
        go_left = X[idx, node.split_dim] <= node.threshold
        stack.append((node.left, idx[go_left]))
        stack.append((node.right, idx[~go_left]))
    return out  # type: ignore[return-value]


class Forest:
    """Trained ensemble; immutable and safe for concurrent prediction."""

    def __init__(
        self,
        trees: list[TreeNode],
        config: ForestConfig,
        n_classes: int,
        n_features: int,
    ) -> None:
        self.trees = trees
        self.config = config
        self.n_classes = n_classes
        self.n_features = n_features

    def _check_input(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(
                f"expected {self.n_features} features, got {X.shape[1]}"
            )
        if np.isnan(X).any():
            raise ValueError("input has missing values; impute before predicting")
        return X

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Average of per-tree leaf class frequencies; rows sum to 1."""
        arr = np.asarray(X, dtype=np.float64)
        single = arr.ndim == 1
        arr = self._check_input(arr)
        acc = np.zeros((arr.shape[0], self.n_classes))
        for root in self.trees:
            leaves = route_many(root, arr)
            for i, leaf in enumerate(leaves):
                h = leaf.histogram
                acc[i] += h / h.sum()
        acc /= len(self.trees)
        return acc[0] if single else acc

    def predict(self, X: np.ndarray) -> int | np.ndarray:
        """Most probable camera; ties go to the lowest index."""
        proba = self.predict_proba(X)
        if proba.ndim == 1:
            return int(np.argmax(proba))
        return np.argmax(proba, axis=1)

    def dominant_contributors(self, x: np.ndarray) -> list[int]:
        """Training sample ids in the reached leaves, ranked by how many
        trees' leaves contain them; ties by ascending id."""
        if not self.config.track_members:
            raise ValueError("forest was trained without member tracking")
        x = np.asarray(x, dtype=np.float64)
        counts: dict[int, int] = {}
        for root in self.trees:
            leaf = _route_leaf(root, x)
            for sid in leaf.member_ids:
                counts[int(sid)] = counts.get(int(sid), 0) + 1
        return sorted(counts, key=lambda sid: (-counts[sid], sid))

    def to_json(self) -> str:
        doc = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "config": {
                "n_trees": self.config.n_trees,
                "max_depth": self.config.max_depth,
                "min_leaf": self.config.min_leaf,
                "mtry": self.config.mtry,
                "bootstrap": self.config.bootstrap,
                "track_members": self.config.track_members,
                "seed": self.config.seed,
            },
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "trees": [t.to_dict() for t in self.trees],
        }
        return json.dumps(doc, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "Forest":
        doc = json.loads(text)
        if doc.get("format") != FORMAT_NAME:
            raise ValueError("not a forest model file")
        if doc.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model version {doc.get('version')}")
        cfg = ForestConfig(**doc["config"])
        trees = [TreeNode.from_dict(t) for t in doc["trees"]]
        return Forest(trees, cfg, int(doc["n_classes"]), int(doc["n_features"]))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @staticmethod
    def load(path: str | Path) -> "Forest":
        with open(path, "r", encoding="utf-8") as fh:
            return Forest.from_json(fh.read())


def _train_one_tree(
    t: int, X: np.ndarray, y: np.ndarray, cfg: ForestConfig, mtry: int, n_classes: int
) -> TreeNode:
    rng = substream(cfg.seed, "tree", t)
    n = X.shape[0]
    if cfg.bootstrap:
        sample_ids = rng.integers(0, n, size=n)
    else:
        sample_ids = np.arange(n)
    Xb = X[sample_ids]
    yb = y[sample_ids]
    rows = np.arange(n)
    return _grow_classifier(Xb, yb, rows, 0, cfg, mtry, n_classes, rng, sample_ids)


def train_forest(
    X: np.ndarray,
    y: np.ndarray,
    config: ForestConfig = ForestConfig(),
    n_classes: int | None = None,
    n_workers: int = 1,
) -> Forest:
    """Fit a forest on complete flattened samples.

    Rejects data containing NaN (missing views must be imputed first) and
    single-class label sets. Results are identical for any ``n_workers``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be (n, d) with matching labels")
    if np.isnan(X).any():
        raise ValueError("training data has missing values; impute first")
    present = np.unique(y)
    if present.size < 2:
        raise ValueError("training data must contain at least 2 classes")
    if n_classes is None:
        n_classes = int(present.max()) + 1
    mtry = config.resolve_mtry(X.shape[1])

    if n_workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            trees = list(
                pool.map(
                    lambda t: _train_one_tree(t, X, y, config, mtry, n_classes),
                    range(config.n_trees),
                )
            )
    else:
        trees = [
            _train_one_tree(t, X, y, config, mtry, n_classes)
            for t in range(config.n_trees)
        ]
    return Forest(trees, config, n_classes, X.shape[1])

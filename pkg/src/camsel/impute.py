"""Random survival forest imputation of missing camera views.

The imputer grows label-supervised trees over the pooled complete and
incomplete samples. At every node only observed values of the scanned
dimension enter the split optimization; samples missing that dimension are
routed by a value drawn uniformly from the node-local observed range, and
the draw is discarded once the sample has been routed; no stored decision
depends on it. Each missing scalar is then filled with the mean of the
observed values of its dimension pooled over the sample's terminal nodes
across all trees.

Nearest-neighbor and per-dimension-mean imputation are provided as
baselines, along with range-normalized error reporting against withheld
ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Dataset
from .forest import best_split
from .rng import substream

__all__ = [
    "SurvivalConfig",
    "SurvivalForest",
    "ImputationResult",
    "ImputationErrorReport",
    "node_draw_bounds",
    "impute_rsf",
    "impute_nn",
    "impute_mean",
    "imputation_error",
]


@dataclass(frozen=True)
class SurvivalConfig:
    """Hyperparameters of the imputation forest.

    ``n_iterations`` > 1 re-runs the whole procedure with the previous
    pass's imputations standing in as soft observations for split scoring
    and routing (terminal averaging always pools truly observed values
    only); the final pass overwrites. ``draw_bounds`` picks node-local or
    dataset-global ranges for the uniform routing draws. ``aggregation``
    "pooled" averages the multiset union of observed terminal values across
    trees; "per_tree" averages per-tree means instead.
    """

    n_trees: int = 20
    max_depth: int = 20
    min_leaf: int = 5
    mtry: int | None = None
    n_iterations: int = 1
    draw_bounds: str = "node"
    aggregation: str = "pooled"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1 or self.max_depth < 1 or self.min_leaf < 1:
            raise ValueError("n_trees, max_depth, min_leaf must be >= 1")
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be >= 1")
        if self.draw_bounds not in ("node", "global"):
            raise ValueError("draw_bounds must be 'node' or 'global'")
        if self.aggregation not in ("pooled", "per_tree"):
            raise ValueError("aggregation must be 'pooled' or 'per_tree'")

    def resolve_mtry(self, n_dims: int) -> int:
        if self.mtry is not None:
            return min(self.mtry, n_dims)
        return min(n_dims, int(np.ceil(np.sqrt(n_dims))))


class _SNode:
    __slots__ = ("split_dim", "threshold", "left", "right", "leaf_id")

    def __init__(self) -> None:
        self.split_dim = -1
        self.threshold = 0.0
        self.left: _SNode | None = None
        self.right: _SNode | None = None
        self.leaf_id = -1

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class _STree:
    root: _SNode
    leaf_members: list[np.ndarray]  # global row ids per terminal node
    leaf_of_row: np.ndarray  # (n_all,) terminal index of every training row


def node_draw_bounds(
    X: np.ndarray,
    mask: np.ndarray,
    rows: np.ndarray,
    dim: int,
    global_range: tuple[float, float],
) -> tuple[float, float]:
    """Uniform-draw bounds for a dimension at a node.

    Observed min/max among the node's samples; falls back to the
    dataset-global observed range when nothing is observed at the node.
    """
    obs = mask[rows, dim]
    if not obs.any():
        return global_range
    vals = X[rows[obs], dim]
    return float(vals.min()), float(vals.max())


class SurvivalForest:
    """Imputation forest: split structure plus terminal-node residency.

    Every training row resides in exactly one terminal node per tree; the
    uniform draws used to route incompletely observed rows are never stored.
    """

    def __init__(
        self, trees: list[_STree], config: SurvivalConfig, n_dims: int,
        global_ranges: np.ndarray,
    ) -> None:
        self.trees = trees
        self.config = config
        self.n_dims = n_dims
        self.global_ranges = global_ranges

    def route(
        self, X: np.ndarray, mask: np.ndarray, rng: np.random.Generator
    ) -> np.ndarray:
        """Terminal node index per row and tree, shape (n, n_trees).

        Rows missing a split dimension are routed by fresh uniform draws
        from ``rng`` over the stored global ranges (node-local occupancy is
        a training-time quantity). Fully observed rows route without any
        draw, so their terminals are independent of ``rng``.
        """
        X = np.asarray(X, dtype=np.float64)
        mask = np.asarray(mask, dtype=bool)
        out = np.empty((X.shape[0], len(self.trees)), dtype=np.int64)
        for ti, tree in enumerate(self.trees):
            for i in range(X.shape[0]):
                node = tree.root
                while not node.is_leaf:
                    d = node.split_dim
                    if mask[i, d]:
                        v = X[i, d]
                    else:
                        lo, hi = self.global_ranges[d]
                        v = rng.uniform(lo, hi)
                    node = node.left if v <= node.threshold else node.right
                out[i, ti] = node.leaf_id
        return out


@dataclass
class ImputationResult:
    """Completed dataset plus provenance of every scalar.

    ``provenance`` is True where the value was filled in, False where it
    passed through from the input observation. ``draw_bounds`` maps a
    dimension to the envelope of uniform-draw intervals used while routing
    (survival-forest method only).
    """

    dataset: Dataset
    provenance: np.ndarray
    draw_bounds: dict[int, tuple[float, float]] = field(default_factory=dict)
    forest: SurvivalForest | None = None


def _grow_survival(
    Xw: np.ndarray,
    Mw: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    depth: int,
    cfg: SurvivalConfig,
    mtry: int,
    n_classes: int,
    rng: np.random.Generator,
    global_ranges: np.ndarray,
    leaf_members: list[np.ndarray],
    bounds_log: dict[int, tuple[float, float]],
) -> _SNode:
    node = _SNode()
    if depth >= cfg.max_depth or rows.size < 2 * cfg.min_leaf:
        node.leaf_id = len(leaf_members)
        leaf_members.append(rows)
        return node
    dims = rng.permutation(Xw.shape[1])[:mtry]
    split = best_split(Xw, y, rows, dims, n_classes, cfg.min_leaf, mask=Mw)
    if split is None:
        node.leaf_id = len(leaf_members)
        leaf_members.append(rows)
        return node
    dim, thr = split
    node.split_dim, node.threshold = dim, thr
    obs = Mw[rows, dim]
    route_vals = np.empty(rows.size, dtype=np.float64)
    route_vals[obs] = Xw[rows[obs], dim]
    n_miss = int((~obs).sum())
    if n_miss:
        if cfg.draw_bounds == "node":
            lo, hi = node_draw_bounds(
                Xw, Mw, rows, dim, tuple(global_ranges[dim])
            )
        else:
            lo, hi = global_ranges[dim]
        prev = bounds_log.get(dim)
        bounds_log[dim] = (
            (lo, hi) if prev is None else (min(prev[0], lo), max(prev[1], hi))
        )
        route_vals[~obs] = rng.uniform(lo, hi, size=n_miss)
    go_left = route_vals <= thr
    node.left = _grow_survival(
        Xw, Mw, y, rows[go_left], depth + 1, cfg, mtry, n_classes, rng,
        global_ranges, leaf_members, bounds_log,
    )
    node.right = _grow_survival(
        Xw, Mw, y, rows[~go_left], depth + 1, cfg, mtry, n_classes, rng,
        global_ranges, leaf_members, bounds_log,
    )
    return node


def _build_tree(
    pass_ix: int,
    t: int,
    Xw: np.ndarray,
    Mw: np.ndarray,
    y: np.ndarray,
    cfg: SurvivalConfig,
    mtry: int,
    n_classes: int,
    global_ranges: np.ndarray,
) -> tuple[_STree, dict[int, tuple[float, float]]]:
    rng = substream(cfg.seed, "pass", pass_ix, "tree", t)
    leaf_members: list[np.ndarray] = []
    bounds_log: dict[int, tuple[float, float]] = {}
    root = _grow_survival(
        Xw, Mw, y, np.arange(Xw.shape[0]), 0, cfg, mtry, n_classes, rng,
        global_ranges, leaf_members, bounds_log,
    )
    leaf_of_row = np.empty(Xw.shape[0], dtype=np.int64)
    for li, rows in enumerate(leaf_members):
        leaf_of_row[rows] = li
    return _STree(root, leaf_members, leaf_of_row), bounds_log


def _union_arrays(
    complete: Dataset, incomplete: Dataset
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if complete.schema.dims != incomplete.schema.dims:
        raise ValueError("complete and incomplete datasets disagree on K*F")
    X = np.vstack([complete.X, incomplete.X])
    M = np.vstack([complete.mask, incomplete.mask])
    y = np.concatenate([complete.labels, incomplete.labels])
    return X, M, y


def _observed_ranges(X: np.ndarray, M: np.ndarray) -> np.ndarray:
    counts = M.sum(axis=0)
    bare = np.flatnonzero(counts == 0)
    if bare.size:
        raise ValueError(f"dimension {int(bare[0])} has no observed value anywhere")
    lo = np.where(M, X, np.inf).min(axis=0)
    hi = np.where(M, X, -np.inf).max(axis=0)
    return np.stack([lo, hi], axis=1)


def impute_rsf(
    complete: Dataset,
    incomplete: Dataset,
    config: SurvivalConfig = SurvivalConfig(),
    n_workers: int = 1,
) -> ImputationResult:
    """Fill the incomplete dataset's missing scalars by terminal-node means.

    Trees are grown over the pooled complete and incomplete samples with
    labels as the split target. Observed values pass through bit-identically
    and rows with nothing missing are returned unchanged. Deterministic for
    a fixed seed regardless of ``n_workers``.
    """
    if len(complete) == 0:
        raise ValueError("empty complete set: no distribution to learn from")
    X, M, y = _union_arrays(complete, incomplete)
    global_ranges = _observed_ranges(X, M)
    n_classes = int(y.max()) + 1
    mtry = config.resolve_mtry(X.shape[1])
    n_inc = len(incomplete)
    inc_rows = len(complete) + np.arange(n_inc)
    inc_mask = M[inc_rows]

    obs_sum = np.where(M, X, 0.0).sum(axis=0)
    obs_cnt = M.sum(axis=0)
    global_mean = obs_sum / obs_cnt

    Xw, Mw = X, M
    imputed = None
    trees: list[_STree] = []
    bounds_all: dict[int, tuple[float, float]] = {}
    for pass_ix in range(config.n_iterations):
        build = lambda t: _build_tree(  # noqa: E731
            pass_ix, t, Xw, Mw, y, config, mtry, n_classes, global_ranges
        )
        if n_workers > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=n_workers) as pool:
                built = list(pool.map(build, range(config.n_trees)))
        else:
            built = [build(t) for t in range(config.n_trees)]
        trees = [tree for tree, _ in built]
        for _, blog in built:
            for d, (lo, hi) in blog.items():
                prev = bounds_all.get(d)
                bounds_all[d] = (
                    (lo, hi) if prev is None else (min(prev[0], lo), max(prev[1], hi))
                )
        imputed = _aggregate(trees, X, M, inc_rows, config, global_mean)
        if pass_ix + 1 < config.n_iterations:
            Xw = X.copy()
            Xw[inc_rows] = np.where(inc_mask, X[inc_rows], imputed)
            Mw = np.ones_like(M)

    filled = np.where(inc_mask, incomplete.X, imputed)
    out = incomplete.replace_values(filled, np.ones_like(inc_mask))
    forest = SurvivalForest(trees, config, X.shape[1], global_ranges)
    return ImputationResult(
        dataset=out,
        provenance=~inc_mask,
        draw_bounds=bounds_all,
        forest=forest,
    )


def _aggregate(
    trees: list[_STree],
    X: np.ndarray,
    M: np.ndarray,
    inc_rows: np.ndarray,
    config: SurvivalConfig,
    global_mean: np.ndarray,
) -> np.ndarray:
    """Per-row, per-dim estimates from terminal-node observed values."""
    D = X.shape[1]
    acc_num = np.zeros((inc_rows.size, D))
    acc_den = np.zeros((inc_rows.size, D))
    for tree in trees:
        nl = len(tree.leaf_members)
        sums = np.zeros((nl, D))
        counts = np.zeros((nl, D))
        for li, rows in enumerate(tree.leaf_members):
            mm = M[rows]
            sums[li] = np.where(mm, X[rows], 0.0).sum(axis=0)
            counts[li] = mm.sum(axis=0)
        leaf_ix = tree.leaf_of_row[inc_rows]
        if config.aggregation == "pooled":
            acc_num += sums[leaf_ix]
            acc_den += counts[leaf_ix]
        else:
            with np.errstate(invalid="ignore"):
                means = sums / counts
            has = counts[leaf_ix] > 0
            acc_num += np.where(has, np.nan_to_num(means[leaf_ix]), 0.0)
            acc_den += has
    with np.errstate(invalid="ignore"):
        est = acc_num / acc_den
    return np.where(acc_den > 0, est, global_mean)


def impute_nn(complete: Dataset, incomplete: Dataset) -> ImputationResult:
    """Copy missing dims from the range-normalized nearest complete sample.

    Distance is L2 over the incomplete sample's observed dimensions, each
    normalized by the pooled observed range; zero-range dimensions carry no
    distance. Ties go to the earliest complete sample.
    """
    if len(complete) == 0:
        raise ValueError("empty complete set")
    X, M, _ = _union_arrays(complete, incomplete)
    ranges = _observed_ranges(X, M)
    width = ranges[:, 1] - ranges[:, 0]
    safe = np.where(width > 0, width, 1.0)
    Xc = complete.X / safe
    filled = incomplete.X.copy()
    for i in range(len(incomplete)):
        obs = incomplete.mask[i]
        if not obs.any():
            raise ValueError(f"incomplete sample {i} shares no observed dimension")
        diff = Xc[:, obs] - incomplete.X[i, obs] / safe[obs]
        j = int(np.argmin(np.einsum("ij,ij->i", diff, diff)))
        filled[i, ~obs] = complete.X[j, ~obs]
    out = incomplete.replace_values(filled, np.ones_like(incomplete.mask))
    return ImputationResult(dataset=out, provenance=~incomplete.mask)


def impute_mean(complete: Dataset, incomplete: Dataset) -> ImputationResult:
    """Fill each missing scalar with its dimension's mean over the complete set."""
    if len(complete) == 0:
        raise ValueError("empty complete set")
    means = complete.X.mean(axis=0)
    filled = np.where(incomplete.mask, incomplete.X, means)
    out = incomplete.replace_values(filled, np.ones_like(incomplete.mask))
    return ImputationResult(dataset=out, provenance=~incomplete.mask)


@dataclass
class ImputationErrorReport:
    """Range-normalized errors of the imputed scalars.

    ``curve`` pairs each threshold t in [0, 1] with the fraction of imputed
    scalars whose error is <= t. Dimensions whose true range is zero cannot
    be normalized; their scalars are excluded and listed.
    """

    errors: np.ndarray
    thresholds: np.ndarray
    curve: np.ndarray
    mean_error: float
    excluded_dims: list[int]

    def fraction_within(self, t: float) -> float:
        if self.errors.size == 0:
            return 1.0
        return float(np.mean(self.errors <= t))


def imputation_error(
    result: ImputationResult, truth: Dataset, n_thresholds: int = 101
) -> ImputationErrorReport:
    """Compare imputed scalars against withheld truth.

    Error is |imputed - true| / (per-dimension true range), collected over
    the positions flagged imputed in ``result.provenance``.
    """
    d = result.dataset
    if len(truth) != len(d) or truth.schema.dims != d.schema.dims:
        raise ValueError("truth does not match the imputed dataset's shape")
    if not truth.complete_rows().all():
        raise ValueError("truth dataset must be complete")
    ranges = truth.dim_ranges
    width = ranges[:, 1] - ranges[:, 0]
    excluded = [int(i) for i in np.flatnonzero(width == 0)]
    usable = width > 0
    prov = result.provenance & usable[None, :]
    raw = np.abs(d.X - truth.X)
    with np.errstate(invalid="ignore", divide="ignore"):
        normed = raw / width[None, :]
    errors = normed[prov]
    thresholds = np.linspace(0.0, 1.0, n_thresholds)
    if errors.size:
        curve = np.array([(errors <= t).mean() for t in thresholds])
        mean_error = float(errors.mean())
    else:
        curve = np.ones_like(thresholds)
        mean_error = 0.0
    return ImputationErrorReport(
        errors=errors,
        thresholds=thresholds,
        curve=curve,
        mean_error=mean_error,
        excluded_dims=excluded,
    )

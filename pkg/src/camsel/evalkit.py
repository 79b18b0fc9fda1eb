"""Evaluation harness: sequence-level cross-validation and reporting.

Folds are built from whole sequences so no sequence straddles train and
test, mirroring leave-one-sequence-out protocols. Sequence-to-fold
assignment hashes each sequence id together with the seed, sorts by the
hash, and deals round-robin, so the split is deterministic yet opaque to
record order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, split_complete_incomplete
from .forest import Forest
from .impute import (
    ImputationErrorReport,
    SurvivalConfig,
    imputation_error,
    impute_mean,
    impute_nn,
    impute_rsf,
)
from .pipeline import PipelineConfig, train_full
from .rng import derive_seed, substream

__all__ = [
    "EvalReport",
    "cv_splits",
    "evaluate",
    "baseline_constant",
    "switch_stats",
    "mask_tail_mnar",
    "imputation_benchmark",
]


@dataclass
class EvalReport:
    overall_accuracy: float
    per_camera_accuracy: dict[int, float | None]
    confusion: np.ndarray  # rows: true camera, cols: predicted
    fold_accuracies: list[float]
    n_samples: int
    camera_names: tuple[str, ...]
    switch_stats: dict | None = None
    imputation: dict | None = None

    def to_dict(self) -> dict:
        doc = {
            "overall_accuracy": self.overall_accuracy,
            "per_camera_accuracy": {
                self.camera_names[k]: v for k, v in self.per_camera_accuracy.items()
            },
            "confusion": [[int(c) for c in row] for row in self.confusion],
            "fold_accuracies": self.fold_accuracies,
            "n_samples": self.n_samples,
        }
        if self.switch_stats is not None:
            doc["switch_stats"] = self.switch_stats
        if self.imputation is not None:
            doc["imputation"] = self.imputation
        return doc


def cv_splits(
    d: Dataset, n_folds: int = 3, seed: int = 0
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Whole-sequence folds: list of (train row ids, test row ids).

    Test sets partition the dataset; every fold's test set is a union of
    complete sequences.
    """
    sequences = sorted(set(d.sequence_ids))
    if len(sequences) < n_folds:
        raise ValueError(
            f"need at least {n_folds} distinct sequences, have {len(sequences)}"
        )

    def key(seq: str) -> str:
        return hashlib.sha256(f"{seed}:{seq}".encode("utf-8")).hexdigest()

    ordered = sorted(sequences, key=key)
    fold_of = {seq: i % n_folds for i, seq in enumerate(ordered)}
    seq_col = np.asarray([fold_of[s] for s in d.sequence_ids])
    out = []
    for f in range(n_folds):
        test = np.flatnonzero(seq_col == f)
        train = np.flatnonzero(seq_col != f)
        out.append((train, test))
    return out


class _ConstantPredictor:
    """Always selects the modal training camera (ties to the lowest index)."""

    def __init__(self, camera: int, n_classes: int) -> None:
        self.camera = camera
        self.n_classes = n_classes

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X))
        return np.full(X.shape[0], self.camera, dtype=np.int64)


def baseline_constant(d: Dataset) -> _ConstantPredictor:
    if len(d) == 0:
        raise ValueError("empty dataset")
    counts = np.bincount(d.labels, minlength=d.K)
    return _ConstantPredictor(int(np.argmax(counts)), d.K)


def _confusion(true: np.ndarray, pred: np.ndarray, K: int) -> np.ndarray:
    cm = np.zeros((K, K), dtype=np.int64)
    np.add.at(cm, (true, pred), 1)
    return cm


def _report_from_confusion(
    cm: np.ndarray, fold_acc: list[float], names: tuple[str, ...]
) -> EvalReport:
    total = int(cm.sum())
    overall = float(np.trace(cm)) / total if total else 0.0
    per_cam: dict[int, float | None] = {}
    for k in range(cm.shape[0]):
        row = cm[k].sum()
        per_cam[k] = float(cm[k, k] / row) if row else None
    return EvalReport(
        overall_accuracy=overall,
        per_camera_accuracy=per_cam,
        confusion=cm,
        fold_accuracies=fold_acc,
        n_samples=total,
        camera_names=names,
    )


def evaluate(
    model_or_config,
    d: Dataset,
    folds: list[tuple[np.ndarray, np.ndarray]] | None = None,
    aux: Dataset | None = None,
    n_workers: int = 1,
) -> EvalReport:
    """Score a trained model, or train-and-score a pipeline config per fold.

    A trained model (anything with ``predict``) is scored on the complete
    dataset directly. A ``PipelineConfig`` requires folds: each fold trains
    on its train rows (plus the optional shared aux pool) and accumulates
    held-out predictions into one confusion matrix. Per-camera accuracy is
    the per-true-class recall.
    """
    if not d.complete_rows().all():
        raise ValueError("evaluation data must be complete")
    names = d.schema.camera_names
    if isinstance(model_or_config, PipelineConfig):
        if folds is None:
            raise ValueError("pipeline evaluation needs folds")
        cm = np.zeros((d.K, d.K), dtype=np.int64)
        fold_acc = []
        for i, (train, test) in enumerate(folds):
            cfg = replace(
                model_or_config, seed=derive_seed(model_or_config.seed, "fold", i)
            )
            model, _ = train_full(d.subset(train), aux, cfg, n_workers=n_workers)
            pred = np.asarray(model.predict(d.X[test]))
            fold_cm = _confusion(d.labels[test], pred, d.K)
            cm += fold_cm
            fold_acc.append(float(np.trace(fold_cm) / fold_cm.sum()))
        return _report_from_confusion(cm, fold_acc, names)

    model = model_or_config
    if folds is None:
        pred = np.asarray(model.predict(d.X))
        cm = _confusion(d.labels, pred, d.K)
        return _report_from_confusion(
            cm, [float(np.trace(cm) / cm.sum())] if cm.sum() else [], names
        )
    cm = np.zeros((d.K, d.K), dtype=np.int64)
    fold_acc = []
    for train, test in folds:
        pred = np.asarray(model.predict(d.X[test]))
        fold_cm = _confusion(d.labels[test], pred, d.K)
        cm += fold_cm
        fold_acc.append(float(np.trace(fold_cm) / fold_cm.sum()))
    return _report_from_confusion(cm, fold_acc, names)


def switch_stats(labels: np.ndarray) -> dict:
    """Segment statistics of a camera stream (for cut-rate analysis)."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return {"segment_count": 0, "min_segment": 0, "mean_segment": 0.0}
    boundaries = np.flatnonzero(np.diff(labels) != 0)
    starts = np.concatenate([[0], boundaries + 1])
    ends = np.concatenate([boundaries + 1, [labels.size]])
    lengths = ends - starts
    return {
        "segment_count": int(lengths.size),
        "min_segment": int(lengths.min()),
        "mean_segment": float(lengths.mean()),
    }


def mask_tail_mnar(
    truth: Dataset, fraction: float, p_miss: float, seed: int = 0
) -> Dataset:
    """Hide non-selected blocks in the last ``fraction`` of a complete set.

    Reproduces the masking protocol used to score imputation on a fully
    recorded game: early frames stay complete, each late frame keeps its
    selected camera and loses each other block with probability ``p_miss``.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    if not truth.complete_rows().all():
        raise ValueError("masking expects a complete dataset")
    n = len(truth)
    start = n - int(np.ceil(fraction * n))
    rng = substream(seed, "tail-mask")
    hide = np.zeros((n, truth.K), dtype=bool)
    tail = np.arange(start, n)
    hide[tail] = rng.random(size=(tail.size, truth.K)) < p_miss
    hide[np.arange(n), truth.labels] = False
    mask = ~np.repeat(hide, truth.F, axis=1).reshape(n, truth.K * truth.F)
    X = np.where(mask, truth.X, np.nan)
    return truth.replace_values(X, mask)


def imputation_benchmark(
    visible: Dataset,
    truth: Dataset,
    survival: SurvivalConfig = SurvivalConfig(),
    methods: tuple[str, ...] = ("rsf", "nn", "mean"),
    n_workers: int = 1,
) -> dict[str, ImputationErrorReport]:
    """Impute the visible set's incomplete rows and score against truth."""
    comp_rows = np.flatnonzero(visible.complete_rows())
    inc_rows = np.flatnonzero(~visible.complete_rows())
    complete = visible.subset(comp_rows)
    incomplete = visible.subset(inc_rows)
    truth_inc = truth.subset(inc_rows)
    out: dict[str, ImputationErrorReport] = {}
    for method in methods:
        if method == "rsf":
            res = impute_rsf(complete, incomplete, survival, n_workers=n_workers)
        elif method == "nn":
            res = impute_nn(complete, incomplete)
        elif method == "mean":
            res = impute_mean(complete, incomplete)
        else:
            raise ValueError(f"unknown imputation method {method!r}")
        out[method] = imputation_error(res, truth_inc)
    return out

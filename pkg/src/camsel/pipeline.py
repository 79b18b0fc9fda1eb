"""Training orchestration and sequence-level prediction.

The full training flow mirrors how scarce on-air logs get enriched from
archive footage: split the auxiliary pool into complete and incomplete
parts, impute the incomplete part with the survival forest, verify every
imputed sample against a model trained on complete data only, then train
the final forest on the main data plus whatever survived verification.

Per-frame selection is instantaneous (no temporal coupling); an optional
greedy smoother enforces a minimum shot duration afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, split_complete_incomplete
from .forest import Forest, ForestConfig, train_forest
from .impute import SurvivalConfig, impute_rsf
from .rng import derive_seed, substream

__all__ = [
    "PipelineConfig",
    "SelectionTimeline",
    "verify_imputed",
    "train_full",
    "final_forest_config",
    "predict_sequence",
    "smooth_timeline",
    "smooth_labels",
]


@dataclass(frozen=True)
class PipelineConfig:
    forest: ForestConfig = field(default_factory=ForestConfig)
    survival: SurvivalConfig = field(default_factory=SurvivalConfig)
    verification_enabled: bool = True
    min_confidence: float = 0.0
    balance: str = "none"  # or "downsample"
    smoothing_enabled: bool = False
    min_duration: int = 1  # frames a shot must persist before a switch
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.min_confidence <= 1.0:
            raise ValueError("min_confidence must be in [0, 1]")
        if self.balance not in ("none", "downsample"):
            raise ValueError("balance must be 'none' or 'downsample'")
        if self.min_duration < 1:
            raise ValueError("min_duration must be >= 1 frame")


@dataclass
class SelectionTimeline:
    """Per-frame camera choice with the probabilities behind it."""

    sequence_id: str
    frames: np.ndarray
    cameras: np.ndarray
    probas: np.ndarray

    def __post_init__(self) -> None:
        n = self.frames.shape[0]
        if self.cameras.shape != (n,) or self.probas.shape[0] != n:
            raise ValueError("timeline column lengths disagree")


def verify_imputed(
    imputed: Dataset, complete_model: Forest, min_confidence: float = 0.0
) -> tuple[Dataset, Dataset]:
    """Partition imputed samples by agreement with the complete-data model.

    A sample is accepted iff the model predicts its recorded label and the
    predicted probability of that label reaches ``min_confidence``. The two
    parts are disjoint and exhaust the input.
    """
    if imputed.schema.dims != complete_model.n_features:
        raise ValueError("model feature width does not match dataset")
    if complete_model.n_classes < imputed.K:
        raise ValueError("model has fewer classes than the dataset has cameras")
    if len(imputed) == 0:
        empty = np.array([], dtype=np.int64)
        return imputed.subset(empty), imputed.subset(empty)
    proba = complete_model.predict_proba(imputed.X)
    pred = np.argmax(proba, axis=1)
    label_p = proba[np.arange(len(imputed)), imputed.labels]
    ok = (pred == imputed.labels) & (label_p >= min_confidence)
    return imputed.subset(np.flatnonzero(ok)), imputed.subset(np.flatnonzero(~ok))


def _balance_downsample(
    X: np.ndarray, y: np.ndarray, n_classes: int, seed: int
) -> np.ndarray:
    """Row indices after downsampling every class to the minority count."""
    counts = np.bincount(y, minlength=n_classes)
    floor = counts[counts > 0].min()
    rng = substream(seed, "balance")
    keep: list[np.ndarray] = []
    for c in range(n_classes):
        rows = np.flatnonzero(y == c)
        if rows.size > floor:
            rows = rng.choice(rows, size=floor, replace=False)
        keep.append(rows)
    return np.sort(np.concatenate(keep))


def final_forest_config(config: PipelineConfig) -> ForestConfig:
    """Forest config with the final model's resolved sub-seed."""
    return replace(config.forest, seed=derive_seed(config.seed, "final-forest"))


def train_full(
    main: Dataset,
    aux: Dataset | None,
    config: PipelineConfig = PipelineConfig(),
    n_workers: int = 1,
) -> tuple[Forest, dict]:
    """Train the selection forest on main data, optionally enriched by aux.

    With no aux data this reduces exactly to ``train_forest`` on the main
    set (same model bytes for the same resolved seed). Otherwise the aux
    pool is split, its incomplete part imputed and verified, and the final
    forest trained on main + complete aux + accepted imputations, after
    optional class balancing.
    """
    if len(main) == 0:
        raise ValueError("main dataset is empty")
    if not main.complete_rows().all():
        raise ValueError("main dataset must be complete")
    report: dict = {
        "n_main": len(main),
        "n_aux": 0 if aux is None else len(aux),
    }
    fcfg = final_forest_config(config)

    if aux is None or len(aux) == 0:
        X_train, y_train = main.X, main.labels
        report.update(
            n_aux_complete=0, n_imputed=0, n_accepted=0, n_rejected=0
        )
    else:
        if aux.schema.dims != main.schema.dims:
            raise ValueError("aux dataset disagrees with main on K*F")
        aux_com, aux_inc = split_complete_incomplete(aux)
        report["n_aux_complete"] = len(aux_com)
        report["n_aux_incomplete"] = len(aux_inc)

        complete_pool = _concat(main, aux_com)
        scfg = replace(config.survival, seed=derive_seed(config.seed, "impute"))
        imputed = impute_rsf(complete_pool, aux_inc, scfg, n_workers=n_workers)
        report["n_imputed"] = len(imputed.dataset)

        if config.verification_enabled and len(imputed.dataset) > 0:
            vcfg = replace(
                config.forest, seed=derive_seed(config.seed, "verify-forest")
            )
            verify_model = train_forest(
                complete_pool.X,
                complete_pool.labels,
                vcfg,
                n_classes=main.K,
                n_workers=n_workers,
            )
            accepted, rejected = verify_imputed(
                imputed.dataset, verify_model, config.min_confidence
            )
        else:
            accepted, rejected = imputed.dataset, imputed.dataset.subset(
                np.array([], dtype=np.int64)
            )
        report["n_accepted"] = len(accepted)
        report["n_rejected"] = len(rejected)

        train_set = _concat(complete_pool, accepted)
        X_train, y_train = train_set.X, train_set.labels

    if config.balance == "downsample":
        rows = _balance_downsample(
            X_train, np.asarray(y_train), main.K, config.seed
        )
        X_train, y_train = X_train[rows], np.asarray(y_train)[rows]
    report["n_final_train"] = int(X_train.shape[0])
    report["class_counts"] = [
        int(c) for c in np.bincount(np.asarray(y_train), minlength=main.K)
    ]

    model = train_forest(
        X_train, y_train, fcfg, n_classes=main.K, n_workers=n_workers
    )
    return model, report


def _concat(a: Dataset, b: Dataset) -> Dataset:
    if len(b) == 0:
        return a
    return Dataset(
        np.vstack([a.X, b.X]),
        np.vstack([a.mask, b.mask]),
        np.concatenate([a.labels, b.labels]),
        list(a.game_ids) + list(b.game_ids),
        list(a.sequence_ids) + list(b.sequence_ids),
        np.concatenate([a.frames, b.frames]),
        a.schema,
    )


def predict_sequence(model: Forest, frames: Dataset) -> SelectionTimeline:
    """Instantaneous per-frame selection over an ordered complete sequence."""
    if not frames.complete_rows().all():
        raise ValueError("sequence frames must be complete; impute first")
    proba = model.predict_proba(frames.X)
    proba = proba.reshape(len(frames), -1)
    cameras = np.argmax(proba, axis=1)
    seq = frames.sequence_ids[0] if len(frames) else ""
    return SelectionTimeline(
        sequence_id=seq,
        frames=frames.frames.copy(),
        cameras=cameras.astype(np.int64),
        probas=proba,
    )


def smooth_labels(labels: np.ndarray, min_duration: int) -> np.ndarray:
    """Greedy minimum-shot-duration pass over a camera stream.

    A switch away from the current camera commits only once the new camera
    has persisted ``min_duration`` consecutive frames; the switch then takes
    effect from the start of that persistent run. If the very first segment
    would end up shorter than ``min_duration`` it is merged into its
    successor, so only the final segment may be short. ``min_duration`` = 1
    is the identity.
    """
    labels = np.asarray(labels)
    n = labels.size
    if min_duration <= 1 or n == 0:
        return labels.copy()
    out = np.empty_like(labels)
    current = labels[0]
    seg_start = 0
    first_segment = True
    cand = None
    cand_start = 0
    cand_len = 0
    for i in range(n):
        if labels[i] == current:
            cand = None
            continue
        if cand is None or labels[i] != cand:
            cand = labels[i]
            cand_start = i
            cand_len = 1
        else:
            cand_len += 1
        if cand_len >= min_duration:
            fill = current
            if first_segment and cand_start - seg_start < min_duration:
                fill = cand  # too short to stand alone: absorb into successor
            out[seg_start:cand_start] = fill
            first_segment = False
            current = cand
            seg_start = cand_start
            cand = None
    out[seg_start:] = current
    return out


def smooth_timeline(t: SelectionTimeline, min_duration: int) -> SelectionTimeline:
    """Apply the minimum-duration pass to a timeline's camera stream.

    Probabilities pass through untouched; only the committed camera ids
    change, and no camera absent from the input stream is ever introduced.
    """
    if min_duration < 1:
        raise ValueError("min_duration must be >= 1 frame")
    return SelectionTimeline(
        sequence_id=t.sequence_id,
        frames=t.frames.copy(),
        cameras=smooth_labels(t.cameras, min_duration),
        probas=t.probas.copy(),
    )

"""Multi-view feature records with missing camera blocks.

A sample holds one feature block per camera; blocks of unrecorded views are
missing as a whole. The on-disk format is JSON lines, one record per line:

    {"game_id": str, "sequence_id": str, "frame": int, "label": int,
     "blocks": [[float x F] or null] x K}

with a sidecar schema file ``{"K": int, "F": int, "camera_names": [str x K]}``.
Records keep their file order. Internally a dataset is array-backed: values
matrix with NaN at unobserved positions plus a boolean observation mask,
flattened camera-major (camera 0 dims first).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "CameraId",
    "DatasetSchema",
    "FeatureBlock",
    "MultiViewSample",
    "Dataset",
    "load_schema",
    "save_schema",
    "load_dataset",
    "save_dataset",
    "split_complete_incomplete",
    "flatten",
]

CameraId = int
"""Camera index in [0, K). Display names live in the schema."""


def default_camera_names(K: int) -> tuple[str, ...]:
    if K == 3:
        return ("left", "middle", "right")
    return tuple(f"camera{i}" for i in range(K))


@dataclass(frozen=True)
class DatasetSchema:
    K: int
    F: int
    camera_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.F < 1:
            raise ValueError(f"F must be >= 1, got {self.F}")
        names = self.camera_names or default_camera_names(self.K)
        if len(names) != self.K:
            raise ValueError(f"expected {self.K} camera names, got {len(names)}")
        if len(set(names)) != self.K:
            raise ValueError("camera names must be unique")
        object.__setattr__(self, "camera_names", tuple(names))

    @property
    def dims(self) -> int:
        return self.K * self.F


@dataclass(frozen=True)
class FeatureBlock:
    """One camera's feature vector; ``present`` is False for missing views."""

    values: np.ndarray | None
    present: bool


@dataclass(frozen=True)
class MultiViewSample:
    game_id: str
    sequence_id: str
    frame_index: int
    blocks: tuple[FeatureBlock, ...]
    label: CameraId

    @property
    def complete(self) -> bool:
        return all(b.present for b in self.blocks)


def flatten(sample: MultiViewSample) -> tuple[np.ndarray, np.ndarray]:
    """Concatenate blocks camera-major into (values, mask).

    Missing positions carry NaN in the values vector and False in the mask.
    """
    K = len(sample.blocks)
    sizes = [b.values.size for b in sample.blocks if b.present]
    if not sizes:
        raise ValueError("sample has no present block")
    F = sizes[0]
    vec = np.full(K * F, np.nan)
    mask = np.zeros(K * F, dtype=bool)
    for k, b in enumerate(sample.blocks):
        if b.present:
            vec[k * F : (k + 1) * F] = b.values
            mask[k * F : (k + 1) * F] = True
    return vec, mask


class Dataset:
    """Ordered collection of multi-view samples, array-backed.

    ``X``: (n, K*F) float64 with NaN at unobserved positions.
    ``mask``: (n, K*F) bool, True where observed.
    ``labels``: (n,) selected camera per sample.
    Immutable after construction; safe for concurrent reads.
    """

    def __init__(
        self,
        X: np.ndarray,
        mask: np.ndarray,
        labels: np.ndarray,
        game_ids: Sequence[str],
        sequence_ids: Sequence[str],
        frames: np.ndarray,
        schema: DatasetSchema,
    ) -> None:
        n = X.shape[0]
        if X.shape != (n, schema.dims) or mask.shape != (n, schema.dims):
            raise ValueError("X/mask shape does not match schema")
        if labels.shape != (n,) or frames.shape != (n,):
            raise ValueError("labels/frames length mismatch")
        if len(game_ids) != n or len(sequence_ids) != n:
            raise ValueError("id column length mismatch")
        self.X = np.ascontiguousarray(X, dtype=np.float64)
        self.mask = np.ascontiguousarray(mask, dtype=bool)
        self.labels = np.ascontiguousarray(labels, dtype=np.int64)
        self.game_ids = tuple(game_ids)
        self.sequence_ids = tuple(sequence_ids)
        self.frames = np.ascontiguousarray(frames, dtype=np.int64)
        self.schema = schema
        self._dim_ranges: np.ndarray | None = None
        self.X.setflags(write=False)
        self.mask.setflags(write=False)
        self.labels.setflags(write=False)
        self.frames.setflags(write=False)

    @property
    def K(self) -> int:
        return self.schema.K

    @property
    def F(self) -> int:
        return self.schema.F

    def __len__(self) -> int:
        return self.X.shape[0]

    def __iter__(self) -> Iterator[MultiViewSample]:
        return (self.sample(i) for i in range(len(self)))

    def sample(self, i: int) -> MultiViewSample:
        F = self.F
        blocks = []
        for k in range(self.K):
            sl = slice(k * F, (k + 1) * F)
            if self.mask[i, sl].all():
                blocks.append(FeatureBlock(self.X[i, sl].copy(), True))
            else:
                blocks.append(FeatureBlock(None, False))
        return MultiViewSample(
            game_id=self.game_ids[i],
            sequence_id=self.sequence_ids[i],
            frame_index=int(self.frames[i]),
            blocks=tuple(blocks),
            label=int(self.labels[i]),
        )

    def block_present(self) -> np.ndarray:
        """(n, K) bool: is camera k's block fully observed in sample i."""
        return self.mask.reshape(len(self), self.K, self.F).all(axis=2)

    def complete_rows(self) -> np.ndarray:
        return self.mask.all(axis=1)

    @property
    def dim_ranges(self) -> np.ndarray:
        """(K*F, 2) per-dimension (min, max) over observed values, cached."""
        if self._dim_ranges is None:
            counts = self.mask.sum(axis=0)
            bare = np.flatnonzero(counts == 0)
            if bare.size:
                raise ValueError(
                    f"dimension {int(bare[0])} has no observed values"
                )
            lo = np.where(self.mask, self.X, np.inf).min(axis=0)
            hi = np.where(self.mask, self.X, -np.inf).max(axis=0)
            rng = np.stack([lo, hi], axis=1)
            rng.setflags(write=False)
            self._dim_ranges = rng
        return self._dim_ranges

    def subset(self, idx: np.ndarray) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.X[idx],
            self.mask[idx],
            self.labels[idx],
            [self.game_ids[i] for i in idx],
            [self.sequence_ids[i] for i in idx],
            self.frames[idx],
            self.schema,
        )

    def replace_values(self, X: np.ndarray, mask: np.ndarray) -> "Dataset":
        """Same records with new values/mask (used by imputers)."""
        return Dataset(
            X, mask, self.labels, self.game_ids, self.sequence_ids,
            self.frames, self.schema,
        )

    @staticmethod
    def from_samples(
        samples: Sequence[MultiViewSample], schema: DatasetSchema
    ) -> "Dataset":
        n = len(samples)
        X = np.full((n, schema.dims), np.nan)
        mask = np.zeros((n, schema.dims), dtype=bool)
        labels = np.empty(n, dtype=np.int64)
        frames = np.empty(n, dtype=np.int64)
        game_ids, sequence_ids = [], []
        for i, s in enumerate(samples):
            vec, m = flatten(s)
            X[i], mask[i] = vec, m
            labels[i] = s.label
            frames[i] = s.frame_index
            game_ids.append(s.game_id)
            sequence_ids.append(s.sequence_id)
        return Dataset(X, mask, labels, game_ids, sequence_ids, frames, schema)

    def validate_dim_coverage(self) -> None:
        self.dim_ranges  # noqa: B018  (raises on an all-missing dimension)


def load_schema(path: str | Path) -> DatasetSchema:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        return DatasetSchema(
            K=int(raw["K"]),
            F=int(raw["F"]),
            camera_names=tuple(raw.get("camera_names") or ()),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed schema: {exc}") from exc


def save_schema(schema: DatasetSchema, path: str | Path) -> None:
    doc = {"K": schema.K, "F": schema.F, "camera_names": list(schema.camera_names)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def _parse_record(raw: dict, schema: DatasetSchema, lineno: int) -> MultiViewSample:
    def fail(msg: str) -> ValueError:
        return ValueError(f"line {lineno}: {msg}")

    try:
        game_id = str(raw["game_id"])
        sequence_id = str(raw["sequence_id"])
        frame = int(raw["frame"])
        label = int(raw["label"])
        blocks_raw = raw["blocks"]
    except (KeyError, TypeError, ValueError) as exc:
        raise fail(f"missing or malformed field ({exc})") from exc
    if not 0 <= label < schema.K:
        raise fail(f"label {label} outside [0, {schema.K})")
    if not isinstance(blocks_raw, list) or len(blocks_raw) != schema.K:
        got = len(blocks_raw) if isinstance(blocks_raw, list) else type(blocks_raw).__name__
        raise fail(f"expected {schema.K} blocks, got {got}")
    blocks = []
    for k, b in enumerate(blocks_raw):
        if b is None:
            blocks.append(FeatureBlock(None, False))
            continue
        if not isinstance(b, list) or len(b) != schema.F:
            raise fail(f"block {k}: expected {schema.F} values")
        vals = np.asarray(b, dtype=np.float64)
        if not np.isfinite(vals).all():
            raise fail(f"block {k}: non-finite value")
        blocks.append(FeatureBlock(vals, True))
    if not blocks[label].present:
        raise fail(f"labeled camera {label} has no block (selected view must be observed)")
    return MultiViewSample(game_id, sequence_id, frame, tuple(blocks), label)


def load_dataset(path: str | Path, schema: DatasetSchema | str | Path) -> Dataset:
    """Parse a JSON-lines dataset; reject the whole file on any bad record."""
    if not isinstance(schema, DatasetSchema):
        schema = load_schema(schema)
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            try:
                samples.append(_parse_record(raw, schema, lineno))
            except ValueError as exc:
                raise ValueError(f"{path}: {exc}") from exc
    if not samples:
        raise ValueError(f"{path}: no records")
    d = Dataset.from_samples(samples, schema)
    d.validate_dim_coverage()
    return d


def save_dataset(d: Dataset, path: str | Path) -> None:
    F = d.F
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(len(d)):
            blocks = []
            for k in range(d.K):
                sl = slice(k * F, (k + 1) * F)
                if d.mask[i, sl].all():
                    blocks.append([float(v) for v in d.X[i, sl]])
                else:
                    blocks.append(None)
            rec = {
                "game_id": d.game_ids[i],
                "sequence_id": d.sequence_ids[i],
                "frame": int(d.frames[i]),
                "label": int(d.labels[i]),
                "blocks": blocks,
            }
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")


def split_complete_incomplete(d: Dataset) -> tuple[Dataset, Dataset]:
    """Partition into (all blocks present, at least one missing)."""
    comp = d.complete_rows()
    return d.subset(np.flatnonzero(comp)), d.subset(np.flatnonzero(~comp))

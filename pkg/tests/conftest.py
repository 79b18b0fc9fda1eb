"""Shared helpers for building small in-memory datasets."""

import numpy as np
import pytest

from camsel import Dataset, DatasetSchema


def make_dataset(
    X: np.ndarray,
    mask: np.ndarray | None = None,
    labels: np.ndarray | None = None,
    K: int = 3,
    sequence_ids: list[str] | None = None,
    frames: np.ndarray | None = None,
) -> Dataset:
    """Wrap raw arrays in a Dataset, defaulting the bookkeeping columns."""
    X = np.asarray(X, dtype=np.float64)
    n, dims = X.shape
    if dims % K != 0:
        raise ValueError("dims must divide evenly into K blocks")
    schema = DatasetSchema(K=K, F=dims // K)
    if mask is None:
        mask = ~np.isnan(X)
    if labels is None:
        labels = np.zeros(n, dtype=np.int64)
    if sequence_ids is None:
        sequence_ids = ["seq000"] * n
    if frames is None:
        frames = np.arange(n, dtype=np.int64)
    return Dataset(
        X=X,
        mask=np.asarray(mask, dtype=bool),
        labels=np.asarray(labels, dtype=np.int64),
        game_ids=["g0"] * n,
        sequence_ids=sequence_ids,
        frames=frames,
        schema=schema,
    )


@pytest.fixture
def announce(capsys):
    """Print a line that survives pytest's output capture."""

    def _announce(line: str) -> None:
        with capsys.disabled():
            print(line, flush=True)

    return _announce

"""Synthetic multi-view datasets with controllable cross-view correlation.

Every frame draws a shared latent state; each camera sees a mix of that
shared state and its own private latent component, rendered through a
per-camera linear map plus Gaussian noise. The mixing weight ``rho`` is the
correlation between corresponding latent coordinates of two cameras: 1
makes all views redundant, 0 makes them independent. The selected camera is
the one whose latent scores highest along its salience direction; salience
directions are orthonormal (when latent_dim >= K), which makes the label
distribution exactly uniform.

Masking is missing-not-at-random the way broadcast archives are: the
selected camera's block is always observed, and each other block is hidden
independently with probability ``p_miss``. The generator returns both the
masked view and the full ground truth, so imputation error is measurable
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, DatasetSchema
from .rng import substream

__all__ = ["SynthConfig", "generate"]


@dataclass(frozen=True)
class SynthConfig:
    K: int = 3
    F: int = 8
    n_samples: int = 2000
    n_sequences: int = 4
    latent_dim: int = 4
    sigma: float = 0.05
    rho: float = 0.74
    p_miss: float = 0.5
    seed: int = 0
    game_id: str = "synth"

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.F < 1:
            raise ValueError("F must be >= 1")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0.0 <= self.p_miss <= 1.0:
            raise ValueError("p_miss must be in [0, 1]")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must be in [0, 1]")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not 1 <= self.n_sequences <= self.n_samples:
            raise ValueError("n_sequences must be in [1, n_samples]")


def _world(cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-camera view maps and salience directions, drawn once per seed."""
    rng = substream(cfg.seed, "world")
    A = rng.normal(size=(cfg.K, cfg.F, cfg.latent_dim))
    raw = rng.normal(size=(cfg.latent_dim, cfg.K))
    if cfg.latent_dim >= cfg.K:
        W, _ = np.linalg.qr(raw)
    else:
        W = raw / np.linalg.norm(raw, axis=0, keepdims=True)
    return A, W


def _sequence_lengths(cfg: SynthConfig) -> list[int]:
    base, extra = divmod(cfg.n_samples, cfg.n_sequences)
    return [base + (1 if s < extra else 0) for s in range(cfg.n_sequences)]


def generate(cfg: SynthConfig) -> tuple[Dataset, Dataset]:
    """Draw a dataset; returns (visible, truth).

    Truth carries every block; visible hides non-selected blocks per the
    MNAR rule. Identical seeds give bit-identical datasets; sequences are
    generated from per-sequence derived streams.
    """
    A, W = _world(cfg)
    K, F, L = cfg.K, cfg.F, cfg.latent_dim
    schema = DatasetSchema(K=K, F=F)
    sq = np.sqrt(cfg.rho)
    sp = np.sqrt(1.0 - cfg.rho)

    X_parts, y_parts, hide_parts = [], [], []
    seq_ids: list[str] = []
    frames: list[int] = []
    for s, length in enumerate(_sequence_lengths(cfg)):
        rng = substream(cfg.seed, "sequence", s)
        z_shared = rng.normal(size=(length, L))
        z_private = rng.normal(size=(length, K, L))
        z = sq * z_shared[:, None, :] + sp * z_private
        noise = rng.normal(size=(length, K, F))
        blocks = np.einsum("kfl,nkl->nkf", A, z) + cfg.sigma * noise
        salience = np.einsum("lk,nkl->nk", W, z)
        y = salience.argmax(axis=1)
        hide = rng.random(size=(length, K)) < cfg.p_miss
        hide[np.arange(length), y] = False
        X_parts.append(blocks.reshape(length, K * F))
        y_parts.append(y)
        hide_parts.append(hide)
        seq_ids.extend([f"seq{s:03d}"] * length)
        frames.extend(range(length))

    X = np.vstack(X_parts)
    y = np.concatenate(y_parts)
    hide = np.vstack(hide_parts)
    n = X.shape[0]
    game_ids = [cfg.game_id] * n
    frames_arr = np.asarray(frames, dtype=np.int64)

    full_mask = np.ones((n, K * F), dtype=bool)
    truth = Dataset(X, full_mask, y, game_ids, seq_ids, frames_arr, schema)

    vis_mask = ~np.repeat(hide, F, axis=1).reshape(n, K * F)
    X_vis = np.where(vis_mask, X, np.nan)
    visible = Dataset(X_vis, vis_mask, y, game_ids, seq_ids, frames_arr, schema)
    return visible, truth

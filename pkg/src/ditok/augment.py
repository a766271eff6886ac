"""Training-time augmentations on the embedded 80-dim sequence.

All four ops preserve shape, are deterministic per seed, and are built from
differentiable numerics primitives so gradients keep flowing into the token
embedding tables. Per-utterance seeds derive from a stable hash of the
global seed and the utterance id.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import numerics as nm


@dataclass
class AugmentConfig:
    enabled: bool = True
    warp_window: int = 40
    time_masks_range: tuple[int, int] = (1, 3)
    time_mask_max: int = 40
    emb_mask_max: int = 20  # applied twice, independently
    noise_prob: float = 0.5
    noise_std: float = 1.0
    rng_seed: int = 0

    def validate(self) -> None:
        from .errors import ConfigurationError

        if self.warp_window < 0 or self.time_mask_max < 0 or self.emb_mask_max < 0:
            raise ConfigurationError("augment widths must be >= 0")
        if not 0.0 <= self.noise_prob <= 1.0:
            raise ConfigurationError(f"noise_prob must be in [0, 1], got {self.noise_prob}")


def derive_seed(global_seed: int, utt_id: str) -> int:
    digest = hashlib.sha256(f"{global_seed}:{utt_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def time_warp(x: nm.Tensor, W: int, seed: int) -> nm.Tensor:
    """Resample [0, c] to length c+d and [c, T) to T-c-d for a random center
    c in [W, T-W) and displacement d in [-W, W]; endpoints stay anchored."""
    T = x.shape[0]
    if W <= 0 or T <= 2 * W:
        return x
    rng = np.random.default_rng(seed)
    c = int(rng.integers(W, T - W))
    d = int(rng.integers(-W, W + 1))
    # keep both segments non-degenerate so frame 0 and T-1 stay anchored
    d = max(1 - c, min(d, T - 2 - c))
    if d == 0:
        return x
    anchor = c + d
    pos = np.empty(T, dtype=np.float64)
    pos[: anchor + 1] = np.arange(anchor + 1) * (c / anchor)
    pos[anchor:] = c + np.arange(T - anchor) * ((T - 1 - c) / (T - 1 - anchor))
    return nm.linear_resample(x, pos)


def time_mask(x: nm.Tensor, n_masks: int, max_width: int, seed: int) -> nm.Tensor:
    """Replace random contiguous frame spans with the utterance mean vector."""
    T, D = x.shape
    rng = np.random.default_rng(seed)
    keep = np.ones(T, dtype=bool)
    for _ in range(n_masks):
        width = int(rng.integers(0, min(max_width, T) + 1))
        start = int(rng.integers(0, T - width + 1))
        keep[start : start + width] = False
    if keep.all():
        return x
    keep_col = keep[:, None].astype(np.float64)
    mean_vec = nm.mean_rows(x)
    filled = nm.mul_const(nm.tile_rows(mean_vec, T), 1.0 - keep_col)
    return nm.add(nm.mul_const(x, keep_col), filled)


def embedding_mask(x: nm.Tensor, max_width: int, seed: int) -> nm.Tensor:
    """Zero two independent channel bands across all frames."""
    T, D = x.shape
    rng = np.random.default_rng(seed)
    keep = np.ones(D, dtype=bool)
    for _ in range(2):
        width = int(rng.integers(0, min(max_width, D) + 1))
        start = int(rng.integers(0, D - width + 1))
        keep[start : start + width] = False
    if keep.all():
        return x
    return nm.mul_const(x, keep[None, :].astype(np.float64))


def add_gaussian_noise(x: nm.Tensor, prob: float, std: float, seed: int) -> nm.Tensor:
    """With one per-utterance draw, add i.i.d. N(0, std^2) to every element."""
    if prob <= 0.0 or std == 0.0:
        return x
    rng = np.random.default_rng(seed)
    if rng.uniform() >= prob:
        return x
    return nm.add_const(x, rng.normal(0.0, std, size=x.shape))


def apply_pipeline(x: nm.Tensor, cfg: AugmentConfig, utt_id: str) -> nm.Tensor:
    """warp -> time mask -> embedding mask -> noise; identity when disabled."""
    if not cfg.enabled:
        return x
    cfg.validate()
    base = derive_seed(cfg.rng_seed, utt_id)
    x = time_warp(x, cfg.warp_window, base)
    n_rng = np.random.default_rng(base + 1)
    n_masks = int(n_rng.integers(cfg.time_masks_range[0], cfg.time_masks_range[1] + 1))
    x = time_mask(x, n_masks, cfg.time_mask_max, base + 2)
    x = embedding_mask(x, cfg.emb_mask_max, base + 3)
    x = add_gaussian_noise(x, cfg.noise_prob, cfg.noise_std, base + 4)
    return x

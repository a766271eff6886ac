"""Writers for the workbench's DSEM / DSTK containers.

Layouts match the workbench's documented containers: little-endian, 4-byte magic,
u16 version = 1. Kept self-contained so this adapter stays a pure producer;
the consumer side lives in the workbench's corpus_io.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np


def write_dsem(frames: np.ndarray, frame_rate_hz: float, source_tag: str, path) -> None:
    """magic 'DSEM', version, T u32, D u32, rate f32, tagged, then T*D f32."""
    frames = np.ascontiguousarray(frames, dtype="<f4")
    if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
        raise ValueError(f"frames must be T x D with T,D >= 1, got {frames.shape}")
    if not np.all(np.isfinite(frames)):
        raise ValueError("frames contain non-finite values")
    T, D = frames.shape
    tag = source_tag.encode("utf-8")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(b"DSEM")
        fh.write(struct.pack("<HIIf", 1, T, D, frame_rate_hz))
        fh.write(struct.pack("<H", len(tag)))
        fh.write(tag)
        fh.write(frames.tobytes())


def write_dstk(groups: np.ndarray, codebook_sizes: list[int], frame_rate_hz: float,
               path) -> None:
    """magic 'DSTK', version, G u16, T u32, rate f32, G sizes u32, tokens u32."""
    groups = np.asarray(groups)
    if groups.ndim != 2:
        raise ValueError(f"token groups must be (G, T), got shape {groups.shape}")
    G, T = groups.shape
    if len(codebook_sizes) != G:
        raise ValueError(f"{len(codebook_sizes)} codebook sizes for {G} groups")
    for g in range(G):
        if groups[g].min() < 0 or groups[g].max() >= codebook_sizes[g]:
            raise ValueError(f"token out of range [0, {codebook_sizes[g]}) in group {g}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(b"DSTK")
        fh.write(struct.pack("<HHIf", 1, G, T, frame_rate_hz))
        fh.write(np.asarray(codebook_sizes, dtype="<u4").tobytes())
        fh.write(np.ascontiguousarray(groups, dtype="<u4").tobytes())

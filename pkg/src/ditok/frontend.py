"""Turns token streams into model-ready 80-dim continuous sequences.

One embedding table per token group; multi-group streams are embedded,
concatenated and projected back to 80 dims, then the sequence is linearly
interpolated to the target frame rate (100 Hz unless configured otherwise).
"""

from __future__ import annotations

import numpy as np

from . import numerics as nm
from .corpus_io import TokenSequence
from .errors import LengthError, ValidationError

EMBED_DIM = 80


class FrontendParams:
    """Per-group embedding tables plus the fusion projection for G > 1."""

    def __init__(self, codebook_sizes: list[int], seed: int = 0, name: str = "frontend"):
        rng = np.random.default_rng(seed)
        self.codebook_sizes = list(codebook_sizes)
        self.tables = [
            nm.Parameter(rng.uniform(-0.1, 0.1, size=(K, EMBED_DIM)), f"{name}.table{g}")
            for g, K in enumerate(self.codebook_sizes)
        ]
        self.w_fuse = None
        if len(self.codebook_sizes) > 1:
            G = len(self.codebook_sizes)
            self.w_fuse = nm.Parameter(
                rng.uniform(-0.1, 0.1, size=(EMBED_DIM * G, EMBED_DIM)), f"{name}.w_fuse"
            )

    def parameters(self) -> list[nm.Parameter]:
        ps = list(self.tables)
        if self.w_fuse is not None:
            ps.append(self.w_fuse)
        return ps


def embed_tokens(tokens: TokenSequence, params: FrontendParams) -> nm.Tensor:
    """Lookup (and for G > 1 concatenate + project) to a T x 80 tensor."""
    G = tokens.groups.shape[0]
    if G != len(params.tables):
        raise ValidationError(f"{G} token groups but {len(params.tables)} embedding tables")
    for g in range(G):
        if tokens.codebook_sizes[g] != params.tables[g].shape[0]:
            raise ValidationError(
                f"group {g}: codebook size {tokens.codebook_sizes[g]} != "
                f"table rows {params.tables[g].shape[0]}"
            )
    if G == 1:
        return nm.embedding(params.tables[0], tokens.groups[0])
    parts = [nm.embedding(params.tables[g], tokens.groups[g]) for g in range(G)]
    return nm.matmul(nm.concat_cols(parts), params.w_fuse)


def interpolate_rate(x: nm.Tensor, rate_in_hz: float, target_hz: float = 100.0) -> nm.Tensor:
    """Linear time interpolation to target_hz with endpoint clamping.

    T' = round(T * target / rate_in); an input already at the target rate
    passes through bit-identically.
    """
    if rate_in_hz <= 0:
        raise ValidationError(f"rate_in_hz must be positive, got {rate_in_hz}")
    T = x.shape[0]
    if T == 0:
        raise LengthError("interpolate_rate: empty input")
    if rate_in_hz == target_hz:
        return x
    T_out = int(round(T * target_hz / rate_in_hz))
    if T_out < 1:
        raise LengthError(f"interpolate_rate: output collapses to {T_out} frames")
    positions = np.arange(T_out) * (rate_in_hz / target_hz)
    return nm.linear_resample(x, positions)

"""Extract hidden states / codec indices from pretrained checkpoints.

SSL encoders (wav2vec2 family: XLSR-53, WavLM) dump one Transformer layer's
hidden states to DSEM; neural codecs (EnCodec) dump quantizer indices to
DSTK. Layer indexing is 1-based: layer 1 is the first Transformer block's
output, matching the convention "the 21st encoder layer" for a 24-layer
model (index 0 would be the pre-Transformer feature projection).
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .formats import write_dsem, write_dstk


class FetchError(RuntimeError):
    """Checkpoint could not be loaded."""


class ConfigurationError(ValueError):
    pass


@dataclass
class ExportSpec:
    model_id: str
    layer_index: int = 21
    output: str = "dsem"  # "dsem" for SSL encoders, "dstk" for codecs
    sample_rate: int = 16000
    bandwidth_kbps: float = 6.0  # codec path; 6 kbps selects 8 codebooks

    def __post_init__(self):
        if self.layer_index < 1:
            raise ConfigurationError(f"layer_index must be >= 1, got {self.layer_index}")
        if self.output not in ("dsem", "dstk"):
            raise ConfigurationError(f"output must be dsem|dstk, got {self.output}")


def read_audio(path, target_rate: int) -> np.ndarray:
    """Mono 16-bit PCM WAV as float32 in [-1, 1], linearly resampled."""
    with wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1:
            raise ConfigurationError(f"{path}: expected mono audio")
        if fh.getsampwidth() != 2:
            raise ConfigurationError(f"{path}: expected 16-bit samples")
        rate = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    x = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    if rate == target_rate:
        return x
    n_out = int(round(x.size * target_rate / rate))
    positions = np.arange(n_out) * (rate / target_rate)
    lo = np.minimum(positions.astype(np.int64), x.size - 1)
    hi = np.minimum(lo + 1, x.size - 1)
    frac = (positions - lo).astype(np.float32)
    return x[lo] * (1.0 - frac) + x[hi] * frac


def _tag_for(model_id: str, layer: int) -> str:
    name = Path(str(model_id)).name or str(model_id)
    return f"{name}-L{layer}"


def export_embeddings(audio_path, spec: ExportSpec, out_path) -> dict:
    """One Transformer layer's hidden states -> DSEM at the model's frame rate."""
    import torch
    from transformers import AutoModel

    try:
        model = AutoModel.from_pretrained(spec.model_id)
    except (OSError, EnvironmentError) as e:
        raise FetchError(f"cannot load checkpoint {spec.model_id!r}: {e}") from e
    n_layers = model.config.num_hidden_layers
    if spec.layer_index > n_layers:
        raise ConfigurationError(
            f"layer {spec.layer_index} out of range for a {n_layers}-layer model"
        )
    model.eval()
    samples = read_audio(audio_path, spec.sample_rate)
    with torch.no_grad():
        out = model(torch.from_numpy(samples)[None, :], output_hidden_states=True)
    frames = out.hidden_states[spec.layer_index][0].numpy()
    frame_rate = frames.shape[0] * spec.sample_rate / samples.size
    tag = _tag_for(spec.model_id, spec.layer_index)
    write_dsem(frames, frame_rate, tag, out_path)
    return {"frames": frames.shape[0], "dim": frames.shape[1],
            "frame_rate_hz": frame_rate, "source_tag": tag}


def export_codec_tokens(audio_path, spec: ExportSpec, out_path) -> dict:
    """Codec quantizer indices -> DSTK (one group per codebook)."""
    import torch
    from transformers import EncodecModel

    try:
        model = EncodecModel.from_pretrained(spec.model_id)
    except (OSError, EnvironmentError) as e:
        raise FetchError(f"cannot load checkpoint {spec.model_id!r}: {e}") from e
    model.eval()
    rate = model.config.sampling_rate
    samples = read_audio(audio_path, rate)
    with torch.no_grad():
        enc = model.encode(torch.from_numpy(samples)[None, None, :],
                           bandwidth=spec.bandwidth_kbps)
    # audio_codes: (n_chunks, batch, G, T'); chunks concatenate along time
    codes = enc.audio_codes[:, 0].numpy()
    groups = np.concatenate(list(codes), axis=-1)
    K = model.config.codebook_size
    write_dstk(groups, [K] * groups.shape[0], float(model.config.frame_rate), out_path)
    return {"groups": groups.shape[0], "frames": groups.shape[1], "codebook_size": K,
            "frame_rate_hz": float(model.config.frame_rate)}

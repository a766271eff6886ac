import wave

import numpy as np
import pytest


@pytest.fixture(scope="session")
def ssl_checkpoint(tmp_path_factory):
    """Tiny random wav2vec2-style model saved as a local checkpoint."""
    from transformers import Wav2Vec2Config, Wav2Vec2Model
    import torch

    torch.manual_seed(0)
    cfg = Wav2Vec2Config(
        hidden_size=32, num_hidden_layers=3, num_attention_heads=2,
        intermediate_size=64, conv_dim=(16, 16, 16), conv_stride=(5, 4, 2),
        conv_kernel=(10, 3, 3), num_conv_pos_embeddings=16,
        num_conv_pos_embedding_groups=2, vocab_size=32,
    )
    model = Wav2Vec2Model(cfg)
    path = tmp_path_factory.mktemp("ckpt") / "tiny-ssl"
    model.save_pretrained(path)
    return path


@pytest.fixture(scope="session")
def codec_checkpoint(tmp_path_factory):
    """Tiny random EnCodec saved locally; 8 codebooks of 1024 at 6 kbps."""
    from transformers import EncodecConfig, EncodecModel
    import torch

    torch.manual_seed(0)
    cfg = EncodecConfig(
        target_bandwidths=[6.0], sampling_rate=24000, audio_channels=1,
        num_filters=4, num_residual_layers=1, upsampling_ratios=[8, 5, 4, 2],
        codebook_size=1024, hidden_size=16, num_lstm_layers=1, codebook_dim=16,
    )
    model = EncodecModel(cfg)
    path = tmp_path_factory.mktemp("ckpt") / "tiny-codec"
    model.save_pretrained(path)
    return path


def write_wav(path, samples: np.ndarray, rate: int = 16000):
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes((np.clip(samples, -1, 1) * 32767).astype("<i2").tobytes())


@pytest.fixture(scope="session")
def silence_wav(tmp_path_factory):
    path = tmp_path_factory.mktemp("audio") / "silence.wav"
    write_wav(path, np.zeros(16000))
    return path


@pytest.fixture(scope="session")
def tone_wav(tmp_path_factory):
    path = tmp_path_factory.mktemp("audio") / "tone.wav"
    t = np.arange(16000) / 16000.0
    write_wav(path, 0.3 * np.sin(2 * np.pi * 440 * t))
    return path

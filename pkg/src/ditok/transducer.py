"""Neural transducer: downsampling encoder, stateless predictor, joint net.

The encoder mirrors the U-Net rate schedule: each stack mean-pools the
running sequence by its factor, applies pre-norm attention/conv/FFN blocks
at the low rate, upsamples back and adds residually; a final mean-pool by 2
is the encoder's output subsampling, so T_out = ceil(T / 2).

The predictor is stateless: position u depends only on the last
`context_size` labels, via embedding lookup + a width-`context_size`
convolution (realized as an affine over the concatenated context
embeddings) + ReLU + projection.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nm
from .errors import DimensionError, FormatError, LengthError, ValidationError

INPUT_DIM = 80


@dataclass
class EncoderConfig:
    downsample_factors: tuple[int, ...] = (1, 2, 4, 8, 4, 2)
    blocks_per_stack: int = 1
    d_model: int = 96
    n_heads: int = 4
    conv_kernel: int = 15
    ffn_multiplier: int = 4
    max_frames: int = 2048
    output_subsampling: int = 2

    def __post_init__(self):
        if any(f < 1 for f in self.downsample_factors):
            raise ValidationError("downsample factors must be positive")
        if self.d_model % self.n_heads != 0:
            raise ValidationError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )


@dataclass
class PredictorConfig:
    context_size: int = 2
    embed_dim: int = 512

    def __post_init__(self):
        if self.context_size < 1:
            raise ValidationError("context_size must be >= 1")


@dataclass
class JointConfig:
    joint_dim: int = 256
    vocab_size: int = 0  # set from the BPE model; includes blank

    def __post_init__(self):
        if self.vocab_size and self.vocab_size < 2:
            raise ValidationError("vocab_size must be >= 2")


@dataclass
class TransducerConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    joint: JointConfig = field(default_factory=JointConfig)
    blank_id: int = 0


def _glorot(rng, shape):
    fan_in = shape[0] if len(shape) > 1 else shape[0]
    return rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape)


class _Block:
    """Pre-norm self-attention + depthwise conv + FFN, all residual."""

    def __init__(self, cfg: EncoderConfig, rng, name: str):
        d, mult = cfg.d_model, cfg.ffn_multiplier
        self.n_heads = cfg.n_heads
        p = nm.Parameter
        self.ln_att_g = p(np.ones(d), f"{name}.ln_att.gamma")
        self.ln_att_b = p(np.zeros(d), f"{name}.ln_att.beta")
        self.wq = p(_glorot(rng, (d, d)), f"{name}.att.wq")
        self.wk = p(_glorot(rng, (d, d)), f"{name}.att.wk")
        self.wv = p(_glorot(rng, (d, d)), f"{name}.att.wv")
        self.wo = p(_glorot(rng, (d, d)), f"{name}.att.wo")
        self.ln_conv_g = p(np.ones(d), f"{name}.ln_conv.gamma")
        self.ln_conv_b = p(np.zeros(d), f"{name}.ln_conv.beta")
        self.conv_k = p(_glorot(rng, (cfg.conv_kernel, d)) / cfg.conv_kernel,
                        f"{name}.conv.kernel")
        self.ln_ffn_g = p(np.ones(d), f"{name}.ln_ffn.gamma")
        self.ln_ffn_b = p(np.zeros(d), f"{name}.ln_ffn.beta")
        self.ffn_w1 = p(_glorot(rng, (d, d * mult)), f"{name}.ffn.w1")
        self.ffn_b1 = p(np.zeros(d * mult), f"{name}.ffn.b1")
        self.ffn_w2 = p(_glorot(rng, (d * mult, d)), f"{name}.ffn.w2")
        self.ffn_b2 = p(np.zeros(d), f"{name}.ffn.b2")

    def forward(self, x: nm.Tensor) -> nm.Tensor:
        att_in = nm.layer_norm(x, self.ln_att_g, self.ln_att_b)
        x = nm.add(x, nm.self_attention(att_in, self.wq, self.wk, self.wv, self.wo,
                                        self.n_heads))
        conv_in = nm.layer_norm(x, self.ln_conv_g, self.ln_conv_b)
        x = nm.add(x, nm.depthwise_conv1d(conv_in, self.conv_k))
        ffn_in = nm.layer_norm(x, self.ln_ffn_g, self.ln_ffn_b)
        h = nm.relu(nm.affine(ffn_in, self.ffn_w1, self.ffn_b1))
        return nm.add(x, nm.affine(h, self.ffn_w2, self.ffn_b2))

    def parameters(self):
        return [self.ln_att_g, self.ln_att_b, self.wq, self.wk, self.wv, self.wo,
                self.ln_conv_g, self.ln_conv_b, self.conv_k,
                self.ln_ffn_g, self.ln_ffn_b,
                self.ffn_w1, self.ffn_b1, self.ffn_w2, self.ffn_b2]


class TransducerModel:
    def __init__(self, cfg: TransducerConfig, seed: int = 0):
        if cfg.joint.vocab_size < 2:
            raise ValidationError("joint.vocab_size must be set (BPE size + blank)")
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        enc = cfg.encoder
        d = enc.d_model
        p = nm.Parameter
        self.in_w = p(_glorot(rng, (INPUT_DIM, d)), "enc.in.w")
        self.in_b = p(np.zeros(d), "enc.in.b")
        self.stacks = []
        for i, factor in enumerate(enc.downsample_factors):
            pos_len = -(-enc.max_frames // factor)
            stack = {
                "factor": factor,
                "pos": p(rng.uniform(-0.02, 0.02, size=(pos_len, d)), f"enc.stack{i}.pos"),
                "blocks": [_Block(enc, rng, f"enc.stack{i}.block{j}")
                           for j in range(enc.blocks_per_stack)],
            }
            self.stacks.append(stack)
        self.ln_out_g = p(np.ones(d), "enc.ln_out.gamma")
        self.ln_out_b = p(np.zeros(d), "enc.ln_out.beta")

        pred = cfg.predictor
        V = cfg.joint.vocab_size
        self.pred_embed = p(rng.uniform(-0.1, 0.1, size=(V, pred.embed_dim)), "pred.embed")
        self.pred_conv_w = p(_glorot(rng, (pred.context_size * pred.embed_dim, pred.embed_dim)),
                             "pred.conv.w")
        self.pred_conv_b = p(np.zeros(pred.embed_dim), "pred.conv.b")
        self.pred_out_w = p(_glorot(rng, (pred.embed_dim, d)), "pred.out.w")
        self.pred_out_b = p(np.zeros(d), "pred.out.b")

        J = cfg.joint.joint_dim
        self.joint_h_w = p(_glorot(rng, (d, J)), "joint.h.w")
        self.joint_h_b = p(np.zeros(J), "joint.h.b")
        self.joint_f_w = p(_glorot(rng, (d, J)), "joint.f.w")
        self.joint_f_b = p(np.zeros(J), "joint.f.b")
        self.out_w = p(_glorot(rng, (J, V)), "joint.out.w")
        self.out_b = p(np.zeros(V), "joint.out.b")

    # -- encoder ----------------------------------------------------------

    def min_input_frames(self) -> int:
        return max(self.cfg.encoder.downsample_factors)

    def output_frames(self, T: int) -> int:
        return -(-T // self.cfg.encoder.output_subsampling)

    def encoder_forward(self, x: nm.Tensor) -> nm.Tensor:
        T = x.shape[0]
        if x.shape[1] != INPUT_DIM:
            raise DimensionError(f"encoder expects T x {INPUT_DIM}, got {x.shape}")
        if T < self.min_input_frames():
            raise LengthError(
                f"input of {T} frames below minimum {self.min_input_frames()}"
            )
        if T > self.cfg.encoder.max_frames:
            raise LengthError(
                f"input of {T} frames above configured max {self.cfg.encoder.max_frames}"
            )
        h = nm.affine(x, self.in_w, self.in_b)
        for stack in self.stacks:
            factor = stack["factor"]
            down = nm.mean_pool(h, factor)
            down = nm.add_positional(down, stack["pos"])
            for block in stack["blocks"]:
                down = block.forward(down)
            up = nm.repeat_upsample(down, factor, T) if factor > 1 else down
            h = nm.add(h, up)
        h = nm.layer_norm(h, self.ln_out_g, self.ln_out_b)
        return nm.mean_pool(h, self.cfg.encoder.output_subsampling)

    # -- predictor ----------------------------------------------------------

    def _contexts(self, labels) -> np.ndarray:
        """(U+1, context_size) label windows, blank-padded at the start."""
        c = self.cfg.predictor.context_size
        blank = self.cfg.blank_id
        labels = np.asarray(labels, dtype=np.int64)
        if labels.size and np.any(labels == blank):
            raise ValidationError("blank in predictor history")
        padded = np.concatenate([np.full(c, blank, dtype=np.int64), labels])
        return np.stack([padded[u : u + c] for u in range(labels.size + 1)])

    def predictor_forward(self, labels) -> nm.Tensor:
        """(U+1) x d_model text representations, position u seeing y[<u]."""
        contexts = self._contexts(labels)
        emb = nm.embedding(self.pred_embed, contexts)  # (U+1, c, E)
        U1 = contexts.shape[0]
        flat = nm.reshape(emb, (U1, -1))
        h = nm.relu(nm.affine(flat, self.pred_conv_w, self.pred_conv_b))
        return nm.affine(h, self.pred_out_w, self.pred_out_b)

    # -- joint --------------------------------------------------------------

    def joint_forward(self, h: nm.Tensor, f: nm.Tensor) -> nm.Tensor:
        """Log-probs (T', U+1, V): log_softmax(W_o . relu(proj(h) + proj(f)))."""
        if h.shape[1] != f.shape[1]:
            raise DimensionError(f"joint: encoder dim {h.shape} != predictor dim {f.shape}")
        ph = nm.affine(h, self.joint_h_w, self.joint_h_b)
        pf = nm.affine(f, self.joint_f_w, self.joint_f_b)
        g = nm.relu(nm.joint_broadcast_add(ph, pf))
        T, U1, J = g.shape
        logits = nm.affine(nm.reshape(g, (T * U1, J)), self.out_w, self.out_b)
        return nm.reshape(nm.log_softmax(logits), (T, U1, -1))

    def forward(self, x: nm.Tensor, labels) -> nm.Tensor:
        return self.joint_forward(self.encoder_forward(x), self.predictor_forward(labels))

    # -- parameters and checkpoints ------------------------------------------

    def parameters(self) -> list[nm.Parameter]:
        ps = [self.in_w, self.in_b]
        for stack in self.stacks:
            ps.append(stack["pos"])
            for block in stack["blocks"]:
                ps.extend(block.parameters())
        ps += [self.ln_out_g, self.ln_out_b,
               self.pred_embed, self.pred_conv_w, self.pred_conv_b,
               self.pred_out_w, self.pred_out_b,
               self.joint_h_w, self.joint_h_b, self.joint_f_w, self.joint_f_b,
               self.out_w, self.out_b]
        return ps

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def save_checkpoint(self, path) -> None:
        save_checkpoint(self.parameters(), path)

    def load_checkpoint(self, path) -> None:
        arrays = load_checkpoint(path)
        params = {p.name: p for p in self.parameters()}
        missing = set(params) - set(arrays)
        extra = set(arrays) - set(params)
        if missing or extra:
            raise ValidationError(
                f"checkpoint/model mismatch: missing {sorted(missing)}, extra {sorted(extra)}"
            )
        for name, arr in arrays.items():
            p = params[name]
            if p.data.shape != arr.shape:
                raise ValidationError(
                    f"checkpoint {name}: shape {arr.shape} != model {p.data.shape}"
                )
            p.data = arr.astype(p.data.dtype)


def save_checkpoint(params: list[nm.Parameter], path) -> None:
    """DSCP: named parameters as (name, shape, f32 data), little-endian."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(b"DSCP")
        fh.write(struct.pack("<HI", 1, len(params)))
        for p in params:
            raw = p.name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<H", p.data.ndim))
            fh.write(np.asarray(p.data.shape, dtype="<u4").tobytes())
            fh.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    def need(fh, n, what):
        buf = fh.read(n)
        if len(buf) != n:
            raise LengthError(f"truncated checkpoint: wanted {n} bytes for {what}")
        return buf

    out: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        if fh.read(4) != b"DSCP":
            raise FormatError("bad checkpoint magic")
        version, count = struct.unpack("<HI", need(fh, 6, "header"))
        if version != 1:
            raise FormatError(f"unsupported checkpoint version {version}")
        for _ in range(count):
            (name_len,) = struct.unpack("<H", need(fh, 2, "name length"))
            name = need(fh, name_len, "name").decode("utf-8")
            (ndim,) = struct.unpack("<H", need(fh, 2, "ndim"))
            shape = tuple(np.frombuffer(need(fh, 4 * ndim, "shape"), dtype="<u4"))
            n = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(need(fh, 4 * n, f"data for {name}"), dtype="<f4")
            out[name] = data.reshape(shape).copy()
        if fh.read(1):
            raise LengthError("trailing bytes after checkpoint payload")
    return out

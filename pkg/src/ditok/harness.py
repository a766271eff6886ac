"""Experiment orchestration: per-language vs mixed training, per-language vs
shared codebooks, discrete vs continuous inputs, schedule rules and timing.

One trainer entry point (`train_model`) serves both input modes; the modes
differ only in the front-end callable that turns an utterance into the
encoder's T x 80 input. Everything is seeded and bit-reproducible in 64-bit
mode.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
import time
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import augment as aug
from . import bpe as bpe_mod
from . import corpus_io as cio
from . import decode_eval as de
from . import fbank as fb
from . import frontend as fe
from . import numerics as nm
from . import rnnt
from . import tokenizer as tok
from .errors import ConfigurationError, DivergenceError, ParseError
from .transducer import (
    EncoderConfig, JointConfig, PredictorConfig, TransducerConfig, TransducerModel,
    load_checkpoint, save_checkpoint,
)

SPLITS = ("train", "dev", "test")
SEED_ENV_VAR = "DITOK_SEED"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class ModelSection:
    d_model: int = 96
    n_heads: int = 4
    blocks_per_stack: int = 1
    conv_kernel: int = 15
    ffn_multiplier: int = 4
    downsample_factors: tuple[int, ...] = (1, 2, 4, 8, 4, 2)
    max_frames: int = 2048
    joint_dim: int = 256
    pred_embed_dim: int = 512
    context_size: int = 2


@dataclass
class FrontendSection:
    target_rate_hz: float = 100.0


@dataclass
class TrainSection:
    batch_size: int = 4
    batch_reduction: str = "mean"  # or "sum"
    clip_norm: float = 5.0
    dtype: str = "float64"  # or "float32"
    kmeans_hours: float = 0.1
    kmeans_n_init: int = 10
    divergence_window: int = 200
    divergence_factor: float = 10.0
    decode_beam: int = 0  # 0 = greedy


@dataclass
class ExperimentConfig:
    languages: tuple[str, ...] = ("syn",)
    input_mode: str = "discrete"  # or "fbank"
    mix_data: bool = False
    shared_kmeans: bool = False
    units: int = 32
    bpe_size: int | str = "auto"
    epochs: int | str = "auto"
    lr: float | str = "auto"
    seed: int = 0
    workdir: str = "work"
    model: ModelSection = field(default_factory=ModelSection)
    augment: aug.AugmentConfig = field(default_factory=aug.AugmentConfig)
    frontend: FrontendSection = field(default_factory=FrontendSection)
    train: TrainSection = field(default_factory=TrainSection)

    def __post_init__(self):
        if self.input_mode not in ("discrete", "fbank"):
            raise ConfigurationError(f"input_mode must be discrete|fbank, got {self.input_mode}")
        bad = [l for l in self.languages if l not in cio.ALLOWED_LANGS]
        if bad:
            raise ConfigurationError(f"unknown languages {bad}")
        if self.train.batch_reduction not in ("mean", "sum"):
            raise ConfigurationError("batch_reduction must be mean|sum")


def config_hash(cfg: ExperimentConfig) -> str:
    """Stable hash over semantic fields (paths excluded)."""
    d = asdict(cfg)
    d.pop("workdir")
    blob = json.dumps(d, sort_keys=True, default=list)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


_SECTION_TYPES = {
    "model": ModelSection,
    "frontend": FrontendSection,
    "train": TrainSection,
    "augment": aug.AugmentConfig,
}


def _coerce(raw: str, default):
    if isinstance(default, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ParseError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        parts = raw.replace(",", " ").split()
        elem = default[0] if default else 1
        return tuple(type(elem)(p) for p in parts)
    return raw


def load_config(path) -> ExperimentConfig:
    """INI-style sections of scalar keys; DITOK_SEED overrides the seed."""
    parser = configparser.ConfigParser()
    if not Path(path).exists():
        raise ConfigurationError(f"config file not found: {path}")
    parser.read(path)
    cfg = ExperimentConfig()
    if parser.has_section("experiment"):
        for key, raw in parser.items("experiment"):
            if key == "languages":
                cfg = replace(cfg, languages=tuple(raw.replace(",", " ").split()))
            elif key in ("bpe_size", "epochs", "lr"):
                if raw == "auto":
                    cfg = replace(cfg, **{key: "auto"})
                else:
                    cfg = replace(cfg, **{key: float(raw) if key == "lr" else int(raw)})
            elif hasattr(cfg, key) and key not in _SECTION_TYPES:
                cfg = replace(cfg, **{key: _coerce(raw, getattr(cfg, key))})
            else:
                raise ParseError(f"unknown key {key!r} in [experiment]")
    for section, cls in _SECTION_TYPES.items():
        if not parser.has_section(section):
            continue
        sub = getattr(cfg, section)
        for key, raw in parser.items(section):
            if key == "time_masks_range":
                lo, hi = raw.replace(",", " ").split()
                sub = replace(sub, time_masks_range=(int(lo), int(hi)))
            elif hasattr(sub, key):
                sub = replace(sub, **{key: _coerce(raw, getattr(sub, key))})
            else:
                raise ParseError(f"unknown key {key!r} in [{section}]")
        cfg = replace(cfg, **{section: sub})
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        cfg = replace(cfg, seed=int(env_seed))
    return cfg


# ---------------------------------------------------------------------------
# Schedule rules
# ---------------------------------------------------------------------------


def resolve_schedule(total_duration_s: float, epochs="auto", lr="auto") -> tuple[int, float]:
    """Epoch count and learning rate from the corpus duration.

    Corpora of >= 1000 h train for 40 epochs, smaller ones for 150; the
    learning rate is 10000 / duration-in-seconds clamped to [1e-5, 1e-2].
    """
    if total_duration_s <= 0:
        raise ConfigurationError("total duration must be positive")
    if epochs == "auto":
        epochs = 40 if total_duration_s >= 1000 * 3600 else 150
    if lr == "auto":
        lr = min(1e-2, max(1e-5, 10000.0 / total_duration_s))
    return int(epochs), float(lr)


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------


def make_synthetic_corpus(workdir, n_utts: int = 200, K_true: int = 5, D: int = 16,
                          frame_rate: float = 50.0, seed: int = 0, lang: str = "syn",
                          dur_range: tuple[float, float] = (4.0, 6.0),
                          sigma: float = 0.5, run_frames: tuple[int, int] = (15, 26),
                          split_fracs: tuple[float, float, float] = (0.8, 0.1, 0.1)) -> dict:
    """Markov-chain state runs over well-separated Gaussian centroids.

    Each utterance is a sequence of state runs; every run contributes one
    deterministic word to the transcript, frames are the run's centroid plus
    N(0, sigma^2) noise. Centroid min pairwise distance >= 8 sigma, so
    k-means can recover the states and end-to-end WER can reach ~0.
    """
    workdir = Path(workdir)
    rng = np.random.default_rng(seed)
    centroids = np.empty((K_true, D))
    n_have = 0
    while n_have < K_true:
        cand = rng.normal(0.0, 2.0, size=D)
        if n_have == 0 or np.min(
            np.linalg.norm(centroids[:n_have] - cand, axis=1)
        ) >= 8.0 * sigma:
            centroids[n_have] = cand
            n_have += 1
    words = [f"{lang}{k}" for k in range(K_true)]

    utts: list[cio.Utterance] = []
    for i in range(n_utts):
        utt_id = f"{lang}_{i:04d}"
        target_frames = int(round(rng.uniform(*dur_range) * frame_rate))
        states: list[int] = []
        state = int(rng.integers(K_true))
        run_words: list[str] = []
        while len(states) < target_frames:
            length = int(rng.integers(run_frames[0], run_frames[1]))
            states.extend([state] * length)
            run_words.append(words[state])
            if K_true > 1:
                step = int(rng.integers(1, K_true))
                state = (state + step) % K_true
        states_arr = np.asarray(states, dtype=np.int64)
        frames = centroids[states_arr] + rng.normal(0.0, sigma, size=(len(states), D))
        emb_path = workdir / "emb" / f"{utt_id}.dsem"
        cio.write_embedding_file(
            cio.EmbeddingSequence(frames.astype(np.float32), frame_rate, "synthetic"), emb_path
        )
        cio.write_token_file(
            cio.TokenSequence(states_arr[None, :], [K_true], frame_rate),
            workdir / "states" / f"{utt_id}.dstk",
        )
        utts.append(cio.Utterance(utt_id, lang, str(emb_path), " ".join(run_words),
                                  len(states) / frame_rate))

    n_train = int(round(split_fracs[0] * n_utts))
    n_dev = int(round(split_fracs[1] * n_utts))
    by_split = {
        "train": utts[:n_train],
        "dev": utts[n_train : n_train + n_dev],
        "test": utts[n_train + n_dev :],
    }
    for split, items in by_split.items():
        cio.write_manifest(items, workdir / "manifests" / f"{lang}_{split}.jsonl")
    return {
        "lang": lang,
        "n_utts": n_utts,
        "K_true": K_true,
        "words": words,
        "counts": {s: len(v) for s, v in by_split.items()},
    }


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class RunReport:
    run_name: str
    languages: tuple[str, ...]
    input_mode: str
    mix_data: bool
    shared_kmeans: bool
    units: int
    bpe_size: int
    epochs: int
    lr: float
    total_params: int
    config_hash: str
    loss_curve: list[float]
    epoch_minutes: list[float]
    wer: dict  # lang -> {"dev": float, "test": float}

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, default=list)

    @classmethod
    def from_json(cls, raw: str) -> "RunReport":
        d = json.loads(raw)
        d["languages"] = tuple(d["languages"])
        return cls(**d)

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.to_json())


def wer_table(reports: list[RunReport]) -> str:
    """Plain-text per-language dev/test WER rows, one per run."""
    langs = sorted({l for r in reports for l in r.wer})
    header = ["run", "mode", "units"] + [f"{l} dev/test" for l in langs] + ["avg dev/test"]
    rows = [header]
    for r in reports:
        cells = [r.run_name, r.input_mode, str(r.units)]
        devs, tests = [], []
        for l in langs:
            if l in r.wer:
                d, t = r.wer[l]["dev"], r.wer[l]["test"]
                devs.append(d)
                tests.append(t)
                cells.append(f"{100 * d:.2f} / {100 * t:.2f}")
            else:
                cells.append("-")
        cells.append(f"{100 * np.mean(devs):.2f} / {100 * np.mean(tests):.2f}")
        rows.append(cells)
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows)


def ablation_table(cells: list[tuple[dict, list[RunReport]]]) -> str:
    """Rows shaped like the mono-vs-multilingual ablation: one per grid cell."""
    langs = sorted({l for _, reports in cells for r in reports for l in r.wer})
    header = ["ID", "Mix data", "Shared Kmeans", "Units"] + \
             [f"{l} dev/test" for l in langs] + ["avg dev/test"]
    rows = [header]
    for i, (flags, reports) in enumerate(cells, start=1):
        merged: dict = {}
        for r in reports:
            merged.update(r.wer)
        cells_out = [str(i), "yes" if flags["mix_data"] else "no",
                     "yes" if flags["shared_kmeans"] else "no",
                     str(reports[0].units if reports else "-")]
        devs, tests = [], []
        for l in langs:
            if l in merged:
                d, t = merged[l]["dev"], merged[l]["test"]
                devs.append(d)
                tests.append(t)
                cells_out.append(f"{100 * d:.2f} / {100 * t:.2f}")
            else:
                cells_out.append("-")
        avg = f"{100 * np.mean(devs):.2f} / {100 * np.mean(tests):.2f}" if devs else "-"
        cells_out.append(avg)
        rows.append(cells_out)
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows)


def timing_report(reports: list[RunReport]) -> tuple[str, dict]:
    """Discrete vs fbank minutes/epoch per language, with the ratio."""
    per_lang: dict[str, dict[str, float]] = {}
    for r in reports:
        mins = float(np.mean(r.epoch_minutes)) if r.epoch_minutes else 0.0
        for l in r.languages:
            per_lang.setdefault(l, {})[r.input_mode] = mins
    header = ["lang", "discrete min/epoch", "fbank min/epoch", "ratio"]
    rows = [header]
    ratios = {}
    for l in sorted(per_lang):
        entry = per_lang[l]
        disc = entry.get("discrete")
        fb = entry.get("fbank")
        ratio = disc / fb if disc is not None and fb else None
        if ratio is not None:
            ratios[l] = ratio
        rows.append([
            l,
            f"{disc:.4f}" if disc is not None else "-",
            f"{fb:.4f}" if fb is not None else "-",
            f"{ratio:.3f}" if ratio is not None else "-",
        ])
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    table = "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows)
    return table, ratios


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class TrainItem:
    utt: cio.Utterance
    labels: list[int]
    tokens: cio.TokenSequence | None = None
    features: cio.EmbeddingSequence | None = None


class DiscreteFrontend:
    """Tokens -> embedding (+fusion) -> interpolation -> (train-time) augment."""

    def __init__(self, codebook_sizes, cfg: ExperimentConfig, seed: int):
        self.params = fe.FrontendParams(codebook_sizes, seed=seed)
        self.cfg = cfg

    def __call__(self, item: TrainItem, training: bool) -> nm.Tensor:
        x = fe.embed_tokens(item.tokens, self.params)
        x = fe.interpolate_rate(x, item.tokens.frame_rate_hz,
                                self.cfg.frontend.target_rate_hz)
        if training:
            x = aug.apply_pipeline(x, self.cfg.augment, item.utt.utt_id)
        return x

    def parameters(self):
        return self.params.parameters()


class ContinuousFrontend:
    """Features -> (train-time) spec-augment -> projection to 80 -> interpolation."""

    def __init__(self, feat_dim: int, cfg: ExperimentConfig, seed: int):
        rng = np.random.default_rng(seed)
        self.proj_w = nm.Parameter(rng.normal(0.0, 1.0 / np.sqrt(feat_dim),
                                              size=(feat_dim, fe.EMBED_DIM)), "cont.proj.w")
        self.proj_b = nm.Parameter(np.zeros(fe.EMBED_DIM), "cont.proj.b")
        self.cfg = cfg

    def __call__(self, item: TrainItem, training: bool) -> nm.Tensor:
        feat = item.features
        if training:
            feat = fb.spec_augment(feat, rng_seed=aug.derive_seed(self.cfg.augment.rng_seed,
                                                                  item.utt.utt_id))
        x = nm.affine(nm.Tensor(feat.frames), self.proj_w, self.proj_b)
        return fe.interpolate_rate(x, feat.frame_rate_hz, self.cfg.frontend.target_rate_hz)

    def parameters(self):
        return [self.proj_w, self.proj_b]


@dataclass
class TrainStats:
    loss_curve: list[float]
    epoch_minutes: list[float]
    n_steps: int


def train_model(model: TransducerModel, frontend_call, extra_params: list,
                items: list[TrainItem], epochs: int, lr: float,
                train_cfg: TrainSection, seed: int) -> TrainStats:
    """The single trainer entry point shared by both input modes."""
    params = model.parameters() + list(extra_params)
    rng = np.random.default_rng(seed)
    recent = deque(maxlen=train_cfg.divergence_window)
    smoothed = deque(maxlen=train_cfg.divergence_window)
    loss_curve: list[float] = []
    epoch_minutes: list[float] = []
    n_steps = 0
    B = max(1, train_cfg.batch_size)
    for epoch in range(epochs):
        t0 = time.monotonic()
        order = rng.permutation(len(items))
        epoch_losses: list[float] = []
        for lo in range(0, len(order), B):
            batch = [items[i] for i in order[lo : lo + B]]
            batch_losses = []
            for item in batch:
                x = frontend_call(item, True)
                lp = model.forward(x, item.labels)
                loss_t = rnnt.rnnt_loss_tensor(lp, item.labels, model.cfg.blank_id)
                scale = 1.0 / len(batch) if train_cfg.batch_reduction == "mean" else 1.0
                nm.scale(loss_t, scale).backward()
                batch_losses.append(float(loss_t.data))
            step_loss = (np.mean(batch_losses) if train_cfg.batch_reduction == "mean"
                         else np.sum(batch_losses))
            n_steps += 1
            if not np.isfinite(step_loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}", epoch)
            recent.append(step_loss)
            # quarter-window smoothing so single-batch jitter cannot trip it;
            # the 1.0-nat floor ignores relative noise around near-zero losses
            q = max(1, train_cfg.divergence_window // 4)
            tail = float(np.mean([recent[-i - 1] for i in range(min(q, len(recent)))]))
            smoothed.append(tail)
            if (tail > train_cfg.divergence_factor * smoothed[0] and tail > 1.0
                    and len(smoothed) > q):
                raise DivergenceError(
                    f"loss grew {train_cfg.divergence_factor}x within "
                    f"{train_cfg.divergence_window} steps at epoch {epoch}", epoch
                )
            epoch_losses.append(step_loss)
            nm.clip_grad_norm(params, train_cfg.clip_norm)
            for p in params:
                if p.grad is not None:
                    nm.adam_step(p, lr)
        loss_curve.append(float(np.mean(epoch_losses)))
        epoch_minutes.append((time.monotonic() - t0) / 60.0)
    return TrainStats(loss_curve, epoch_minutes, n_steps)


def evaluate(model: TransducerModel, frontend_call, bpe_model: bpe_mod.BpeModel,
             items: list[TrainItem], beam: int = 0) -> tuple[float, list[dict]]:
    """Corpus WER (total errors / total reference words) plus per-utt hyps."""
    total_err = 0
    total_ref = 0
    hyps = []
    for item in items:
        x = frontend_call(item, False)
        scorer = de.JointScorer(model, x)
        if beam and beam > 1:
            ids, score = de.beam_from_scorer(scorer, model.cfg.blank_id,
                                             model.cfg.joint.vocab_size, beam)
        else:
            ids = de.greedy_from_scorer(scorer, model.cfg.blank_id)
            score = 0.0
        text = bpe_mod.decode(bpe_model, ids)
        ref_words = bpe_mod.normalize(item.utt.text).split()
        result = de.wer(ref_words, text.split())
        total_err += result.errors
        total_ref += result.n_ref
        hyps.append({"utt_id": item.utt.utt_id, "hyp_text": text, "log_score": score})
    return (total_err / total_ref if total_ref else 0.0), hyps


# ---------------------------------------------------------------------------
# Experiment driver
# ---------------------------------------------------------------------------


def _manifest_path(cfg: ExperimentConfig, lang: str, split: str) -> Path:
    return Path(cfg.workdir) / "manifests" / f"{lang}_{split}.jsonl"


def _load_manifests(cfg: ExperimentConfig) -> dict[str, dict[str, list[cio.Utterance]]]:
    out: dict[str, dict[str, list[cio.Utterance]]] = {}
    for lang in cfg.languages:
        out[lang] = {}
        for split in SPLITS:
            path = _manifest_path(cfg, lang, split)
            if not path.exists():
                raise ConfigurationError(
                    f"missing manifest {path}; run `ditok synth` or prepare the corpus first"
                )
            out[lang][split] = cio.read_manifest(path)
    return out


def _train_codebooks(cfg: ExperimentConfig, manifests, run_dir: Path) -> dict[str, cio.Codebook]:
    """One codebook per language, or a single shared one; writes DSCB files."""
    def load(u):
        return cio.read_embedding_file(u.source_path).frames

    by_lang: dict[str, cio.Codebook] = {}
    if cfg.shared_kmeans:
        pooled = []
        for lang in cfg.languages:
            sample = tok.subsample_for_training(
                manifests[lang]["train"], cfg.train.kmeans_hours,
                aug.derive_seed(cfg.seed, f"kmeans:{lang}"), load)
            if sample.frames.size:
                pooled.append(sample.frames)
        cb = tok.kmeans_train(np.concatenate(pooled), cfg.units,
                              seed=aug.derive_seed(cfg.seed, "kmeans:shared"),
                              lang_scope="shared", n_init=cfg.train.kmeans_n_init)
        cio.write_codebook(cb, run_dir / "codebooks" / f"shared_{cfg.units}.dscb")
        for lang in cfg.languages:
            by_lang[lang] = cb
    else:
        for lang in cfg.languages:
            sample = tok.subsample_for_training(
                manifests[lang]["train"], cfg.train.kmeans_hours,
                aug.derive_seed(cfg.seed, f"kmeans:{lang}"), load)
            cb = tok.kmeans_train(sample.frames, cfg.units,
                                  seed=aug.derive_seed(cfg.seed, f"kmeans:{lang}"),
                                  lang_scope=lang, n_init=cfg.train.kmeans_n_init)
            cio.write_codebook(cb, run_dir / "codebooks" / f"{lang}_{cfg.units}.dscb")
            by_lang[lang] = cb
    return by_lang


def _tokenize_all(cfg: ExperimentConfig, manifests, codebooks, run_dir: Path) -> dict[str, Path]:
    paths: dict[str, Path] = {}
    for lang in cfg.languages:
        for split in SPLITS:
            for utt in manifests[lang][split]:
                seq = cio.read_embedding_file(utt.source_path)
                tokens = tok.assign(seq, codebooks[lang])
                out = run_dir / "tokens" / f"{utt.utt_id}.dstk"
                cio.write_token_file(tokens, out)
                paths[utt.utt_id] = out
    return paths


def _resolve_bpe_size(cfg: ExperimentConfig, run_langs: tuple[str, ...]) -> int:
    if cfg.bpe_size != "auto":
        return int(cfg.bpe_size)
    return 500 if len(run_langs) == 1 else 3500


def _build_items(cfg, manifests, run_langs, split, bpe_model, token_paths) -> list[TrainItem]:
    items = []
    for lang in run_langs:
        for utt in manifests[lang][split]:
            labels = bpe_mod.encode(bpe_model, utt.text)
            item = TrainItem(utt=utt, labels=labels)
            if cfg.input_mode == "discrete":
                item.tokens = cio.read_token_file(token_paths[utt.utt_id])
            else:
                item.features = cio.read_embedding_file(utt.source_path)
            items.append(item)
    return items


def run_experiment(cfg: ExperimentConfig) -> list[RunReport]:
    """Tokenize (if discrete) -> BPE -> train -> decode -> score.

    mix_data=False trains one independent model per language and returns one
    report each; mix_data=True trains a single model over the union and
    returns one report with a WER row per language.
    """
    prev_dtype = nm.DEFAULT_DTYPE
    nm.set_default_dtype(np.float32 if cfg.train.dtype == "float32" else np.float64)
    try:
        return _run_experiment_inner(cfg)
    finally:
        nm.set_default_dtype(prev_dtype)


def _run_experiment_inner(cfg: ExperimentConfig) -> list[RunReport]:
    manifests = _load_manifests(cfg)
    chash = config_hash(cfg)
    exp_dir = Path(cfg.workdir) / "runs" / f"exp_{chash}"
    token_paths: dict[str, Path] = {}
    if cfg.input_mode == "discrete":
        codebooks = _train_codebooks(cfg, manifests, exp_dir)
        token_paths = _tokenize_all(cfg, manifests, codebooks, exp_dir)

    run_groups: list[tuple[str, ...]] = (
        [tuple(cfg.languages)] if cfg.mix_data else [(l,) for l in cfg.languages]
    )
    reports: list[RunReport] = []
    for run_langs in run_groups:
        run_name = "mix_" + "-".join(run_langs) if cfg.mix_data else run_langs[0]
        run_dir = exp_dir / run_name
        run_seed = aug.derive_seed(cfg.seed, f"run:{run_name}") % (2**31)

        bpe_size = _resolve_bpe_size(cfg, run_langs)
        corpus = [u.text for l in run_langs for u in manifests[l]["train"]]
        bpe_model = bpe_mod.bpe_train(corpus, bpe_size)
        run_dir.mkdir(parents=True, exist_ok=True)
        bpe_model.save(run_dir / "bpe.json")

        train_items = _build_items(cfg, manifests, run_langs, "train", bpe_model, token_paths)
        dur = sum(it.utt.duration_s for it in train_items)
        epochs, lr = resolve_schedule(dur, cfg.epochs, cfg.lr)

        if cfg.input_mode == "discrete":
            shape_info = train_items[0].tokens.codebook_sizes
        else:
            shape_info = train_items[0].features.frames.shape[1]
        model, front = _build_model_and_frontend(cfg, run_name, bpe_model.vocab_size,
                                                 shape_info)

        stats = train_model(model, front, front.parameters(), train_items,
                            epochs, lr, cfg.train, seed=run_seed + 2)
        save_checkpoint(model.parameters() + front.parameters(), run_dir / "model.dscp")

        wer_by_lang: dict[str, dict[str, float]] = {}
        for lang in run_langs:
            wer_by_lang[lang] = {}
            for split in ("dev", "test"):
                items = _build_items(cfg, manifests, (lang,), split, bpe_model, token_paths)
                wer_val, hyps = evaluate(model, front, bpe_model, items,
                                         beam=cfg.train.decode_beam)
                wer_by_lang[lang][split] = wer_val
                with open(run_dir / f"hyps_{lang}_{split}.jsonl", "w") as fh:
                    for h in hyps:
                        fh.write(json.dumps(h) + "\n")

        report = RunReport(
            run_name=run_name, languages=run_langs, input_mode=cfg.input_mode,
            mix_data=cfg.mix_data, shared_kmeans=cfg.shared_kmeans, units=cfg.units,
            bpe_size=bpe_size, epochs=epochs, lr=lr,
            total_params=model.parameter_count()
            + sum(p.data.size for p in front.parameters()),
            config_hash=chash, loss_curve=stats.loss_curve,
            epoch_minutes=stats.epoch_minutes, wer=wer_by_lang,
        )
        report.save(run_dir / "report.json")
        reports.append(report)
    return reports


def _build_model_and_frontend(cfg: ExperimentConfig, run_name: str, vocab_size: int,
                              input_shape_info) -> tuple[TransducerModel, object]:
    run_seed = aug.derive_seed(cfg.seed, f"run:{run_name}") % (2**31)
    m = cfg.model
    tcfg = TransducerConfig(
        encoder=EncoderConfig(
            downsample_factors=tuple(m.downsample_factors),
            blocks_per_stack=m.blocks_per_stack, d_model=m.d_model,
            n_heads=m.n_heads, conv_kernel=m.conv_kernel,
            ffn_multiplier=m.ffn_multiplier, max_frames=m.max_frames),
        predictor=PredictorConfig(context_size=m.context_size,
                                  embed_dim=m.pred_embed_dim),
        joint=JointConfig(joint_dim=m.joint_dim, vocab_size=vocab_size),
    )
    model = TransducerModel(tcfg, seed=run_seed)
    if cfg.input_mode == "discrete":
        front = DiscreteFrontend(input_shape_info, cfg, seed=run_seed + 1)
    else:
        front = ContinuousFrontend(input_shape_info, cfg, seed=run_seed + 1)
    return model, front


def load_run(cfg: ExperimentConfig, run_name: str):
    """Rebuild a trained run from its directory: model, frontend, BPE model."""
    exp_dir = Path(cfg.workdir) / "runs" / f"exp_{config_hash(cfg)}"
    run_dir = exp_dir / run_name
    if not (run_dir / "model.dscp").exists():
        raise ConfigurationError(f"no trained checkpoint at {run_dir}; run `ditok train` first")
    bpe_model = bpe_mod.BpeModel.load(run_dir / "bpe.json")
    manifests = _load_manifests(cfg)
    run_langs = tuple(cfg.languages) if cfg.mix_data else (run_name,)
    first = manifests[run_langs[0]]["train"][0]
    if cfg.input_mode == "discrete":
        tokens = cio.read_token_file(exp_dir / "tokens" / f"{first.utt_id}.dstk")
        shape_info = tokens.codebook_sizes
    else:
        shape_info = cio.read_embedding_file(first.source_path).frames.shape[1]
    model, front = _build_model_and_frontend(cfg, run_name, bpe_model.vocab_size, shape_info)
    arrays = load_checkpoint(run_dir / "model.dscp")
    params = {p.name: p for p in model.parameters() + front.parameters()}
    for name, arr in arrays.items():
        params[name].data = arr.astype(params[name].data.dtype)
    return model, front, bpe_model


def decode_split(cfg: ExperimentConfig, run_name: str, split: str,
                 beam: int = 0) -> list[dict]:
    """Decode a split with a trained run; returns hyp records."""
    model, front, bpe_model = load_run(cfg, run_name)
    manifests = _load_manifests(cfg)
    run_langs = tuple(cfg.languages) if cfg.mix_data else (run_name,)
    exp_dir = Path(cfg.workdir) / "runs" / f"exp_{config_hash(cfg)}"
    token_paths = {}
    if cfg.input_mode == "discrete":
        for lang in run_langs:
            for utt in manifests[lang][split]:
                token_paths[utt.utt_id] = exp_dir / "tokens" / f"{utt.utt_id}.dstk"
    items = _build_items(cfg, manifests, run_langs, split, bpe_model, token_paths)
    _, hyps = evaluate(model, front, bpe_model, items, beam=beam)
    return hyps


def run_ablation_grid(cfg: ExperimentConfig) -> list[tuple[dict, list[RunReport]]]:
    """{mix_data x shared_kmeans} grid; each cell gets a fresh run directory."""
    cells = []
    for mix in (False, True):
        for shared in (False, True):
            cell_cfg = replace(cfg, mix_data=mix, shared_kmeans=shared)
            reports = run_experiment(cell_cfg)
            cells.append(({"mix_data": mix, "shared_kmeans": shared}, reports))
    return cells

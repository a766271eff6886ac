"""On-disk formats shared by the whole pipeline.

Manifests are JSON lines; embeddings (DSEM), token streams (DSTK) and
codebooks (DSCB) are little-endian fixed-width binary with a magic and a
version so round-trips are bit-exact and validation is cheap.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, LengthError, ParseError, ValidationError

ALLOWED_LANGS = frozenset({"de", "nl", "fr", "es", "it", "pt", "pl", "syn"})

MANIFEST_FIELDS = ("utt_id", "lang", "source_path", "text", "duration_s")


@dataclass
class Utterance:
    utt_id: str
    lang: str
    source_path: str
    text: str
    duration_s: float

    def validate(self) -> None:
        if self.lang not in ALLOWED_LANGS:
            raise ValidationError(f"utterance {self.utt_id!r}: lang {self.lang!r} not in {sorted(ALLOWED_LANGS)}")
        if not self.duration_s > 0:
            raise ValidationError(f"utterance {self.utt_id!r}: duration_s must be > 0, got {self.duration_s}")


@dataclass
class EmbeddingSequence:
    """Frame-major T x D real matrix with a frame rate."""

    frames: np.ndarray
    frame_rate_hz: float
    source_tag: str = ""

    def validate(self) -> None:
        if self.frames.ndim != 2 or self.frames.shape[0] < 1 or self.frames.shape[1] < 1:
            raise ValidationError(f"embedding frames must be T x D with T,D >= 1, got {self.frames.shape}")
        if not self.frame_rate_hz > 0:
            raise ValidationError(f"frame_rate_hz must be positive, got {self.frame_rate_hz}")
        if not np.all(np.isfinite(self.frames)):
            raise ValidationError("embedding frames contain non-finite values")


@dataclass
class TokenSequence:
    """G parallel integer sequences of shared length T."""

    groups: np.ndarray  # (G, T) integer
    codebook_sizes: list[int]
    frame_rate_hz: float

    def validate(self) -> None:
        if self.groups.ndim != 2:
            raise ValidationError(f"token groups must be (G, T), got shape {self.groups.shape}")
        G, T = self.groups.shape
        if G < 1 or T < 1:
            raise ValidationError(f"token groups must be non-empty, got shape {self.groups.shape}")
        if len(self.codebook_sizes) != G:
            raise ValidationError(f"{len(self.codebook_sizes)} codebook sizes for {G} groups")
        if not self.frame_rate_hz > 0:
            raise ValidationError(f"frame_rate_hz must be positive, got {self.frame_rate_hz}")
        for g in range(G):
            row = self.groups[g]
            K = self.codebook_sizes[g]
            bad = np.nonzero((row < 0) | (row >= K))[0]
            if bad.size:
                t = int(bad[0])
                raise ValidationError(
                    f"token {int(row[t])} out of range [0, {K}) at group {g}, frame {t}"
                )


@dataclass
class Codebook:
    """K centroids of dimension D plus training metadata."""

    centroids: np.ndarray  # (K, D)
    lang_scope: str = "shared"
    trained_on_hours: float = 0.0
    inertia_history: list[float] = field(default_factory=list)

    @property
    def K(self) -> int:
        return self.centroids.shape[0]

    @property
    def D(self) -> int:
        return self.centroids.shape[1]


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------


def read_manifest(path) -> list[Utterance]:
    """One JSON object per line with exactly the Utterance fields."""
    utts: list[Utterance] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"{path}:{lineno}: malformed JSON: {e}") from e
            if not isinstance(obj, dict):
                raise ParseError(f"{path}:{lineno}: expected a JSON object")
            missing = [f for f in MANIFEST_FIELDS if f not in obj]
            if missing:
                raise ParseError(f"{path}:{lineno}: missing field {missing[0]!r}")
            extra = [k for k in obj if k not in MANIFEST_FIELDS]
            if extra:
                raise ParseError(f"{path}:{lineno}: unexpected field {extra[0]!r}")
            utt = Utterance(
                utt_id=str(obj["utt_id"]),
                lang=str(obj["lang"]),
                source_path=str(obj["source_path"]),
                text=str(obj["text"]),
                duration_s=float(obj["duration_s"]),
            )
            utt.validate()
            if utt.utt_id in seen:
                raise ValidationError(f"{path}:{lineno}: duplicate utt_id {utt.utt_id!r}")
            seen.add(utt.utt_id)
            utts.append(utt)
    return utts


def write_manifest(utts: list[Utterance], path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for u in utts:
            u.validate()
            fh.write(json.dumps({f: getattr(u, f) for f in MANIFEST_FIELDS}) + "\n")


def total_duration_s(utts: list[Utterance]) -> float:
    return float(sum(u.duration_s for u in utts))


# ---------------------------------------------------------------------------
# Binary helpers
# ---------------------------------------------------------------------------


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise LengthError(f"truncated file: expected {n} bytes for {what}, got {len(buf)}")
    return buf


def _check_magic(fh, magic: bytes) -> None:
    got = fh.read(4)
    if got != magic:
        raise FormatError(f"bad magic: expected {magic!r}, got {got!r}")
    (version,) = struct.unpack("<H", _read_exact(fh, 2, "version"))
    if version != 1:
        raise FormatError(f"unsupported version {version}")


def _write_tag(fh, tag: str) -> None:
    raw = tag.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValidationError("tag too long")
    fh.write(struct.pack("<H", len(raw)))
    fh.write(raw)


def _read_tag(fh) -> str:
    (n,) = struct.unpack("<H", _read_exact(fh, 2, "tag length"))
    return _read_exact(fh, n, "tag").decode("utf-8")


def _check_eof(fh, path) -> None:
    if fh.read(1):
        raise LengthError(f"{path}: trailing bytes after declared payload")


# ---------------------------------------------------------------------------
# DSEM: embedding sequences
# ---------------------------------------------------------------------------


def write_embedding_file(seq: EmbeddingSequence, path) -> None:
    seq.validate()
    T, D = seq.frames.shape
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(b"DSEM")
        fh.write(struct.pack("<HIIf", 1, T, D, seq.frame_rate_hz))
        _write_tag(fh, seq.source_tag)
        fh.write(np.ascontiguousarray(seq.frames, dtype="<f4").tobytes())


def read_embedding_file(path) -> EmbeddingSequence:
    with open(path, "rb") as fh:
        _check_magic(fh, b"DSEM")
        T, D, rate = struct.unpack("<IIf", _read_exact(fh, 12, "header"))
        tag = _read_tag(fh)
        payload = _read_exact(fh, 4 * T * D, "frame payload")
        _check_eof(fh, path)
    frames = np.frombuffer(payload, dtype="<f4").reshape(T, D).copy()
    seq = EmbeddingSequence(frames=frames, frame_rate_hz=rate, source_tag=tag)
    seq.validate()
    return seq


# ---------------------------------------------------------------------------
# DSTK: token sequences
# ---------------------------------------------------------------------------


def write_token_file(seq: TokenSequence, path) -> None:
    seq.validate()
    G, T = seq.groups.shape
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(b"DSTK")
        fh.write(struct.pack("<HHIf", 1, G, T, seq.frame_rate_hz))
        fh.write(np.asarray(seq.codebook_sizes, dtype="<u4").tobytes())
        fh.write(np.ascontiguousarray(seq.groups, dtype="<u4").tobytes())


def read_token_file(path) -> TokenSequence:
    with open(path, "rb") as fh:
        _check_magic(fh, b"DSTK")
        G, T, rate = struct.unpack("<HIf", _read_exact(fh, 10, "header"))
        sizes = np.frombuffer(_read_exact(fh, 4 * G, "codebook sizes"), dtype="<u4")
        payload = _read_exact(fh, 4 * G * T, "token payload")
        _check_eof(fh, path)
    groups = np.frombuffer(payload, dtype="<u4").reshape(G, T).astype(np.int64)
    seq = TokenSequence(groups=groups, codebook_sizes=[int(k) for k in sizes], frame_rate_hz=rate)
    seq.validate()
    return seq


# ---------------------------------------------------------------------------
# DSCB: codebooks
# ---------------------------------------------------------------------------


def write_codebook(cb: Codebook, path) -> None:
    if cb.centroids.ndim != 2 or cb.K < 1 or cb.D < 1:
        raise ValidationError(f"codebook centroids must be K x D, got {cb.centroids.shape}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(b"DSCB")
        fh.write(struct.pack("<HII", 1, cb.K, cb.D))
        _write_tag(fh, cb.lang_scope)
        fh.write(np.ascontiguousarray(cb.centroids, dtype="<f4").tobytes())


def read_codebook(path) -> Codebook:
    with open(path, "rb") as fh:
        _check_magic(fh, b"DSCB")
        K, D = struct.unpack("<II", _read_exact(fh, 8, "header"))
        lang = _read_tag(fh)
        payload = _read_exact(fh, 4 * K * D, "centroid payload")
        _check_eof(fh, path)
    centroids = np.frombuffer(payload, dtype="<f4").reshape(K, D).copy()
    return Codebook(centroids=centroids, lang_scope=lang)

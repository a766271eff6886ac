"""K-means discretization of embedding sequences into token streams.

Codebooks are trained per language or shared across all of them; assignment
maps each frame to its nearest centroid by squared Euclidean distance with
ties broken toward the lowest centroid index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus_io import Codebook, EmbeddingSequence, TokenSequence, Utterance
from .errors import CapacityError, ConfigurationError, DimensionError, ValidationError

ASSIGN_CHUNK = 256


def _assign_indices(frames: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-centroid index and squared distance per frame, chunked.

    Distances use the direct (x - c)^2 sum so exact ties resolve to the
    lowest index (argmin takes the first minimum).
    """
    n = frames.shape[0]
    idx = np.empty(n, dtype=np.int64)
    d2 = np.empty(n, dtype=frames.dtype)
    for lo in range(0, n, ASSIGN_CHUNK):
        hi = min(lo + ASSIGN_CHUNK, n)
        diff = frames[lo:hi, None, :] - centroids[None, :, :]
        dist = (diff * diff).sum(axis=2)
        idx[lo:hi] = dist.argmin(axis=1)
        d2[lo:hi] = dist[np.arange(hi - lo), idx[lo:hi]]
    return idx, d2


def _kmeanspp_init(frames: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++: each new centroid sampled with probability proportional to
    its squared distance from the ones already chosen."""
    n = frames.shape[0]
    centroids = np.empty((K, frames.shape[1]), dtype=frames.dtype)
    centroids[0] = frames[rng.integers(n)]
    d2 = ((frames - centroids[0]) ** 2).sum(axis=1)
    for k in range(1, K):
        total = d2.sum()
        if total > 0:
            choice = rng.choice(n, p=d2 / total)
        else:
            choice = rng.integers(n)
        centroids[k] = frames[choice]
        d2 = np.minimum(d2, ((frames - centroids[k]) ** 2).sum(axis=1))
    return centroids


def _reseed_empty(frames, centroids, idx, d2, counts):
    """Move each empty cluster onto the point currently farthest from its centroid."""
    order = np.argsort(-d2, kind="stable")
    cursor = 0
    for k in np.nonzero(counts == 0)[0]:
        centroids[k] = frames[order[cursor]]
        cursor += 1


def kmeans_train(frames: np.ndarray, K: int, seed: int, max_iters: int = 100,
                 tol: float = 1e-4, lang_scope: str = "shared",
                 trained_on_hours: float = 0.0, n_init: int = 10,
                 minibatch: bool = False, batch_size: int = 4096,
                 epochs: int = 10) -> Codebook:
    """Lloyd's algorithm with k-means++ initialization.

    Runs n_init restarts (sub-seeded from seed) and keeps the lowest final
    inertia; each run stops when the relative inertia improvement drops
    below tol or after max_iters, reseeding empty clusters to the farthest
    point. With minibatch=True, runs per-center-count minibatch updates
    instead (single run; inertia history then reflects per-epoch batch
    costs and is not monotone).
    """
    frames = np.asarray(frames, dtype=np.float64)
    if K <= 0:
        raise ConfigurationError(f"K must be positive, got {K}")
    if n_init < 1:
        raise ConfigurationError(f"n_init must be >= 1, got {n_init}")
    if frames.ndim != 2 or frames.shape[0] < 1:
        raise DimensionError(f"frames must be N x D, got shape {frames.shape}")
    n_distinct = np.unique(frames, axis=0).shape[0]
    if n_distinct < K:
        raise CapacityError(f"need at least K={K} distinct frames, got {n_distinct}")

    if minibatch:
        cb = _kmeans_single(frames, K, np.random.default_rng(seed), max_iters, tol,
                            minibatch=True, batch_size=batch_size, epochs=epochs)
    else:
        seeds = np.random.SeedSequence(seed).spawn(n_init)
        cb = None
        for ss in seeds:
            run = _kmeans_single(frames, K, np.random.default_rng(ss), max_iters, tol)
            if cb is None or run.inertia_history[-1] < cb.inertia_history[-1]:
                cb = run
    cb.lang_scope = lang_scope
    cb.trained_on_hours = trained_on_hours
    return cb


def _kmeans_single(frames: np.ndarray, K: int, rng: np.random.Generator,
                   max_iters: int, tol: float, minibatch: bool = False,
                   batch_size: int = 4096, epochs: int = 10) -> Codebook:
    centroids = _kmeanspp_init(frames, K, rng)
    history: list[float] = []

    if minibatch:
        counts = np.zeros(K)
        n = frames.shape[0]
        for _ in range(epochs):
            order = rng.permutation(n)
            epoch_cost = 0.0
            for lo in range(0, n, batch_size):
                batch = frames[order[lo : lo + batch_size]]
                idx, d2 = _assign_indices(batch, centroids)
                epoch_cost += float(d2.sum())
                for k in np.unique(idx):
                    members = batch[idx == k]
                    counts[k] += members.shape[0]
                    eta = members.shape[0] / counts[k]
                    centroids[k] = (1 - eta) * centroids[k] + eta * members.mean(axis=0)
            history.append(epoch_cost)
    else:
        prev = None
        for _ in range(max_iters):
            idx, d2 = _assign_indices(frames, centroids)
            inertia = float(d2.sum())
            history.append(inertia)
            assert prev is None or inertia <= prev + 1e-9, "Lloyd inertia increased"
            if prev is not None and prev > 0 and (prev - inertia) / prev < tol:
                break
            if prev is not None and prev == 0.0:
                break
            prev = inertia
            counts = np.bincount(idx, minlength=K)
            sums = np.zeros_like(centroids)
            np.add.at(sums, idx, frames)
            nonempty = counts > 0
            centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
            if not nonempty.all():
                idx, d2 = _assign_indices(frames, centroids)
                counts = np.bincount(idx, minlength=K)
                _reseed_empty(frames, centroids, idx, d2, counts)

    return Codebook(centroids=centroids, inertia_history=history)


def assign(seq: EmbeddingSequence, cb: Codebook) -> TokenSequence:
    """Map every frame to its nearest centroid; single-group output."""
    if seq.frames.shape[1] != cb.D:
        raise DimensionError(
            f"embedding dimension {seq.frames.shape[1]} != codebook dimension {cb.D}"
        )
    idx, _ = _assign_indices(np.asarray(seq.frames, dtype=np.float64),
                             np.asarray(cb.centroids, dtype=np.float64))
    return TokenSequence(
        groups=idx[None, :], codebook_sizes=[cb.K], frame_rate_hz=seq.frame_rate_hz
    )


@dataclass
class FrameSample:
    frames: np.ndarray
    utterances: list[Utterance]
    warned_empty: bool = False


def subsample_for_training(utts: list[Utterance], target_hours: float, seed: int,
                           load_frames) -> FrameSample:
    """Draw utterances without replacement until the duration target is met.

    load_frames(utt) -> T x D array; all frames of the selected utterances
    are pooled. Deterministic per seed. An empty manifest yields an empty
    sample with the warning flag set.
    """
    if not utts:
        return FrameSample(frames=np.zeros((0, 0)), utterances=[], warned_empty=True)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(utts))
    selected: list[Utterance] = []
    cum = 0.0
    target_s = target_hours * 3600.0
    for i in order:
        selected.append(utts[i])
        cum += utts[i].duration_s
        if cum >= target_s:
            break
    frames = np.concatenate([np.asarray(load_frames(u), dtype=np.float64) for u in selected])
    return FrameSample(frames=frames, utterances=selected)


def purity(tokens: TokenSequence, reference_labels) -> float:
    """Cluster purity: sum over clusters of their majority-label count, over T."""
    labels = np.asarray(reference_labels, dtype=np.int64)
    toks = tokens.groups[0]
    if toks.shape[0] != labels.shape[0]:
        raise ValidationError(
            f"token length {toks.shape[0]} != reference length {labels.shape[0]}"
        )
    total = 0
    for k in np.unique(toks):
        _, counts = np.unique(labels[toks == k], return_counts=True)
        total += int(counts.max())
    return total / toks.shape[0]

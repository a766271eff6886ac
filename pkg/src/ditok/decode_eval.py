"""Greedy and beam transducer decoding plus WER scoring.

Decoding never needs gradients, so after one encoder pass the joint is
evaluated with plain numpy on the same parameter arrays the training path
uses. Hypotheses carry only their label ids and a log score; the stateless
predictor makes the per-step state just the last `context_size` labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .errors import ValidationError


@dataclass
class Hypothesis:
    labels: tuple[int, ...] = ()
    log_score: float = 0.0


class JointScorer:
    """Numpy fast path for per-node joint log-probs of a fixed utterance."""

    def __init__(self, model, x: nm.Tensor):
        self.model = model
        self.enc = model.encoder_forward(x).data
        self.ph = self.enc @ model.joint_h_w.data + model.joint_h_b.data
        self._pf_cache: dict[tuple[int, ...], np.ndarray] = {}

    @property
    def n_frames(self) -> int:
        return self.enc.shape[0]

    def _pf(self, labels: tuple[int, ...]) -> np.ndarray:
        c = self.model.cfg.predictor.context_size
        blank = self.model.cfg.blank_id
        context = (blank,) * max(0, c - len(labels)) + labels[-c:]
        cached = self._pf_cache.get(context)
        if cached is not None:
            return cached
        m = self.model
        emb = m.pred_embed.data[list(context)].reshape(-1)
        h = np.maximum(0.0, emb @ m.pred_conv_w.data + m.pred_conv_b.data)
        row = h @ m.pred_out_w.data + m.pred_out_b.data
        pf = row @ m.joint_f_w.data + m.joint_f_b.data
        self._pf_cache[context] = pf
        return pf

    def log_probs(self, t: int, labels: tuple[int, ...]) -> np.ndarray:
        m = self.model
        g = np.maximum(0.0, self.ph[t] + self._pf(labels))
        logits = g @ m.out_w.data + m.out_b.data
        shifted = logits - logits.max()
        return shifted - np.log(np.exp(shifted).sum())


def greedy_from_scorer(scorer, blank: int, max_symbols_per_frame: int = 5) -> list[int]:
    """Per frame, emit argmax labels until blank (or the per-frame cap)."""
    labels: list[int] = []
    steps = 0
    for t in range(scorer.n_frames):
        for _ in range(max_symbols_per_frame):
            steps += 1
            lp = scorer.log_probs(t, tuple(labels))
            best = int(lp.argmax())
            if best == blank:
                break
            labels.append(best)
    assert steps <= scorer.n_frames * max_symbols_per_frame
    return labels


def beam_from_scorer(scorer, blank: int, n_vocab: int, beam: int = 4,
                     max_symbols_per_frame: int = 5) -> tuple[list[int], float]:
    """Time-synchronous beam search merging identical label sequences.

    Returns (labels, log_score) of the best final hypothesis.
    """
    if beam < 1:
        raise ValidationError(f"beam must be >= 1, got {beam}")
    label_ids = [v for v in range(n_vocab) if v != blank]

    def merge(d, labels, score):
        prev = d.get(labels)
        d[labels] = score if prev is None else float(np.logaddexp(prev, score))

    beams: dict[tuple[int, ...], float] = {(): 0.0}
    for t in range(scorer.n_frames):
        active = beams
        next_beams: dict[tuple[int, ...], float] = {}
        for step in range(max_symbols_per_frame + 1):
            expanded: dict[tuple[int, ...], float] = {}
            for labels, score in active.items():
                lp = scorer.log_probs(t, labels)
                merge(next_beams, labels, score + lp[blank])
                if step < max_symbols_per_frame:
                    top = np.argsort(lp[label_ids])[::-1][:beam]
                    for i in top:
                        v = label_ids[int(i)]
                        merge(expanded, labels + (v,), score + lp[v])
            if not expanded:
                break
            active = dict(sorted(expanded.items(), key=lambda kv: -kv[1])[:beam])
        beams = dict(sorted(next_beams.items(), key=lambda kv: -kv[1])[:beam])
    best_labels, best_score = max(beams.items(), key=lambda kv: kv[1])
    return list(best_labels), best_score


def greedy_decode(model, x: nm.Tensor, max_symbols_per_frame: int = 5) -> list[int]:
    return greedy_from_scorer(JointScorer(model, x), model.cfg.blank_id,
                              max_symbols_per_frame)


def beam_decode(model, x: nm.Tensor, beam: int = 4,
                max_symbols_per_frame: int = 5) -> list[int]:
    labels, _ = beam_from_scorer(JointScorer(model, x), model.cfg.blank_id,
                                 model.cfg.joint.vocab_size, beam,
                                 max_symbols_per_frame)
    return labels


def decode_score(model, x: nm.Tensor, labels: list[int]) -> float:
    """Alignment-summed log probability of a label sequence (for tests)."""
    from . import rnnt

    scorer = JointScorer(model, x)
    lp = np.stack([
        np.stack([scorer.log_probs(t, tuple(labels[:u])) for u in range(len(labels) + 1)])
        for t in range(scorer.n_frames)
    ])
    loss, _ = rnnt.rnnt_loss(lp, labels, blank=model.cfg.blank_id)
    return -loss


# ---------------------------------------------------------------------------
# WER
# ---------------------------------------------------------------------------


@dataclass
class WerResult:
    wer: float
    substitutions: int
    deletions: int
    insertions: int
    n_ref: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions


def wer(ref: list[str], hyp: list[str]) -> WerResult:
    """Levenshtein alignment with unit costs.

    The (S, D, I) decomposition of an optimal alignment is not unique; ties
    are resolved front-to-back preferring match/substitution, then deletion,
    then insertion, so counts are canonical and oracle-comparable.
    """
    n, m = len(ref), len(hyp)
    if n == 0:
        if m == 0:
            return WerResult(0.0, 0, 0, 0, 0)
        raise ValidationError("empty reference with non-empty hypothesis has no rate")
    # cell (i, j) covers suffixes ref[i:], hyp[j:]; entries (cost, s, d, ins)
    table = [[None] * (m + 1) for _ in range(n + 1)]
    table[n][m] = (0, 0, 0, 0)
    for i in range(n, -1, -1):
        for j in range(m, -1, -1):
            if table[i][j] is not None:
                continue
            options = []
            if i < n and j < m:
                c, s, d, ins = table[i + 1][j + 1]
                sub = int(ref[i] != hyp[j])
                options.append((c + sub, s + sub, d, ins))
            if i < n:
                c, s, d, ins = table[i + 1][j]
                options.append((c + 1, s, d + 1, ins))
            if j < m:
                c, s, d, ins = table[i][j + 1]
                options.append((c + 1, s, d, ins + 1))
            best = min(o[0] for o in options)
            table[i][j] = next(o for o in options if o[0] == best)
    cost, s, d, ins = table[0][0]
    return WerResult(cost / n, s, d, ins, n)

"""Byte-pair-encoding label tokenizer for transcripts.

Greedy highest-frequency pair merges over a word-boundary-marked character
alphabet; ids 0 and 1 are reserved for the transducer blank and for unknown
characters. Text is normalized (NFC, lowercase, whitespace collapse) before
both training and encoding, so round-trips are exact on normalized text.
"""

from __future__ import annotations

import json
import unicodedata
from collections import Counter
from dataclasses import dataclass, field

from .errors import ConfigurationError, ValidationError

BLANK_ID = 0
UNK_ID = 1
BLANK_TOKEN = "<blk>"
UNK_TOKEN = "<unk>"
UNK_MARKER = "\N{REPLACEMENT CHARACTER}"
WORD_MARK = "▁"  # lower one eighth block, marks a word start

N_RESERVED = 2


def normalize(text: str) -> str:
    return " ".join(unicodedata.normalize("NFC", text).lower().split())


@dataclass
class BpeModel:
    vocab: list[str]
    merges: list[tuple[str, str]]
    target_size: int
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._index:
            self._index = {u: i for i, u in enumerate(self.vocab)}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def to_json(self) -> str:
        return json.dumps(
            {"vocab": self.vocab, "merges": [list(m) for m in self.merges],
             "target_size": self.target_size},
            ensure_ascii=False, sort_keys=True,
        )

    @classmethod
    def from_json(cls, raw: str) -> "BpeModel":
        obj = json.loads(raw)
        return cls(vocab=list(obj["vocab"]),
                   merges=[tuple(m) for m in obj["merges"]],
                   target_size=int(obj["target_size"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "BpeModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def _word_symbols(word: str) -> tuple[str, ...]:
    return (WORD_MARK,) + tuple(word)


def _merge_sequence(symbols: tuple[str, ...], pair: tuple[str, str]) -> tuple[str, ...]:
    out = []
    i = 0
    merged = pair[0] + pair[1]
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


def bpe_train(corpus: list[str], target_size: int) -> BpeModel:
    """Merge the most frequent adjacent pair until target_size is reached or
    no pair occurs twice; frequency ties break lexicographically."""
    if not corpus:
        raise ConfigurationError("bpe_train: corpus is empty")
    word_freq = Counter()
    for text in corpus:
        word_freq.update(normalize(text).split())
    alphabet = sorted({ch for w in word_freq for ch in w} | {WORD_MARK})
    min_size = len(alphabet) + N_RESERVED
    if target_size < min_size:
        raise ConfigurationError(
            f"target_size {target_size} below alphabet + reserved = {min_size}"
        )
    vocab = [BLANK_TOKEN, UNK_TOKEN] + alphabet
    merges: list[tuple[str, str]] = []
    seqs = {w: _word_symbols(w) for w in word_freq}
    while len(vocab) < target_size:
        pair_freq = Counter()
        for w, symbols in seqs.items():
            f = word_freq[w]
            for a, b in zip(symbols, symbols[1:]):
                if a == WORD_MARK:
                    continue  # the bare boundary marker never merges
                pair_freq[(a, b)] += f
        if not pair_freq:
            break
        best = min(pair_freq.items(), key=lambda kv: (-kv[1], kv[0]))
        if best[1] < 2:
            break
        pair = best[0]
        merges.append(pair)
        vocab.append(pair[0] + pair[1])
        seqs = {w: _merge_sequence(s, pair) for w, s in seqs.items()}
    return BpeModel(vocab=vocab, merges=merges, target_size=target_size)


def encode(model: BpeModel, text: str) -> list[int]:
    """Label ids for normalized text; unknown characters map to the unk id.

    Never produces the blank id.
    """
    ids: list[int] = []
    for word in normalize(text).split():
        symbols = _word_symbols(word)
        for pair in model.merges:
            if len(symbols) < 2:
                break
            symbols = _merge_sequence(symbols, pair)
        ids.extend(model._index.get(s, UNK_ID) for s in symbols)
    return ids


def decode(model: BpeModel, ids) -> str:
    """Text for label ids; unk decodes to a replacement marker."""
    pieces = []
    for i in ids:
        i = int(i)
        if not 0 <= i < len(model.vocab):
            raise ValidationError(f"label id {i} out of vocab range [0, {len(model.vocab)})")
        if i == UNK_ID:
            pieces.append(UNK_MARKER)
        elif i == BLANK_ID:
            raise ValidationError("blank id in label sequence")
        else:
            pieces.append(model.vocab[i])
    return "".join(pieces).replace(WORD_MARK, " ").strip()

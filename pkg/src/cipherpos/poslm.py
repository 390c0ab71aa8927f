"""Additive-smoothed n-gram language models over POS tags.

    P(t | h) = (count(h, t) + alpha) / (count(h) + alpha * V),  V = |tagset| + 1

Each training sequence is padded with order-1 BOS symbols and a final EOS.
EOS is predicted, BOS is only ever context.  Logs are natural.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError

BOS = "<s>"
EOS = "</s>"
DEFAULT_ORDER = 2
DEFAULT_ALPHA = 0.1


class UnknownTagError(KeyError):
    pass


@dataclass
class PosLanguageModel:
    order: int
    alpha: float
    tagset: list[str]
    counts: dict[tuple[str, ...], Counter] = field(default_factory=dict)

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        self._index = {t: i for i, t in enumerate(self.tagset)}
        self._totals = {h: sum(c.values()) for h, c in self.counts.items()}

    @property
    def V(self) -> int:
        return len(self.tagset) + 1

    @property
    def events(self) -> list[str]:
        return self.tagset + [EOS]

    def prob(self, tag: str, history: tuple[str, ...]) -> float:
        if tag != EOS and tag not in self._index:
            raise UnknownTagError(tag)
        c = self.counts.get(history)
        n = c[tag] if c else 0
        total = self._totals.get(history, 0)
        return (n + self.alpha) / (total + self.alpha * self.V)

    def logprob(self, tag: str, history: tuple[str, ...]) -> float:
        return math.log(self.prob(tag, history))

    def sequence_log_prob(self, sequence) -> float:
        k = self.order - 1
        padded = [BOS] * k + list(sequence)
        total = 0.0
        for i, tag in enumerate(sequence):
            total += self.logprob(tag, tuple(padded[i:i + k]))
        total += self.logprob(EOS, tuple(padded[len(padded) - k:]) if k else ())
        return total

    def perplexity(self, sequences) -> float:
        ll = sum(self.sequence_log_prob(s) for s in sequences)
        n = sum(len(s) + 1 for s in sequences)
        return math.exp(-ll / n)

    def transition_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(start, trans, end) for an HMM whose states are the tags.

        start[j] = P(j | BOS), trans[i, j] = P(j | i), end[i] = P(EOS | i).
        Only defined for order <= 2.
        """
        if self.order > 2:
            raise ValueError("HMM transitions need a bigram (or unigram) model")
        tags = self.tagset
        if self.order == 1:
            row = np.array([self.prob(t, ()) for t in tags])
            stop = self.prob(EOS, ())
            return row.copy(), np.tile(row, (len(tags), 1)), np.full(len(tags), stop)
        start = np.array([self.prob(t, (BOS,)) for t in tags])
        trans = np.array([[self.prob(t, (s,)) for t in tags] for s in tags])
        end = np.array([self.prob(EOS, (s,)) for s in tags])
        return start, trans, end


def _count(sequences, order):
    k = order - 1
    counts: dict[tuple[str, ...], Counter] = defaultdict(Counter)
    for seq in sequences:
        padded = [BOS] * k + list(seq) + [EOS]
        for i in range(k, len(padded)):
            counts[tuple(padded[i - k:i])][padded[i]] += 1
    return dict(counts)


def train_pos_lm(sequences, order: int = DEFAULT_ORDER, alpha: float = DEFAULT_ALPHA,
                 tagset: list[str] | None = None) -> PosLanguageModel:
    sequences = [list(s) for s in sequences]
    if not sequences:
        raise ValueError("empty training set")
    if order < 1:
        raise ValueError("order must be >= 1")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    seen = list(dict.fromkeys(t for s in sequences for t in s))
    if tagset is None:
        tagset = seen
    else:
        tagset = list(tagset)
        missing = [t for t in seen if t not in set(tagset)]
        if missing:
            raise UnknownTagError(f"tags outside the given tagset: {missing}")
    for reserved in (BOS, EOS):
        if reserved in tagset:
            raise FormatError(f"tag {reserved!r} is reserved")
    return PosLanguageModel(order, alpha, tagset, _count(sequences, order))


def concat_train(parent_sequences, order: int = DEFAULT_ORDER, alpha: float = DEFAULT_ALPHA,
                 tagset: list[str] | None = None) -> PosLanguageModel:
    """One model over the concatenated tag sequences of every parent."""
    parent_sequences = list(parent_sequences)
    if not parent_sequences:
        raise ValueError("no parent corpora")
    flat = [s for seqs in parent_sequences for s in seqs]
    return train_pos_lm(flat, order, alpha, tagset)


def save_lm(lm: PosLanguageModel, path, headers: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"#order={lm.order}\n")
        f.write(f"#alpha={lm.alpha!r}\n")
        f.write(f"#tags={','.join(lm.tagset)}\n")
        for key, value in (headers or {}).items():
            f.write(f"#{key}={value}\n")
        for h in sorted(lm.counts):
            for tag, n in sorted(lm.counts[h].items()):
                f.write(f"{' '.join(h)}\t{tag}\t{n}\n")


def load_lm(path) -> PosLanguageModel:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").split("\n")
    except (OSError, UnicodeDecodeError) as e:
        raise FormatError(f"cannot read {path}: {e}") from e
    meta = {}
    counts: dict[tuple[str, ...], Counter] = defaultdict(Counter)
    for lineno, line in enumerate(lines, start=1):
        if not line:
            continue
        if line.startswith("#") and "\t" not in line:
            key, _, value = line[1:].partition("=")
            meta[key] = value
            continue
        cols = line.split("\t")
        if len(cols) != 3:
            raise FormatError(f"{path}:{lineno}: expected history<TAB>tag<TAB>count")
        h = tuple(cols[0].split(" ")) if cols[0] else ()
        try:
            counts[h][cols[1]] = int(cols[2])
        except ValueError as e:
            raise FormatError(f"{path}:{lineno}: bad count {cols[2]!r}") from e
    try:
        order = int(meta["order"])
        alpha = float(meta["alpha"])
        tags = meta["tags"].split(",") if meta["tags"] else []
    except (KeyError, ValueError) as e:
        raise FormatError(f"{path}: missing or bad #order/#alpha/#tags header") from e
    return PosLanguageModel(order, alpha, tags, dict(counts))

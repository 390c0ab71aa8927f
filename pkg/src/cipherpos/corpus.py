"""Corpus readers and writers.

Two corpus shapes are used throughout: raw tokenized text (one sentence per
line, tokens separated by single spaces) and tagged text, read either from
CoNLL-U treebanks or from the two-column ``word<TAB>tag`` files that the
tagger writes.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FormatError

LOG = logging.getLogger(__name__)

# CoNLL-U column indices
ID, FORM, LEMMA, UPOS, XPOS = range(5)
N_CONLLU_COLUMNS = 10


@dataclass
class TokenizedCorpus:
    sentences: list[list[str]]
    vocab: Counter = field(default_factory=Counter)

    def __post_init__(self):
        if not self.vocab:
            self.vocab = Counter(tok for sent in self.sentences for tok in sent)

    @property
    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)

    def __len__(self):
        return len(self.sentences)


@dataclass
class TaggedCorpus:
    sentences: list[list[tuple[str, str]]]
    tagset: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.tagset:
            self.tagset = _first_occurrence(t for sent in self.sentences for _, t in sent)

    @property
    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)

    def words(self) -> list[list[str]]:
        return [[w for w, _ in sent] for sent in self.sentences]

    def tags(self) -> list[list[str]]:
        return [[t for _, t in sent] for sent in self.sentences]

    def __len__(self):
        return len(self.sentences)


def _first_occurrence(items) -> list:
    return list(dict.fromkeys(items))


def _read_lines(path) -> list[str]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from e
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise FormatError(f"{path}: not valid UTF-8 (byte offset {e.start})") from e
    return text.split("\n")


def load_plaintext(path, lowercase: bool = False) -> TokenizedCorpus:
    """Read one sentence per line; blank lines are skipped."""
    sentences = []
    for line in _read_lines(path):
        line = line.rstrip("\r")
        if lowercase:
            line = line.lower()
        toks = [t for t in line.split(" ") if t]
        if toks:
            sentences.append(toks)
    if not sentences:
        raise FormatError(f"{path}: no non-blank lines")
    LOG.info("read %d sentences from %s", len(sentences), path)
    return TokenizedCorpus(sentences)


def write_plaintext(corpus: TokenizedCorpus, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for sent in corpus.sentences:
            f.write(" ".join(sent) + "\n")


def load_conllu(path) -> TaggedCorpus:
    """Read (FORM, UPOS) pairs from a CoNLL-U file.

    Multiword-token ranges (``3-4``) and empty nodes (``5.1``) are skipped.
    """
    sentences = []
    current: list[tuple[str, str]] = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            if current:
                sentences.append(current)
                current = []
            continue
        if line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) < N_CONLLU_COLUMNS:
            raise FormatError(
                f"{path}:{lineno}: expected {N_CONLLU_COLUMNS} columns, got {len(cols)}")
        if "-" in cols[ID] or "." in cols[ID]:
            continue
        current.append((cols[FORM], cols[UPOS]))
    if current:
        sentences.append(current)
    if not sentences:
        raise FormatError(f"{path}: no tokens found")
    return TaggedCorpus(sentences)


def load_tagged_tsv(path) -> TaggedCorpus:
    """Read ``word<TAB>tag`` rows with blank lines between sentences.

    Lines starting with ``#`` and holding no tab are headers.  An empty file
    gives an empty corpus.
    """
    sentences = []
    current = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        line = line.rstrip("\r")
        if not line:
            if current:
                sentences.append(current)
                current = []
            continue
        if line.startswith("#") and "\t" not in line:
            continue
        cols = line.split("\t")
        if len(cols) != 2:
            raise FormatError(f"{path}:{lineno}: expected word<TAB>tag")
        current.append((cols[0], cols[1]))
    if current:
        sentences.append(current)
    return TaggedCorpus(sentences)


def write_tagged_tsv(corpus: TaggedCorpus, f, headers: dict | None = None) -> None:
    """Write to an open text stream."""
    for key, value in (headers or {}).items():
        f.write(f"#{key}={value}\n")
    for i, sent in enumerate(corpus.sentences):
        if i:
            f.write("\n")
        for word, tag in sent:
            f.write(f"{word}\t{tag}\n")


def extract_tag_sequences(corpus: TaggedCorpus) -> list[list[str]]:
    return corpus.tags()

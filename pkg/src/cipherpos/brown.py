"""Brown hierarchical word clustering.

Greedy agglomerative clustering that maximises the average mutual information
of adjacent class pairs,

    MI = sum_{c,d} P(c,d) log[ P(c,d) / (P(c) P(d)) ]

with P(c,d) the relative frequency of the class bigram (c, d) and P(c) the
relative token frequency of class c.  Bigrams never cross a sentence
boundary.

The windowed variant is used: the K most frequent words start as singleton
classes, the remaining words enter one at a time by frequency rank, and each
time K+1 classes are active the pair whose merge loses the least mutual
information is merged.  The K survivors are then merged down to a single
root to obtain bit-string paths.

Words that have not yet entered the window count as singleton classes in the
objective and words under ``min_count`` share one fixed unknown class, so the
tracked objective is always the exact mutual information of a partition of
the vocabulary.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .corpus import TokenizedCorpus
from .errors import FormatError

LOG = logging.getLogger(__name__)

UNK_PATH = "UNK"
DEFAULT_K = 500


@dataclass
class Clustering:
    """Word -> cluster ID map.  IDs 0..K-1 are leaf clusters, K is unknown."""

    assignment: dict[str, int]
    paths: dict[int, str]
    K: int
    frequencies: dict[str, int] = field(default_factory=dict)
    objective: float | None = None

    @property
    def unk_cluster(self) -> int:
        return self.K

    @property
    def cluster_ids(self) -> list[int]:
        return list(range(self.K + 1))

    def cluster_of(self, word: str) -> int:
        return self.assignment.get(word, self.K)

    def path_of(self, cluster: int) -> str:
        return UNK_PATH if cluster == self.K else self.paths[cluster]


@dataclass
class MergeEvent:
    """Passed to the ``on_merge`` callback of :func:`train_brown`.

    Class labels are internal class IDs; ``labels_before``/``labels_after``
    map every eligible or rare word to its class at that moment.
    """

    step: int
    a: int
    b: int
    merged: int
    loss: float
    objective: float
    windowed: bool
    active_before: tuple[int, ...]
    labels_before: dict[str, int]
    labels_after: dict[str, int]


def _g(x):
    """x log x with 0 log 0 = 0, elementwise."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)


def _gs(x: float) -> float:
    return x * math.log(x) if x > 0 else 0.0


def _h(x: float, y: float) -> float:
    # change in sum of n log n when two cells x, y are pooled
    if x <= 0 or y <= 0:
        return 0.0
    return _gs(x + y) - _gs(x) - _gs(y)


def _pairwise_h(v):
    """H[i, j] = g(v_i + v_j) - g(v_i) - g(v_j)."""
    gv = _g(v)
    return _g(v[:, None] + v[None, :]) - gv[:, None] - gv[None, :]


class _BrownState:
    """Class bigram statistics plus the (K+1)-slot window of merge candidates."""

    def __init__(self, sentences, class_of, capacity):
        uni = Counter()
        bi = Counter()
        for sent in sentences:
            labels = [class_of(w) for w in sent]
            uni.update(labels)
            bi.update(zip(labels, labels[1:]))
        self.T = sum(uni.values())
        self.N = sum(bi.values())
        self.uni = dict(sorted(uni.items()))
        self.rows: dict[int, dict[int, int]] = {}
        self.cols: dict[int, dict[int, int]] = {}
        for (c, d), n in sorted(bi.items()):
            self.rows.setdefault(c, {})[d] = n
            self.cols.setdefault(d, {})[c] = n
        self.left = {c: sum(r.values()) for c, r in self.rows.items()}
        self.right = {d: sum(r.values()) for d, r in self.cols.items()}

        self.G = math.fsum(_gs(n) for n in bi.values())
        self.SL = math.fsum(n * math.log(self.uni[c]) for c, n in self.left.items())
        self.SR = math.fsum(n * math.log(self.uni[d]) for d, n in self.right.items())

        self.cap = capacity
        self.slot_cls = np.full(capacity, -1, dtype=np.int64)
        self.slot_of: dict[int, int] = {}
        self.C = np.zeros((capacity, capacity))
        self.W = np.zeros((capacity, capacity))
        self.U = np.zeros(capacity)
        self.L = np.zeros(capacity)
        self.R = np.zeros(capacity)

    @property
    def objective(self) -> float:
        if self.N == 0:
            return 0.0
        return (self.G - self.SL - self.SR) / self.N - math.log(self.N) + 2 * math.log(self.T)

    @property
    def n_active(self) -> int:
        return len(self.slot_of)

    def active_classes(self) -> tuple[int, ...]:
        return tuple(sorted(self.slot_of))

    def _pair_weights(self, x: int) -> np.ndarray:
        """W(x, c) for every active c, from the sparse counts."""
        acc = np.zeros(self.cap)
        slot_of = self.slot_of
        for d, nx in self.rows.get(x, {}).items():
            if d == x:
                continue
            for c, nc in self.cols[d].items():
                s = slot_of.get(c)
                if s is not None and c != x and c != d:
                    acc[s] += _h(nx, nc)
        for d, nx in self.cols.get(x, {}).items():
            if d == x:
                continue
            for c, nc in self.rows[d].items():
                s = slot_of.get(c)
                if s is not None and c != x and c != d:
                    acc[s] += _h(nx, nc)
        return acc

    def activate(self, c: int) -> None:
        free = np.flatnonzero(self.slot_cls < 0)
        s = int(free[0])
        self.slot_cls[s] = c
        self.slot_of[c] = s
        self.C[s, :] = 0.0
        self.C[:, s] = 0.0
        for d, n in self.rows.get(c, {}).items():
            t = self.slot_of.get(d)
            if t is not None:
                self.C[s, t] = n
        for d, n in self.cols.get(c, {}).items():
            t = self.slot_of.get(d)
            if t is not None:
                self.C[t, s] = n
        self.U[s] = self.uni.get(c, 0)
        self.L[s] = self.left.get(c, 0)
        self.R[s] = self.right.get(c, 0)
        self._set_weights(s, c)

    def _set_weights(self, s: int, c: int) -> None:
        w = self._pair_weights(c)
        w[s] = 0.0
        self.W[s, :] = w
        self.W[:, s] = w

    def losses(self) -> np.ndarray:
        """Loss in MI for merging each active slot pair (i < j); +inf elsewhere."""
        C, U, L, R = self.C, self.U, self.L, self.R
        d = np.diag(C)
        block = (_g(d[:, None] + d[None, :] + C + C.T)
                 - _g(d)[:, None] - _g(d)[None, :] - _g(C) - _g(C.T))
        with np.errstate(divide="ignore", invalid="ignore"):
            logU = np.where(U > 0, np.log(np.where(U > 0, U, 1.0)), 0.0)
            Um = U[:, None] + U[None, :]
            logUm = np.where(Um > 0, np.log(np.where(Um > 0, Um, 1.0)), 0.0)
        lu = (L[:, None] + L[None, :]) * logUm - (L * logU)[:, None] - (L * logU)[None, :]
        ru = (R[:, None] + R[None, :]) * logUm - (R * logU)[:, None] - (R * logU)[None, :]
        delta = self.W + block - lu - ru
        loss = -delta / self.N if self.N else np.zeros_like(delta)
        active = self.slot_cls >= 0
        mask = np.triu(np.outer(active, active), k=1)
        return np.where(mask, loss, np.inf)

    def best_pair(self) -> tuple[int, int, float]:
        loss = self.losses()
        best = loss.min()
        cand = np.argwhere(loss == best)
        pairs = []
        for i, j in cand:
            a, b = int(self.slot_cls[i]), int(self.slot_cls[j])
            pairs.append((min(a, b), max(a, b)))
        a, b = min(pairs)
        return a, b, float(best)

    def merge(self, a: int, b: int, m: int) -> None:
        sa, sb = self.slot_of[a], self.slot_of[b]
        C = self.C
        active = self.slot_cls >= 0
        active[[sa, sb]] = False

        # pairs not touching a or b only see their a/b terms pooled into m
        ca, cb = C[:, sa].copy(), C[:, sb].copy()
        ra, rb = C[sa, :].copy(), C[sb, :].copy()
        dW = (_pairwise_h(ca + cb) - _pairwise_h(ca) - _pairwise_h(cb)
              + _pairwise_h(ra + rb) - _pairwise_h(ra) - _pairwise_h(rb))
        keep = np.outer(active, active)
        np.fill_diagonal(keep, False)
        self.W = np.where(keep, self.W + dW, self.W)

        self._merge_sparse(a, b, m)

        C[:, sa] += C[:, sb]
        C[sa, :] += C[sb, :]
        C[sb, :] = 0.0
        C[:, sb] = 0.0
        self.U[sa] += self.U[sb]
        self.L[sa] += self.L[sb]
        self.R[sa] += self.R[sb]
        self.U[sb] = self.L[sb] = self.R[sb] = 0.0

        del self.slot_of[a], self.slot_of[b]
        self.slot_cls[sb] = -1
        self.slot_cls[sa] = m
        self.slot_of[m] = sa
        self.W[sb, :] = 0.0
        self.W[:, sb] = 0.0
        self._set_weights(sa, m)

    def _merge_sparse(self, a: int, b: int, m: int) -> None:
        pair = (a, b)
        entries: dict[tuple[int, int], int] = {}
        for r in pair:
            for d, n in self.rows.get(r, {}).items():
                entries[(r, d)] = n
        for col in pair:
            for c, n in self.cols.get(col, {}).items():
                entries[(c, col)] = n
        for (c, d) in entries:
            if c not in pair:
                del self.rows[c][d]
            if d not in pair:
                del self.cols[d][c]
        for r in pair:
            self.rows.pop(r, None)
            self.cols.pop(r, None)

        pooled: dict[tuple[int, int], int] = {}
        for (c, d), n in entries.items():
            key = (m if c in pair else c, m if d in pair else d)
            pooled[key] = pooled.get(key, 0) + n
        for (c, d), n in pooled.items():
            self.rows.setdefault(c, {})[d] = n
            self.cols.setdefault(d, {})[c] = n

        self.G += (math.fsum(_gs(n) for n in pooled.values())
                   - math.fsum(_gs(n) for n in entries.values()))
        ua, ub = self.uni.pop(a, 0), self.uni.pop(b, 0)
        la, lb = self.left.pop(a, 0), self.left.pop(b, 0)
        rA, rB = self.right.pop(a, 0), self.right.pop(b, 0)
        um = ua + ub
        self.uni[m] = um

        def xlogu(x, u):
            return x * math.log(u) if x > 0 else 0.0

        self.SL += xlogu(la + lb, um) - xlogu(la, ua) - xlogu(lb, ub)
        self.SR += xlogu(rA + rB, um) - xlogu(rA, ua) - xlogu(rB, ub)
        if la + lb:
            self.left[m] = la + lb
        if rA + rB:
            self.right[m] = rA + rB


def _tree_paths(root: int, children: dict[int, tuple[int, int]]) -> dict[int, str]:
    out = {}
    stack = [(root, "")]
    while stack:
        node, path = stack.pop()
        if node in children:
            left, right = children[node]
            stack.append((right, path + "1"))
            stack.append((left, path + "0"))
        else:
            out[node] = path or "0"
    return out


def train_brown(corpus: TokenizedCorpus, K: int = DEFAULT_K, min_count: int = 1,
                on_merge: Callable[[MergeEvent], None] | None = None) -> Clustering:
    """Cluster the vocabulary of ``corpus`` into K Brown classes.

    Deterministic: words are ranked by (-frequency, word) and merge ties go to
    the smallest (class_a, class_b) pair.
    """
    if K < 1:
        raise ValueError("K must be positive")
    freq = corpus.vocab
    eligible = sorted((w for w, n in freq.items() if n >= min_count),
                      key=lambda w: (-freq[w], w))
    if len(eligible) < K:
        raise FormatError(
            f"only {len(eligible)} word types with frequency >= {min_count}, need K={K}")
    word_id = {w: i for i, w in enumerate(eligible)}
    unk = len(eligible)

    def class_of(w):
        return word_id.get(w, unk)

    st = _BrownState(corpus.sentences, class_of, K + 1)
    members: dict[int, list[str]] = {i: [w] for i, w in enumerate(eligible)}
    rare = [w for w in freq if w not in word_id]
    next_id = unk + 1
    step = 0
    LOG.info("brown: %d eligible types, %d rare, K=%d", len(eligible), len(rare), K)

    def labels():
        out = {w: unk for w in rare}
        for c, ws in members.items():
            for w in ws:
                out[w] = c
        return out

    def do_merge(windowed):
        nonlocal next_id, step
        a, b, loss = st.best_pair()
        m = next_id
        next_id += 1
        if on_merge is not None:
            before, active_before = labels(), st.active_classes()
        st.merge(a, b, m)
        members[m] = members.pop(a) + members.pop(b)
        step += 1
        if on_merge is not None:
            on_merge(MergeEvent(step, a, b, m, loss, st.objective, windowed,
                                active_before, before, labels()))
        return a, b, m

    for i in range(K):
        st.activate(i)
    for i in range(K, len(eligible)):
        st.activate(i)
        do_merge(True)
        if step % 1000 == 0:
            LOG.info("brown: %d merges, objective %.6f", step, st.objective)

    objective = st.objective
    survivors = st.active_classes()
    survivor_words = {c: list(members[c]) for c in survivors}

    children: dict[int, tuple[int, int]] = {}
    while st.n_active > 1:
        a, b, m = do_merge(False)
        children[m] = (a, b)
    root = st.active_classes()[0]
    leaf_paths = _tree_paths(root, children)

    ordered = sorted(survivors, key=lambda c: leaf_paths[c])
    assignment = {}
    paths = {}
    for cid, c in enumerate(ordered):
        paths[cid] = leaf_paths[c]
        for w in survivor_words[c]:
            assignment[w] = cid
    return Clustering(assignment=assignment, paths=paths, K=K,
                      frequencies=dict(freq), objective=objective)


def class_mutual_information(sentences, label_of: Callable[[str], object]) -> float:
    """Average mutual information of adjacent class pairs, from scratch."""
    uni = Counter()
    bi = Counter()
    for sent in sentences:
        labels = [label_of(w) for w in sent]
        uni.update(labels)
        bi.update(zip(labels, labels[1:]))
    T = sum(uni.values())
    N = sum(bi.values())
    if N == 0:
        return 0.0
    return math.fsum(n / N * math.log(n * T * T / (N * uni[c] * uni[d]))
                     for (c, d), n in bi.items())


def mutual_information(clustering: Clustering, corpus: TokenizedCorpus) -> float:
    return class_mutual_information(corpus.sentences, clustering.cluster_of)


def assign_clusters(corpus: TokenizedCorpus, clustering: Clustering) -> list[list[int]]:
    return [[clustering.cluster_of(w) for w in sent] for sent in corpus.sentences]


def save_clusters(clustering: Clustering, path, headers: dict | None = None) -> None:
    """Write ``bitpath<TAB>word<TAB>frequency`` rows, grouped by cluster."""
    freq = clustering.frequencies
    words = set(clustering.assignment) | set(freq)
    rows = sorted(words, key=lambda w: (clustering.cluster_of(w), -freq.get(w, 0), w))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for key, value in (headers or {}).items():
            f.write(f"#{key}={value}\n")
        for w in rows:
            cid = clustering.cluster_of(w)
            f.write(f"{clustering.path_of(cid)}\t{w}\t{freq.get(w, 0)}\n")


def load_clusters(path) -> Clustering:
    """Read a cluster file, ours or any other tool's with the same layout."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise FormatError(f"cannot read {path}: {e}") from e
    word_path = {}
    freq = {}
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line or (line.startswith("#") and "\t" not in line):
            continue
        cols = line.split("\t")
        if len(cols) != 3:
            raise FormatError(f"{path}:{lineno}: expected bitpath<TAB>word<TAB>frequency")
        bits, word, count = cols
        if bits != UNK_PATH and (not bits or set(bits) - {"0", "1"}):
            raise FormatError(f"{path}:{lineno}: bad bit path {bits!r}")
        try:
            freq[word] = int(count)
        except ValueError as e:
            raise FormatError(f"{path}:{lineno}: bad frequency {count!r}") from e
        word_path[word] = bits
    leaf_paths = sorted({p for p in word_path.values() if p != UNK_PATH})
    if not leaf_paths:
        raise FormatError(f"{path}: no clusters")
    for p, q in zip(leaf_paths, leaf_paths[1:]):
        if q.startswith(p):
            raise FormatError(f"{path}: bit path {p} is a prefix of {q}")
    cid = {p: i for i, p in enumerate(leaf_paths)}
    K = len(leaf_paths)
    assignment = {w: cid[p] for w, p in word_path.items() if p != UNK_PATH}
    return Clustering(assignment=assignment, paths={i: p for p, i in cid.items()},
                      K=K, frequencies=freq)

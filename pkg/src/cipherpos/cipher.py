"""Decipherment of cluster-ID sequences into POS tags.

The plaintext model is a fixed tag bigram LM; the channel is a one-state
substitution table P(cluster | tag).  Only the table is learned, by EM with
scaled forward-backward over the HMM whose transitions come from the LM
(BOS and EOS included) and whose emissions come from the table.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import FormatError
from .poslm import BOS, EOS, PosLanguageModel

LOG = logging.getLogger(__name__)

EMISSION_FLOOR = 1e-10
DEFAULT_MAX_ITER = 500
DEFAULT_RESTARTS = 70
DEFAULT_TOL = 1e-6


@dataclass
class CipherTable:
    """Row-stochastic P(cluster | tag); rows follow ``tags``, columns ``clusters``."""

    tags: list[str]
    clusters: list[int]
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.shape != (len(self.tags), len(self.clusters)):
            raise ValueError(f"table shape {self.probs.shape} does not match "
                             f"{len(self.tags)} tags x {len(self.clusters)} clusters")
        self._col = {c: j for j, c in enumerate(self.clusters)}

    def column(self, cluster: int) -> int:
        try:
            return self._col[cluster]
        except KeyError:
            raise FormatError(f"cluster ID {cluster} is not in the cipher table") from None

    def __eq__(self, other):
        return (isinstance(other, CipherTable) and self.tags == other.tags
                and self.clusters == other.clusters
                and np.array_equal(self.probs, other.probs))


@dataclass
class DeciphermentResult:
    table: CipherTable
    log_likelihood: float
    perplexity: float
    iterations_run: int
    restart_seed: int
    history: list[float] = field(default_factory=list)

    def __eq__(self, other):
        return (isinstance(other, DeciphermentResult) and self.table == other.table
                and self.log_likelihood == other.log_likelihood
                and self.perplexity == other.perplexity
                and self.iterations_run == other.iterations_run
                and self.restart_seed == other.restart_seed
                and self.history == other.history)


def init_table(tags, clusters, seed: int) -> CipherTable:
    """Rows drawn uniformly from the simplex, i.e. Dirichlet(1, ..., 1)."""
    tags, clusters = list(tags), list(clusters)
    if not tags or not clusters:
        raise ValueError("need at least one tag and one cluster")
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.ones(len(clusters)), size=len(tags))
    probs /= probs.sum(axis=1, keepdims=True)
    return CipherTable(tags, clusters, probs)


class _Encoded:
    """Cluster corpus as column indices, bucketed by sentence length."""

    def __init__(self, cluster_corpus, table: CipherTable):
        by_len: dict[int, list[list[int]]] = {}
        for seq in cluster_corpus:
            by_len.setdefault(len(seq), []).append([table.column(c) for c in seq])
        self.n_empty = len(by_len.pop(0, []))
        self.buckets = [np.array(by_len[n], dtype=np.int64) for n in sorted(by_len)]
        self.flat_obs = (np.concatenate([b.ravel() for b in self.buckets])
                         if self.buckets else np.zeros(0, dtype=np.int64))
        self.n_sentences = self.n_empty + sum(len(b) for b in self.buckets)
        self.n_tokens = int(self.flat_obs.size)

    @property
    def n_events(self) -> int:
        return self.n_tokens + self.n_sentences


class _Hmm(NamedTuple):
    start: np.ndarray
    trans: np.ndarray
    end: np.ndarray
    log_empty: float    # log P(EOS | BOS), the whole of an empty sentence


def _hmm_arrays(lm: PosLanguageModel, table: CipherTable) -> _Hmm:
    if list(lm.tagset) != list(table.tags):
        raise FormatError("LM tagset and cipher-table tags differ "
                          f"({lm.tagset} vs {table.tags})")
    start, trans, end = lm.transition_arrays()
    return _Hmm(start, trans, end, lm.logprob(EOS, (BOS,) * (lm.order - 1)))


def _forward(obs, probs, start, trans, end, keep=False):
    """Scaled forward pass over a (S, n) block of equal-length sentences."""
    S, n = obs.shape
    E = probs.T[obs]                      # (S, n, T)
    alpha = np.empty_like(E) if keep else None
    scale = np.empty((S, n))
    a = start[None, :] * E[:, 0]
    for t in range(n):
        if t:
            a = (a @ trans) * E[:, t]
        c = a.sum(axis=1)
        a = a / c[:, None]
        scale[:, t] = c
        if keep:
            alpha[:, t] = a
    cend = a @ end
    ll = float(np.log(scale).sum() + np.log(cend).sum())
    return ll, E, alpha, scale, cend


def _log_likelihood(enc: _Encoded, probs, hmm: _Hmm) -> float:
    ll = enc.n_empty * hmm.log_empty
    for obs in enc.buckets:
        ll += _forward(obs, probs, hmm.start, hmm.trans, hmm.end)[0]
    return ll


def _e_step(enc: _Encoded, probs, hmm: _Hmm):
    start, trans, end = hmm.start, hmm.trans, hmm.end
    T, C = probs.shape
    ll = enc.n_empty * hmm.log_empty
    gammas = []
    for obs in enc.buckets:
        part, E, alpha, scale, cend = _forward(obs, probs, start, trans, end, keep=True)
        ll += part
        S, n = obs.shape
        beta = np.empty_like(alpha)
        b = np.broadcast_to(end / cend[:, None], (S, T))
        beta[:, n - 1] = b
        for t in range(n - 2, -1, -1):
            b = ((E[:, t + 1] * b) @ trans.T) / scale[:, t + 1][:, None]
            beta[:, t] = b
        gammas.append((alpha * beta).reshape(-1, T))
    counts = np.zeros((T, C))
    if gammas:
        gamma = np.concatenate(gammas)
        for i in range(T):
            counts[i] = np.bincount(enc.flat_obs, weights=gamma[:, i], minlength=C)
    return ll, counts


def floor_rows(counts, eps: float = EMISSION_FLOOR) -> np.ndarray:
    """Row-normalise expected counts with every entry held at or above ``eps``.

    Entries that would fall below ``eps`` are pinned to it and the remaining
    mass is shared in proportion to the counts.  This is the maximiser of the
    expected complete log-likelihood over floored tables, so EM with the floor
    still never lowers the likelihood.
    """
    counts = np.asarray(counts, dtype=float)
    T, C = counts.shape
    out = np.empty_like(counts)
    for r in range(T):
        n = counts[r]
        if not n.sum() > 0:
            out[r] = 1.0 / C
            continue
        n = n / n.max()     # subnormal rows would overflow mass / sum
        pinned = np.zeros(C, dtype=bool)
        while True:
            mass = 1.0 - eps * pinned.sum()
            p = np.where(pinned, eps, n * (mass / n[~pinned].sum()))
            low = ~pinned & (p < eps)
            if not low.any():
                break
            pinned |= low
        out[r] = p
    return out


def _em(enc: _Encoded, lm, table: CipherTable, max_iterations, tol, restart_seed):
    if max_iterations < 1:
        raise ValueError("max_iterations must be >= 1")
    if not tol > 0:
        raise ValueError("tol must be positive")
    hmm = _hmm_arrays(lm, table)
    probs = table.probs
    history = []
    iterations = 0
    prev = None
    ll = None
    for _ in range(max_iterations):
        ll, counts = _e_step(enc, probs, hmm)
        history.append(ll)
        if prev is not None and ll - prev < tol * abs(prev):
            break
        probs = floor_rows(counts)
        iterations += 1
        prev = ll
        ll = None
    if ll is None:
        ll = _log_likelihood(enc, probs, hmm)
        history.append(ll)
    ppl = math.exp(-ll / enc.n_events) if enc.n_events else float("nan")
    return DeciphermentResult(CipherTable(table.tags, table.clusters, probs), ll, ppl,
                              iterations, restart_seed, history)


def em_train(cluster_corpus, lm: PosLanguageModel, table: CipherTable,
             max_iterations: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL,
             restart_seed: int = 0) -> DeciphermentResult:
    """EM on the cipher table from the starting point ``table``.

    Stops when the relative log-likelihood gain drops below ``tol`` or after
    ``max_iterations`` M-steps.  ``history`` holds the log-likelihood of
    every table visited, the returned one last.
    """
    return _em(_Encoded(cluster_corpus, table), lm, table, max_iterations, tol, restart_seed)


def restart_seeds(master_seed: int, n_restarts: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(master_seed).generate_state(n_restarts)]


def _restart_job(args):
    enc, lm, tags, clusters, seed, max_iterations, tol = args
    return _em(enc, lm, init_table(tags, clusters, seed), max_iterations, tol, seed)


def train_with_restarts(cluster_corpus, lm: PosLanguageModel, n_restarts: int = DEFAULT_RESTARTS,
                        master_seed: int = 42, max_iterations: int = DEFAULT_MAX_ITER,
                        tol: float = DEFAULT_TOL, clusters=None,
                        workers: int = 1) -> DeciphermentResult:
    """Best of ``n_restarts`` EM runs by perplexity (ties: lowest seed).

    ``clusters`` is the table's column alphabet; by default the sorted set of
    IDs seen in the corpus.  Restarts run in ``workers`` processes; the
    result does not depend on the worker count.
    """
    if n_restarts < 1:
        raise ValueError("n_restarts must be >= 1")
    cluster_corpus = [list(s) for s in cluster_corpus]
    if clusters is None:
        clusters = sorted({c for s in cluster_corpus for c in s})
    tags = list(lm.tagset)
    probe = CipherTable(tags, list(clusters), np.zeros((len(tags), len(clusters))))
    enc = _Encoded(cluster_corpus, probe)
    _hmm_arrays(lm, probe)
    seeds = restart_seeds(master_seed, n_restarts)
    jobs = [(enc, lm, tags, list(clusters), s, max_iterations, tol) for s in seeds]
    if workers > 1 and n_restarts > 1:
        with ProcessPoolExecutor(max_workers=min(workers, n_restarts)) as ex:
            results = list(ex.map(_restart_job, jobs))
    else:
        results = [_restart_job(j) for j in jobs]
    for r in results:
        LOG.debug("restart seed=%d ppl=%.6f iters=%d", r.restart_seed, r.perplexity,
                  r.iterations_run)
    best = min(results, key=lambda r: (r.perplexity, r.restart_seed))
    LOG.info("best of %d restarts: seed=%d ppl=%.6f", n_restarts, best.restart_seed,
             best.perplexity)
    return best


def corpus_log_likelihood(cluster_corpus, lm: PosLanguageModel, table: CipherTable) -> float:
    enc = _Encoded(cluster_corpus, table)
    return _log_likelihood(enc, table.probs, _hmm_arrays(lm, table))


def corpus_perplexity(cluster_corpus, lm: PosLanguageModel, table: CipherTable) -> float:
    """exp(-LL / N), N = tokens + one EOS per sentence; tags marginalised out."""
    enc = _Encoded(cluster_corpus, table)
    ll = _log_likelihood(enc, table.probs, _hmm_arrays(lm, table))
    return math.exp(-ll / enc.n_events)


class ViterbiDecoder:
    """Log-space Viterbi with the LM and table arrays cached."""

    def __init__(self, lm: PosLanguageModel, table: CipherTable):
        start, trans, end, _ = _hmm_arrays(lm, table)
        self.table = table
        self.log_start = np.log(start)
        self.log_trans = np.log(trans)
        self.log_end = np.log(end)
        with np.errstate(divide="ignore"):
            self.log_emit = np.log(table.probs)

    def decode(self, cluster_sequence) -> list[str]:
        if len(cluster_sequence) == 0:
            raise ValueError("cannot decode an empty sequence")
        cols = [self.table.column(c) for c in cluster_sequence]
        n = len(cols)
        back = np.zeros((n, len(self.table.tags)), dtype=np.int64)
        delta = self.log_start + self.log_emit[:, cols[0]]
        for t in range(1, n):
            scores = delta[:, None] + self.log_trans
            back[t] = np.argmax(scores, axis=0)
            delta = scores[back[t], np.arange(scores.shape[1])] + self.log_emit[:, cols[t]]
        state = int(np.argmax(delta + self.log_end))
        path = [state]
        for t in range(n - 1, 0, -1):
            state = int(back[t, state])
            path.append(state)
        return [self.table.tags[i] for i in reversed(path)]


def viterbi_decode(cluster_sequence, lm: PosLanguageModel, table: CipherTable) -> list[str]:
    """argmax_p P(clusters | p) P(p); ties go to the lower tag index."""
    return ViterbiDecoder(lm, table).decode(cluster_sequence)


def save_table(result: DeciphermentResult | CipherTable, path, headers: dict | None = None) -> None:
    """TSV ``tag<TAB>cluster<TAB>probability`` with metadata header lines."""
    if isinstance(result, DeciphermentResult):
        table = result.table
        meta = {"log_likelihood": repr(result.log_likelihood),
                "perplexity": repr(result.perplexity),
                "iterations_run": result.iterations_run,
                "restart_seed": result.restart_seed}
    else:
        table, meta = result, {}
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"#tags={','.join(table.tags)}\n")
        f.write(f"#clusters={','.join(str(c) for c in table.clusters)}\n")
        for key, value in {**meta, **(headers or {})}.items():
            f.write(f"#{key}={value}\n")
        for i, tag in enumerate(table.tags):
            for j, c in enumerate(table.clusters):
                f.write(f"{tag}\t{c}\t{table.probs[i, j]:.17g}\n")


def load_table(path) -> tuple[CipherTable, dict[str, str]]:
    """Returns the table and its header metadata."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").split("\n")
    except (OSError, UnicodeDecodeError) as e:
        raise FormatError(f"cannot read {path}: {e}") from e
    meta: dict[str, str] = {}
    rows = []
    for lineno, line in enumerate(lines, start=1):
        if not line:
            continue
        if line.startswith("#") and "\t" not in line:
            key, _, value = line[1:].partition("=")
            meta[key] = value
            continue
        cols = line.split("\t")
        if len(cols) != 3:
            raise FormatError(f"{path}:{lineno}: expected tag<TAB>cluster<TAB>probability")
        rows.append((lineno, cols))
    try:
        tags = meta.pop("tags").split(",")
        clusters = [int(c) for c in meta.pop("clusters").split(",")]
    except (KeyError, ValueError) as e:
        raise FormatError(f"{path}: missing or bad #tags/#clusters header") from e
    ti = {t: i for i, t in enumerate(tags)}
    ci = {c: j for j, c in enumerate(clusters)}
    probs = np.full((len(tags), len(clusters)), np.nan)
    for lineno, (tag, c, p) in rows:
        try:
            probs[ti[tag], ci[int(c)]] = float(p)
        except (KeyError, ValueError) as e:
            raise FormatError(f"{path}:{lineno}: bad row") from e
    if np.isnan(probs).any():
        raise FormatError(f"{path}: table has missing cells")
    return CipherTable(tags, clusters, probs), meta

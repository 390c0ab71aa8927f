"""Independent oracles and generators shared by the test modules."""

import itertools
import math

import numpy as np

from cipherpos.cipher import CipherTable
from cipherpos.poslm import train_pos_lm


def joint_log_prob(tags, clusters, lm, table):
    """log P(tags) + log P(clusters | tags), via the LM's own scorer."""
    lp = lm.sequence_log_prob(tags)
    for t, c in zip(tags, clusters):
        p = table.probs[table.tags.index(t), table.clusters.index(c)]
        if p == 0:
            return -math.inf
        lp += math.log(p)
    return lp


def brute_marginal(clusters, lm, table):
    """log sum over every tag sequence of the joint probability."""
    scores = [joint_log_prob(list(p), clusters, lm, table)
              for p in itertools.product(table.tags, repeat=len(clusters))]
    m = max(scores)
    return m + math.log(sum(math.exp(s - m) for s in scores))


def brute_argmax(clusters, lm, table):
    """(first maximiser in lexicographic order, max score, runner-up score)."""
    best, second, best_seq = -math.inf, -math.inf, None
    for p in itertools.product(range(len(table.tags)), repeat=len(clusters)):
        tags = [table.tags[i] for i in p]
        s = joint_log_prob(tags, clusters, lm, table)
        if s > best:
            best, second, best_seq = s, best, tags
        elif s > second:
            second = s
    return best_seq, best, second


def random_lm(rng, n_tags, n_seqs=30, alpha=None):
    tags = [f"T{i}" for i in range(n_tags)]
    trans = rng.dirichlet(np.full(n_tags, 0.5), size=n_tags)
    seqs = []
    for _ in range(n_seqs):
        t = rng.integers(n_tags)
        seq = []
        for _ in range(rng.integers(0, 8)):
            seq.append(tags[t])
            t = rng.choice(n_tags, p=trans[t])
        seqs.append(seq)
    if alpha is None:
        alpha = float(rng.uniform(0.05, 2.0))
    return train_pos_lm(seqs, alpha=alpha, tagset=tags)


def random_table(rng, tags, n_clusters, concentration=1.0):
    probs = rng.dirichlet(np.full(n_clusters, concentration), size=len(tags))
    return CipherTable(list(tags), list(range(n_clusters)), probs)


def random_cluster_corpus(rng, n_clusters, n_tokens, max_len=12):
    out = []
    total = 0
    while total < n_tokens:
        n = int(min(rng.integers(1, max_len + 1), n_tokens - total))
        out.append([int(c) for c in rng.integers(0, n_clusters, size=n)])
        total += n
    return out


def sample_tag_corpus(rng, n_tokens, start, trans, stop):
    """Tag-index sentences from a first-order chain with a per-tag stop rate."""
    n_tags = len(start)
    seqs = []
    total = 0
    while total < n_tokens:
        t = rng.choice(n_tags, p=start)
        s = [int(t)]
        while rng.random() >= stop[t]:
            t = rng.choice(n_tags, p=trans[t])
            s.append(int(t))
        seqs.append(s)
        total += len(s)
    return seqs


def synthetic_cipher(seed=0, n_tags=5, n_clusters=20, n_tokens=10_000, diag=0.9):
    """Known tag chain + known substitution table, enciphered.

    Returns (tag names, gold tag-index sentences, cluster sentences,
    parent tag sequences from the same chain, true table).
    Tag i emits cluster i with probability ``diag``; the rest is spread
    evenly over the other clusters.
    """
    rng = np.random.default_rng(seed)
    tags = [f"T{i}" for i in range(n_tags)]
    start = rng.dirichlet(np.full(n_tags, 0.5))
    trans = rng.dirichlet(np.full(n_tags, 0.3), size=n_tags)
    stop = np.full(n_tags, 0.1)
    true = np.full((n_tags, n_clusters), (1 - diag) / (n_clusters - 1))
    for i in range(n_tags):
        true[i, i] = diag
    gold = sample_tag_corpus(rng, n_tokens, start, trans, stop)
    clusters = [[int(rng.choice(n_clusters, p=true[t])) for t in s] for s in gold]
    parent = sample_tag_corpus(rng, 2 * n_tokens, start, trans, stop)
    parent = [[tags[t] for t in s] for s in parent]
    return tags, gold, clusters, parent, true


def write_conllu(path, sentences):
    """``sentences`` is a list of [(word, upos), ...]."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for i, sent in enumerate(sentences):
            f.write(f"# sent_id = {i + 1}\n")
            for j, (w, t) in enumerate(sent, start=1):
                f.write(f"{j}\t{w}\t{w}\t{t}\t_\t_\t0\tdep\t_\t_\n")
            f.write("\n")


def write_lines(path, sentences):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for s in sentences:
            f.write(" ".join(s) + "\n")


def write_flat_clusters(path, n):
    """Word ``w{i}`` in cluster i, bit paths of equal width."""
    width = max(1, math.ceil(math.log2(n)))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for i in range(n):
            f.write(f"{format(i, f'0{width}b')}\tw{i}\t1\n")

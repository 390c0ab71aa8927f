"""End-to-end grounding: clusters + cipher table + tag LM -> tagger.

A single-parent grounder deciphers the child's cluster sequence against one
parent language's tag LM.  The averaged grounder trains one cipher per
parent, averages the perplexity-best tables entrywise, and decodes with an LM
trained on all parents' tag sequences concatenated.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .brown import Clustering, assign_clusters, load_clusters, save_clusters
from .cipher import (DEFAULT_MAX_ITER, DEFAULT_RESTARTS, DEFAULT_TOL, CipherTable,
                     ViterbiDecoder, corpus_perplexity, load_table, save_table,
                     train_with_restarts)
from .corpus import TaggedCorpus, TokenizedCorpus
from .errors import FormatError
from .poslm import (DEFAULT_ALPHA, DEFAULT_ORDER, PosLanguageModel, concat_train, load_lm,
                    save_lm, train_pos_lm)

LOG = logging.getLogger(__name__)

N_WALS_FEATURES = 102
N_COMPONENTS = 50


@dataclass
class Provenance:
    parent: str
    restart_seed: int
    perplexity: float


@dataclass
class GroundedTagger:
    clustering: Clustering
    table: CipherTable
    lm: PosLanguageModel
    provenance: list[Provenance] = field(default_factory=list)

    def __post_init__(self):
        if not set(self.table.tags) <= set(self.lm.tagset):
            raise FormatError("cipher table has tags the LM does not know")
        if list(self.table.clusters) != self.clustering.cluster_ids:
            raise FormatError("cipher table columns do not match the clustering")


def build_single_parent(cluster_corpus, parent_lm: PosLanguageModel, clustering: Clustering,
                        parent: str = "parent", n_restarts: int = DEFAULT_RESTARTS,
                        master_seed: int = 42, max_iterations: int = DEFAULT_MAX_ITER,
                        tol: float = DEFAULT_TOL, workers: int = 1) -> GroundedTagger:
    res = train_with_restarts(cluster_corpus, parent_lm, n_restarts, master_seed,
                              max_iterations, tol, clusters=clustering.cluster_ids,
                              workers=workers)
    return GroundedTagger(clustering, res.table, parent_lm,
                          [Provenance(parent, res.restart_seed, res.perplexity)])


def average_tables(tables: list[CipherTable]) -> CipherTable:
    """Entrywise mean; rows stay stochastic so nothing is renormalised."""
    if not tables:
        raise ValueError("no tables to average")
    first = tables[0]
    for t in tables[1:]:
        if t.tags != first.tags or t.clusters != first.clusters:
            raise FormatError("cannot average tables with different axes")
    probs = np.mean(np.stack([t.probs for t in tables]), axis=0)
    return CipherTable(list(first.tags), list(first.clusters), probs)


def build_cipher_avg(cluster_corpus, parents: list[tuple[str, list[list[str]]]],
                     clustering: Clustering, order: int = DEFAULT_ORDER,
                     alpha: float = DEFAULT_ALPHA, n_restarts: int = DEFAULT_RESTARTS,
                     master_seed: int = 42, max_iterations: int = DEFAULT_MAX_ITER,
                     tol: float = DEFAULT_TOL, workers: int = 1,
                     strict_tagset: bool = False) -> GroundedTagger:
    """Averaged grounder over ``parents``, a list of (name, tag sequences).

    Every per-parent LM is built over the union tagset so the tables share
    their row order.  With ``strict_tagset`` the parents must use identical
    tag inventories.
    """
    if len(parents) < 2:
        raise ValueError("the averaged grounder needs at least two parents")
    inventories = []
    for name, seqs in parents:
        if not seqs:
            raise FormatError(f"parent {name} has no tag sequences")
        inventories.append(list(dict.fromkeys(t for s in seqs for t in s)))
    if strict_tagset and any(set(inv) != set(inventories[0]) for inv in inventories):
        raise FormatError("parents disagree on the tag inventory")
    tagset = list(dict.fromkeys(t for inv in inventories for t in inv))

    tables = []
    provenance = []
    for name, seqs in parents:
        lm = train_pos_lm(seqs, order, alpha, tagset)
        res = train_with_restarts(cluster_corpus, lm, n_restarts, master_seed, max_iterations,
                                  tol, clusters=clustering.cluster_ids, workers=workers)
        LOG.info("parent %s: ppl %.4f (seed %d)", name, res.perplexity, res.restart_seed)
        tables.append(res.table)
        provenance.append(Provenance(name, res.restart_seed, res.perplexity))
    lm_all = concat_train([seqs for _, seqs in parents], order, alpha, tagset)
    return GroundedTagger(clustering, average_tables(tables), lm_all, provenance)


def tag(tagger: GroundedTagger, corpus: TokenizedCorpus) -> TaggedCorpus:
    decoder = ViterbiDecoder(tagger.lm, tagger.table)
    ids = assign_clusters(corpus, tagger.clustering)
    out = []
    for words, seq in zip(corpus.sentences, ids):
        tags = decoder.decode(seq) if seq else []
        out.append(list(zip(words, tags)))
    return TaggedCorpus(out, tagset=list(tagger.table.tags))


def parent_perplexities(cluster_corpus, taggers: dict[str, GroundedTagger]) -> dict[str, float]:
    """Perplexity of the child text under each single-parent grounder.

    Diagnostic only: low perplexity does not pick the most accurate parent.
    """
    return {name: corpus_perplexity(cluster_corpus, t.lm, t.table)
            for name, t in taggers.items()}


# -- bundles --------------------------------------------------------------

def save_bundle(tagger: GroundedTagger, directory, headers: dict | None = None) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_clusters(tagger.clustering, d / "clusters.tsv", headers)
    save_table(tagger.table, d / "table.tsv", headers)
    save_lm(tagger.lm, d / "lm.tsv", headers)
    with open(d / "provenance.tsv", "w", encoding="utf-8", newline="\n") as f:
        for key, value in (headers or {}).items():
            f.write(f"#{key}={value}\n")
        f.write("#columns=parent,restart_seed,perplexity\n")
        for p in tagger.provenance:
            f.write(f"{p.parent}\t{p.restart_seed}\t{p.perplexity!r}\n")


def load_bundle(directory) -> GroundedTagger:
    d = Path(directory)
    if not d.is_dir():
        raise FormatError(f"{d} is not a tagger bundle directory")
    clustering = load_clusters(d / "clusters.tsv")
    table, _ = load_table(d / "table.tsv")
    lm = load_lm(d / "lm.tsv")
    provenance = []
    try:
        lines = (d / "provenance.tsv").read_text(encoding="utf-8").split("\n")
    except OSError as e:
        raise FormatError(f"cannot read provenance: {e}") from e
    for line in lines:
        if not line or line.startswith("#"):
            continue
        name, seed, ppl = line.split("\t")
        provenance.append(Provenance(name, int(seed), float(ppl)))
    return GroundedTagger(clustering, table, lm, provenance)


# -- typology -------------------------------------------------------------

@dataclass
class TypologyVector:
    language: str
    raw: np.ndarray
    reduced: np.ndarray | None = None


@dataclass
class TypologyProjection:
    """Shared PCA projection: reduced = (imputed - mean) @ components."""

    fill: np.ndarray        # per-feature imputation values
    mean: np.ndarray
    components: np.ndarray  # (n_features, n_components)

    def transform(self, raw) -> np.ndarray:
        raw = np.asarray(raw, dtype=float)
        x = np.where(np.isnan(raw), self.fill, raw)
        return (x - self.mean) @ self.components


def fit_projection(raw: np.ndarray, n_components: int = N_COMPONENTS) -> TypologyProjection:
    """Mean-impute, centre, and keep the top principal axes.

    Each axis is signed so its largest-magnitude coordinate is positive.
    """
    raw = np.asarray(raw, dtype=float)
    with np.errstate(invalid="ignore"):
        fill = np.nanmean(np.where(np.isnan(raw).all(axis=0), 0.0, raw), axis=0)
    x = np.where(np.isnan(raw), fill, raw)
    mean = x.mean(axis=0)
    _, _, vt = np.linalg.svd(x - mean, full_matrices=True)
    comps = vt[:n_components].T.copy()
    for k in range(comps.shape[1]):
        j = np.argmax(np.abs(comps[:, k]))
        if comps[j, k] < 0:
            comps[:, k] *= -1
    return TypologyProjection(fill, mean, comps)


def cosine(u, v) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def typology_similarity(vectors: list[TypologyVector], child: str,
                        n_components: int = N_COMPONENTS) -> list[tuple[str, float]]:
    """Rank the other languages by cosine to ``child`` in the reduced space.

    Fills each vector's ``reduced`` field from one shared projection.
    """
    if len(vectors) < 2:
        raise ValueError("need at least two languages")
    names = [v.language for v in vectors]
    if child not in names:
        raise FormatError(f"child language {child!r} not among the vectors")
    proj = fit_projection(np.stack([v.raw for v in vectors]), n_components)
    for v in vectors:
        v.reduced = proj.transform(v.raw)
    target = vectors[names.index(child)].reduced
    ranked = [(v.language, cosine(v.reduced, target)) for v in vectors if v.language != child]
    ranked.sort(key=lambda r: (-r[1], r[0]))
    return ranked


def load_wals(path, n_features: int = N_WALS_FEATURES) -> list[TypologyVector]:
    """``language<TAB>f1<TAB>...<TAB>f102``; empty cells are missing."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").split("\n")
    except (OSError, UnicodeDecodeError) as e:
        raise FormatError(f"cannot read {path}: {e}") from e
    out = []
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\r")
        if not line or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != n_features + 1:
            raise FormatError(f"{path}:{lineno}: expected language + {n_features} features, "
                              f"got {len(cols) - 1}")
        try:
            raw = np.array([float(c) if c.strip() else math.nan for c in cols[1:]])
        except ValueError as e:
            raise FormatError(f"{path}:{lineno}: non-numeric feature") from e
        out.append(TypologyVector(cols[0], raw))
    return out


def save_projection(proj: TypologyProjection, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"#features={proj.components.shape[0]}\n")
        f.write(f"#components={proj.components.shape[1]}\n")
        f.write("fill\t" + "\t".join(f"{x:.17g}" for x in proj.fill) + "\n")
        f.write("mean\t" + "\t".join(f"{x:.17g}" for x in proj.mean) + "\n")
        for k in range(proj.components.shape[1]):
            f.write(f"pc{k + 1}\t" + "\t".join(f"{x:.17g}" for x in proj.components[:, k]) + "\n")

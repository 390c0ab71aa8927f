"""Command-line front end.

    cipherpos cluster   text.txt -o clusters.tsv
    cipherpos train-lm  parent1.conllu [parent2.conllu ...] -o lm.tsv
    cipherpos ground    clusters.tsv child.txt PARENT... -o bundle/ --mode avg
    cipherpos tag       bundle/ child.txt -o tagged.tsv
    cipherpos eval      tagged.tsv gold.conllu [--m2o clusters.tsv]
    cipherpos typology  wals.tsv --child en

Exit status: 0 on success, 2 for bad input, 3 when an internal check fails.
"""

from __future__ import annotations

import argparse
import logging
import sys
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .brown import DEFAULT_K, assign_clusters, load_clusters, save_clusters, train_brown
from .cipher import DEFAULT_MAX_ITER, DEFAULT_RESTARTS, DEFAULT_TOL
from .corpus import (TaggedCorpus, extract_tag_sequences, load_conllu, load_plaintext,
                     load_tagged_tsv, write_tagged_tsv)
from .errors import FormatError, InvariantError
from .evaluation import many_to_one, tag_accuracy, write_report
from .grounder import (GroundedTagger, build_cipher_avg, build_single_parent, fit_projection,
                       load_bundle, load_wals, save_bundle, save_projection, tag,
                       typology_similarity)
from .poslm import DEFAULT_ALPHA, DEFAULT_ORDER, concat_train, load_lm, save_lm, train_pos_lm

LOG = logging.getLogger("cipherpos")

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 2, 3


@dataclass
class RunConfig:
    seed: int = 42
    clusters: int = DEFAULT_K
    restarts: int = DEFAULT_RESTARTS
    max_iterations: int = DEFAULT_MAX_ITER
    tol: float = DEFAULT_TOL
    alpha: float = DEFAULT_ALPHA
    order: int = DEFAULT_ORDER
    workers: int = 1

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        d = cls()
        return cls(seed=args.seed,
                   clusters=getattr(args, "clusters", d.clusters),
                   restarts=getattr(args, "restarts", d.restarts),
                   max_iterations=getattr(args, "iters", d.max_iterations),
                   tol=getattr(args, "tol", d.tol),
                   alpha=getattr(args, "alpha", d.alpha),
                   order=getattr(args, "order", d.order),
                   workers=getattr(args, "workers", d.workers))


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            yield f


def _parent_name(arg: str) -> tuple[str, str]:
    if "=" in arg and not Path(arg).exists():
        name, path = arg.split("=", 1)
        return name, path
    return Path(arg).stem, arg


def _is_lm_file(path) -> bool:
    try:
        with open(path, encoding="utf-8") as f:
            return f.readline().startswith("#order=")
    except (OSError, UnicodeDecodeError):
        return False


def _check_tagger(tagger: GroundedTagger) -> None:
    probs = tagger.table.probs
    if (probs < 0).any() or not np.allclose(probs.sum(axis=1), 1.0, atol=1e-9, rtol=0):
        raise InvariantError("cipher table rows are not stochastic")


def cmd_cluster(args) -> None:
    cfg = RunConfig.from_args(args)
    corpus = load_plaintext(args.input, lowercase=args.lowercase)
    clustering = train_brown(corpus, cfg.clusters, args.min_count)
    ids = set(clustering.assignment.values())
    if not ids <= set(range(clustering.K)):
        raise InvariantError("cluster IDs out of range")
    save_clusters(clustering, args.output,
                  {"seed": cfg.seed, "clusters": cfg.clusters, "min_count": args.min_count})


def cmd_train_lm(args) -> None:
    cfg = RunConfig.from_args(args)
    parents = [extract_tag_sequences(load_conllu(p)) for p in args.inputs]
    if len(parents) == 1:
        lm = train_pos_lm(parents[0], cfg.order, cfg.alpha)
    else:
        lm = concat_train(parents, cfg.order, cfg.alpha)
    save_lm(lm, args.output, {"seed": cfg.seed})


def cmd_ground(args) -> None:
    cfg = RunConfig.from_args(args)
    clustering = load_clusters(args.clusters_file)
    child = load_plaintext(args.text, lowercase=args.lowercase)
    ids = assign_clusters(child, clustering)
    parents = [_parent_name(p) for p in args.parents]
    common = dict(n_restarts=cfg.restarts, master_seed=cfg.seed,
                  max_iterations=cfg.max_iterations, tol=cfg.tol, workers=cfg.workers)
    if args.mode == "single":
        if len(parents) != 1:
            raise FormatError("--mode single takes exactly one parent")
        name, path = parents[0]
        if _is_lm_file(path):
            lm = load_lm(path)
        else:
            lm = train_pos_lm(extract_tag_sequences(load_conllu(path)), cfg.order, cfg.alpha)
        tagger = build_single_parent(ids, lm, clustering, name, **common)
    else:
        if len(parents) < 2:
            raise FormatError("--mode avg needs at least two parent CoNLL-U files")
        corpora = []
        for name, path in parents:
            if _is_lm_file(path):
                raise FormatError(f"{path}: --mode avg needs tagged corpora, not LM files")
            corpora.append((name, extract_tag_sequences(load_conllu(path))))
        tagger = build_cipher_avg(ids, corpora, clustering, cfg.order, cfg.alpha, **common)
    _check_tagger(tagger)
    save_bundle(tagger, args.output, {"seed": cfg.seed})


def cmd_tag(args) -> None:
    tagger = load_bundle(args.bundle)
    text = Path(args.text)
    if text.is_file() and not text.read_bytes().strip():
        tagged = TaggedCorpus([])
    else:
        tagged = tag(tagger, load_plaintext(text, lowercase=args.lowercase))
    with _output(args.output) as f:
        write_tagged_tsv(tagged, f, {"seed": args.seed})


def cmd_eval(args) -> None:
    predicted = load_tagged_tsv(args.predicted)
    gold = load_conllu(args.gold)
    report = tag_accuracy(predicted, gold, check_words=True)
    if args.m2o:
        clustering = load_clusters(args.m2o)
        ids = [[clustering.cluster_of(w) for w in sent] for sent in gold.words()]
        report.many_to_one = many_to_one(ids, gold)[1]
    with _output(args.output) as f:
        write_report(report, f, {"seed": args.seed})


def cmd_typology(args) -> None:
    vectors = load_wals(args.wals)
    ranking = typology_similarity(vectors, args.child)
    with _output(args.output) as f:
        f.write(f"#seed={args.seed}\n#child={args.child}\n")
        for rank, (lang, cos) in enumerate(ranking, start=1):
            f.write(f"{rank}\t{lang}\t{cos:.17g}\n")
    if args.projection:
        save_projection(fit_projection(np.stack([v.raw for v in vectors])), args.projection)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cipherpos", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=42)
        sp.add_argument("-o", "--output", default=None)

    sp = sub.add_parser("cluster", help="Brown-cluster a plaintext corpus")
    sp.add_argument("input")
    common(sp)
    sp.add_argument("--clusters", type=int, default=DEFAULT_K)
    sp.add_argument("--min-count", type=int, default=1)
    sp.add_argument("--lowercase", action="store_true")
    sp.set_defaults(func=cmd_cluster, needs_output=True)

    sp = sub.add_parser("train-lm", help="train a tag LM (several files: concatenated)")
    sp.add_argument("inputs", nargs="+")
    common(sp)
    sp.add_argument("--order", type=int, default=DEFAULT_ORDER)
    sp.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    sp.set_defaults(func=cmd_train_lm, needs_output=True)

    sp = sub.add_parser("ground", help="decipher clusters into tags, write a tagger bundle")
    sp.add_argument("clusters_file")
    sp.add_argument("text")
    sp.add_argument("parents", nargs="+", help="CoNLL-U or LM files, optionally name=path")
    common(sp)
    sp.add_argument("--mode", choices=["single", "avg"], default="avg")
    sp.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS)
    sp.add_argument("--iters", type=int, default=DEFAULT_MAX_ITER)
    sp.add_argument("--tol", type=float, default=DEFAULT_TOL)
    sp.add_argument("--order", type=int, default=DEFAULT_ORDER)
    sp.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--lowercase", action="store_true")
    sp.set_defaults(func=cmd_ground, needs_output=True)

    sp = sub.add_parser("tag", help="tag plaintext with a bundle")
    sp.add_argument("bundle")
    sp.add_argument("text")
    common(sp)
    sp.add_argument("--lowercase", action="store_true")
    sp.set_defaults(func=cmd_tag, needs_output=False)

    sp = sub.add_parser("eval", help="score tagged output against CoNLL-U gold")
    sp.add_argument("predicted")
    sp.add_argument("gold")
    common(sp)
    sp.add_argument("--m2o", metavar="CLUSTERS_TSV", default=None)
    sp.set_defaults(func=cmd_eval, needs_output=False)

    sp = sub.add_parser("typology", help="rank languages by WALS cosine similarity")
    sp.add_argument("wals")
    common(sp)
    sp.add_argument("--child", required=True)
    sp.add_argument("--projection", default=None, help="also write the PCA projection here")
    sp.set_defaults(func=cmd_typology, needs_output=False)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    if args.needs_output and not args.output:
        parser.error(f"{args.command}: -o/--output is required")
    try:
        args.func(args)
    except InvariantError as e:
        print(f"cipherpos: internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except (FormatError, OSError, ValueError, KeyError) as e:
        print(f"cipherpos: {e}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Tagging metrics: accuracy, many-to-one, per-tag P/R/F1, pooled correlation."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from .corpus import TaggedCorpus
from .errors import FormatError


@dataclass
class EvalReport:
    accuracy: float
    n_tokens: int
    per_tag: dict[str, tuple[float, float, float]] = field(default_factory=dict)
    confusion: dict[str, Counter] = field(default_factory=dict)   # gold -> predicted -> n
    many_to_one: float | None = None

    @property
    def tags(self) -> list[str]:
        seen = set(self.confusion)
        for row in self.confusion.values():
            seen.update(row)
        return sorted(seen)


def _check_shapes(a, b, what="predicted"):
    if len(a) != len(b):
        raise FormatError(f"{what} has {len(a)} sentences, gold has {len(b)}")
    for i, (x, y) in enumerate(zip(a, b)):
        if len(x) != len(y):
            raise FormatError(f"sentence {i}: {what} has {len(x)} tokens, gold has {len(y)}")


def many_to_one(cluster_corpus, gold: TaggedCorpus) -> tuple[dict[int, str], float]:
    """Map each cluster to its most frequent gold tag (ties: smallest tag)."""
    gold_tags = gold.tags()
    _check_shapes(cluster_corpus, gold_tags, "cluster corpus")
    co: dict[int, Counter] = defaultdict(Counter)
    for cs, ts in zip(cluster_corpus, gold_tags):
        for c, t in zip(cs, ts):
            co[c][t] += 1
    mapping = {c: min(cnt, key=lambda t: (-cnt[t], t)) for c, cnt in co.items()}
    n = sum(len(s) for s in gold_tags)
    if n == 0:
        return mapping, 0.0
    correct = sum(co[c][t] for c, t in mapping.items())
    return mapping, correct / n


def tag_accuracy(predicted: TaggedCorpus, gold: TaggedCorpus,
                 check_words: bool = False) -> EvalReport:
    _check_shapes(predicted.sentences, gold.sentences)
    confusion: dict[str, Counter] = defaultdict(Counter)
    n = correct = 0
    for i, (ps, gs) in enumerate(zip(predicted.sentences, gold.sentences)):
        for (pw, pt), (gw, gt) in zip(ps, gs):
            if check_words and pw != gw:
                raise FormatError(f"sentence {i}: word {pw!r} vs gold {gw!r}")
            confusion[gt][pt] += 1
            correct += pt == gt
            n += 1
    report = EvalReport(correct / n if n else 0.0, n, confusion=dict(confusion))
    for t in report.tags:
        report.per_tag[t] = _prf(confusion, t)
    return report


def _prf(confusion, tag):
    tp = confusion.get(tag, Counter())[tag]
    n_pred = sum(row[tag] for row in confusion.values())
    n_gold = sum(confusion.get(tag, Counter()).values())
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def per_tag_prf(predicted: TaggedCorpus, gold: TaggedCorpus, tag: str) -> tuple[float, float, float]:
    return tag_accuracy(predicted, gold).per_tag.get(tag, (0.0, 0.0, 0.0))


def znorm_pearson(points) -> float:
    """Pearson r of pooled (x, y) after z-normalising x within each group.

    ``points`` is an iterable of (group, x, y).
    """
    groups: dict[object, list[tuple[float, float]]] = defaultdict(list)
    for g, x, y in points:
        groups[g].append((float(x), float(y)))
    xs, ys = [], []
    for g, pts in groups.items():
        if len(pts) < 2:
            raise ValueError(f"group {g!r} has fewer than 2 points")
        x = np.array([p[0] for p in pts])
        sd = x.std()
        if not sd > 0:
            raise ValueError(f"group {g!r} has zero variance in x")
        xs.append((x - x.mean()) / sd)
        ys.append(np.array([p[1] for p in pts]))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    if x.size < 2:
        raise ValueError("need at least 2 points")
    return pearson(x, y)


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float) - np.mean(x)
    y = np.asarray(y, dtype=float) - np.mean(y)
    den = math.sqrt(float(x @ x) * float(y @ y))
    if den == 0:
        raise ValueError("zero variance")
    return max(-1.0, min(1.0, float(x @ y) / den))


def _pct(x: float) -> str:
    return f"{100 * x:.2f}"


def write_report(report: EvalReport, f, headers: dict | None = None) -> None:
    """TSV with SUMMARY, PER_TAG and CONFUSION blocks; rates in percentage points."""
    for key, value in (headers or {}).items():
        f.write(f"#{key}={value}\n")
    f.write("#section=SUMMARY\n")
    f.write(f"accuracy\t{_pct(report.accuracy)}\n")
    if report.many_to_one is not None:
        f.write(f"many_to_one\t{_pct(report.many_to_one)}\n")
    f.write(f"n_tokens\t{report.n_tokens}\n")
    f.write("\n#section=PER_TAG\n")
    f.write("tag\tprecision\trecall\tf1\n")
    for t in sorted(report.per_tag):
        p, r, f1 = report.per_tag[t]
        f.write(f"{t}\t{_pct(p)}\t{_pct(r)}\t{_pct(f1)}\n")
    f.write("\n#section=CONFUSION\n")
    tags = report.tags
    f.write("gold\\pred\t" + "\t".join(tags) + "\n")
    for g in tags:
        row = report.confusion.get(g, Counter())
        f.write(g + "\t" + "\t".join(str(row[p]) for p in tags) + "\n")


def read_report(path) -> dict[str, list[list[str]]]:
    """Split a report file into {section: rows}."""
    sections: dict[str, list[list[str]]] = {}
    current = None
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if line.startswith("#section="):
                current = line.split("=", 1)[1]
                sections[current] = []
            elif line and not line.startswith("#") and current is not None:
                sections[current].append(line.split("\t"))
    return sections

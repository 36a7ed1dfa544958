"""Segmentation, dependency and intra-word structure metrics."""

from __future__ import annotations

from collections import Counter, defaultdict
from typing import Iterable, Literal, Optional, Sequence

from .core import Segmentation, WordTree

DEFAULT_PUNCT = frozenset({"punct", "P"})


def _prf(match: int, n_gold: int, n_pred: int) -> tuple[float, float, float]:
    p = match / n_pred if n_pred else 0.0
    r = match / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def seg_counts(gold: Segmentation, pred: Segmentation) -> tuple[int, int, int]:
    if gold.n != pred.n:
        raise ValueError(f"length mismatch: {gold.n} vs {pred.n} characters")
    return len(set(gold.spans) & set(pred.spans)), len(gold.spans), len(pred.spans)


def seg_f1(gold: Segmentation, pred: Segmentation) -> tuple[float, float, float]:
    return _prf(*seg_counts(gold, pred))


def corpus_seg_f1(golds: Sequence[Segmentation], preds: Sequence[Segmentation]):
    totals = [0, 0, 0]
    for g, p in zip(golds, preds, strict=True):
        for k, v in enumerate(seg_counts(g, p)):
            totals[k] += v
    return _prf(*totals)


def _arc_bag(tree: WordTree, labeled: bool, punct: frozenset) -> Counter:
    bag = Counter()
    for mod, head, label in tree.span_arcs():
        if label in punct:
            continue
        bag[(mod, head, label) if labeled else (mod, head)] += 1
    return bag


def dep_counts(gold: WordTree, pred: WordTree, labeled: bool = False,
               punct_labels: Iterable[str] = DEFAULT_PUNCT) -> tuple[int, int, int]:
    punct = frozenset(punct_labels)
    g = _arc_bag(gold, labeled, punct)
    p = _arc_bag(pred, labeled, punct)
    return sum((g & p).values()), sum(g.values()), sum(p.values())


def dep_f1(gold: WordTree, pred: WordTree, labeled: bool = False,
           punct_labels: Iterable[str] = DEFAULT_PUNCT) -> float:
    """Word-level arc F1; an arc counts only if both word spans are right."""
    return _prf(*dep_counts(gold, pred, labeled, punct_labels))[2]


def corpus_dep_f1(golds: Sequence[WordTree], preds: Sequence[WordTree], labeled: bool = False,
                  punct_labels: Iterable[str] = DEFAULT_PUNCT) -> float:
    totals = [0, 0, 0]
    for g, p in zip(golds, preds, strict=True):
        for k, v in enumerate(dep_counts(g, p, labeled, punct_labels)):
            totals[k] += v
    return _prf(*totals)[2]


def attachment_counts(gold: WordTree, pred: WordTree,
                      punct_labels: Iterable[str] = DEFAULT_PUNCT) -> tuple[int, int, int]:
    if gold.segmentation != pred.segmentation:
        raise ValueError("attachment scores need identical segmentations")
    punct = frozenset(punct_labels)
    total = uas = las = 0
    for w in range(1, gold.n_words + 1):
        if gold.labels[w] in punct:
            continue
        total += 1
        if gold.heads[w] == pred.heads[w]:
            uas += 1
            las += gold.labels[w] == pred.labels[w]
    return uas, las, total


def attachment_scores(gold: WordTree, pred: WordTree,
                      punct_labels: Iterable[str] = DEFAULT_PUNCT) -> tuple[float, float]:
    uas, las, total = attachment_counts(gold, pred, punct_labels)
    return (uas / total, las / total) if total else (0.0, 0.0)


def complete_match(gold: WordTree, pred: WordTree,
                   punct_labels: Iterable[str] = DEFAULT_PUNCT) -> bool:
    """Same segmentation and every non-punctuation arc correct (unlabeled)."""
    if gold.segmentation != pred.segmentation:
        return False
    match, n_gold, n_pred = dep_counts(gold, pred, False, punct_labels)
    return match == n_gold == n_pred


def evaluate_corpus(golds: Sequence[WordTree], preds: Sequence[WordTree],
                    punct_labels: Iterable[str] = DEFAULT_PUNCT) -> dict:
    """Corpus-level F1_seg, UF, LF, complete match and, if segmentation allows, UAS/LAS."""
    if len(golds) != len(preds):
        raise ValueError(f"sentence count mismatch: {len(golds)} gold vs {len(preds)} predicted")
    punct = frozenset(punct_labels)
    out = {
        "sentences": len(golds),
        "F1_seg": corpus_seg_f1([g.segmentation for g in golds], [p.segmentation for p in preds])[2],
        "UF": corpus_dep_f1(golds, preds, False, punct),
        "LF": corpus_dep_f1(golds, preds, True, punct),
    }
    if all(g.segmentation == p.segmentation for g, p in zip(golds, preds)):
        uas = las = total = 0
        for g, p in zip(golds, preds):
            a, b, c = attachment_counts(g, p, punct)
            uas, las, total = uas + a, las + b, total + c
        out["UAS"] = uas / total if total else 0.0
        out["LAS"] = las / total if total else 0.0
    matches = sum(complete_match(g, p, punct) for g, p in zip(golds, preds))
    out["CM"] = 100.0 * matches / len(golds) if golds else 0.0
    return out


Shape = tuple[int, ...]


def structure_distribution(structures: Iterable[Shape]) -> dict[int, dict[Shape, float]]:
    """Percentage of each intra-word shape per word length (length 1 excluded)."""
    counts: dict[int, Counter] = defaultdict(Counter)
    for shape in structures:
        if len(shape) > 1:
            counts[len(shape)][tuple(shape)] += 1
    out = {}
    for length in sorted(counts):
        total = sum(counts[length].values())
        ranked = sorted(counts[length].items(), key=lambda kv: (-kv[1], kv[0]))
        out[length] = {shape: 100.0 * c / total for shape, c in ranked}
    return out


def structure_cm(pred_runs: Sequence[Sequence[Optional[Shape]]], gold: Sequence[Optional[Shape]],
                 mapping: Literal["one-to-one", "many-to-one"] = "one-to-one") -> float:
    """Complete-match percentage of intra-word structures against annotations.

    ``gold[i]`` is None for words without an annotation; those are skipped.
    """
    if not pred_runs:
        raise ValueError("need at least one run")
    idx = [i for i, g in enumerate(gold) if g is not None]
    if not idx:
        return 0.0
    for run in pred_runs:
        if len(run) != len(gold):
            raise ValueError("run length differs from gold")
    if mapping == "one-to-one":
        rates = [sum(run[i] == gold[i] for i in idx) / len(idx) for run in pred_runs]
        return 100.0 * sum(rates) / len(rates)
    if mapping == "many-to-one":
        hits = sum(any(run[i] == gold[i] for run in pred_runs) for i in idx)
        return 100.0 * hits / len(idx)
    raise ValueError(f"unknown mapping {mapping!r}")


def format_shape(shape: Shape) -> str:
    return "-".join(str(h) for h in shape)


def format_report(values: dict) -> str:
    lines = []
    for key, value in values.items():
        if isinstance(value, float):
            value = f"{value:.4f}"
        lines.append(f"{key}: {value}")
    return "\n".join(lines) + "\n"

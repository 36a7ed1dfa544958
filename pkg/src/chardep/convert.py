"""Conversions between word-level trees, character-level trees and forests."""

from __future__ import annotations

from typing import Literal, Mapping, Optional, Sequence

import numpy as np

from .core import (INTRA, CharTree, ForestSpec, IllegalStructure, LabelSet, Segmentation,
                   WordTree, is_projective, is_tree)

Direction = Literal["leftward", "rightward"]


def word_tree_to_forest(gold: WordTree) -> ForestSpec:
    return ForestSpec(gold.segmentation, gold.heads)


def gold_char_labels(heads: Sequence[int], gold: WordTree, intra: str = INTRA) -> CharTree:
    """Label a compatible char tree: INTRA inside words, the gold word label across words."""
    wid = gold.segmentation.word_ids()
    labels: list[Optional[str]] = [None]
    for m in range(1, len(heads)):
        h = heads[m]
        if h != 0 and wid[h] == wid[m]:
            labels.append(intra)
        else:
            labels.append(gold.labels[wid[m]])
    return CharTree(tuple(heads), tuple(labels))


def _components(tree: CharTree, intra: str) -> list[int]:
    """Component id per position after joining INTRA arcs (ROOT is its own)."""
    parent = list(range(tree.n + 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for m in range(1, tree.n + 1):
        if tree.labels[m] == intra:
            parent[find(m)] = find(tree.heads[m])
    return [find(x) for x in range(tree.n + 1)]


def recover_word_tree(tree: CharTree, intra: str = INTRA) -> WordTree:
    """Collapse INTRA-connected components of ``tree`` into words."""
    if tree.labels is None:
        raise ValueError("recovery needs a labeled char tree")
    n = tree.n
    root_intra = [(0, m) for m in range(1, n + 1)
                  if tree.heads[m] == 0 and tree.labels[m] == intra]
    if root_intra:
        raise IllegalStructure("ROOT attaches through an INTRA arc", root_intra)
    comp = _components(tree, intra)

    bad = []
    for m in range(1, n + 1):
        h = tree.heads[m]
        if tree.labels[m] == intra:
            if any(comp[x] != comp[m] for x in range(min(h, m) + 1, max(h, m))):
                bad.append((h, m))
    if bad:
        raise IllegalStructure(f"INTRA arcs span characters of other words: {bad}", bad)

    spans, wid = [], [0] * (n + 1)
    begin = 1
    for x in range(1, n + 1):
        if x == n or comp[x + 1] != comp[x]:
            spans.append((begin, x))
            for y in range(begin, x + 1):
                wid[y] = len(spans)
            begin = x + 1
    seg = Segmentation(tuple(spans))
    heads = [-1] * (seg.n_words + 1)
    labels: list[Optional[str]] = [None] * (seg.n_words + 1)
    for m in range(1, n + 1):
        if tree.labels[m] != intra:
            w = wid[m]
            heads[w] = wid[tree.heads[m]]
            labels[w] = tree.labels[m]
    return WordTree(seg, tuple(heads), tuple(labels))


def recover_with_fallback(tree: CharTree, label_scores: Optional[np.ndarray] = None,
                          labels: Optional[LabelSet] = None, default_label: str = "dep",
                          intra: str = INTRA) -> WordTree:
    """Like :func:`recover_word_tree`, relabeling offending INTRA arcs until it succeeds.

    One arc is relabeled per retry, outermost (widest, then leftmost) first.
    The new label is the best non-INTRA label from ``label_scores`` when given.
    """
    current = tree
    while True:
        try:
            return recover_word_tree(current, intra)
        except IllegalStructure as err:
            h, m = min(err.arcs, key=lambda a: (-abs(a[0] - a[1]), min(a)))
            new = list(current.labels)
            new[m] = _best_syntactic(label_scores, labels, h, m, default_label)
            current = current.with_labels(new)


def _best_syntactic(label_scores, labels, h, m, default_label):
    if label_scores is not None and labels is not None:
        row = np.asarray(label_scores[h, m], dtype=np.float64)
        best = 1 + int(np.argmax(row[1:]))
        return labels[best]
    if h == 0 and labels is not None:
        return labels.root
    return default_label


def pseudo_structure(span: tuple[int, int], direction: Direction) -> tuple[frozenset, int]:
    """Chain structure over a word: ``(intra arcs as (head, mod), root char)``."""
    begin, end = span
    if begin > end:
        raise ValueError(f"bad span {span}")
    if direction == "leftward":
        return frozenset((i + 1, i) for i in range(begin, end)), end
    if direction == "rightward":
        return frozenset((i, i + 1) for i in range(begin, end)), begin
    raise ValueError(f"unknown direction {direction!r}")


def _check_structure(arcs: frozenset, span: tuple[int, int]) -> None:
    begin, end = span
    local = [-1] + [0] * (end - begin + 1)
    seen = set()
    for h, m in arcs:
        if not (begin <= h <= end and begin <= m <= end) or h == m:
            raise ValueError(f"arc {(h, m)} leaves word span {span}")
        if m in seen:
            raise ValueError(f"character {m} has two heads in fixed structure")
        seen.add(m)
        local[m - begin + 1] = h - begin + 1
    if len(arcs) != end - begin or not (is_tree(local) and is_projective(local)):
        raise ValueError(f"fixed structure over {span} is not a projective single-root tree")


def narrow_forest(spec: ForestSpec, fixed_structures: Mapping[int, frozenset]) -> ForestSpec:
    """Pin the intra-word structure of some words; other words stay latent."""
    seg = spec.segmentation
    fixed = dict(spec.fixed)
    for w, arcs in fixed_structures.items():
        if not 1 <= w <= seg.n_words:
            raise ValueError(f"no word {w}")
        arcs = frozenset(arcs)
        _check_structure(arcs, seg.span(w))
        fixed[w] = arcs
    return ForestSpec(seg, spec.whead, fixed)


def pseudo_forest(gold: WordTree, direction: Direction) -> ForestSpec:
    seg = gold.segmentation
    fixed = {w: pseudo_structure(seg.span(w), direction)[0] for w in range(1, seg.n_words + 1)}
    return narrow_forest(word_tree_to_forest(gold), fixed)


def structure_shape(heads: Sequence[int], span: tuple[int, int]) -> tuple[int, ...]:
    """Relative 1-based heads inside a word; 0 marks the word's root character."""
    begin, end = span
    return tuple(heads[m] - begin + 1 if begin <= heads[m] <= end else 0
                 for m in range(begin, end + 1))


def shape_arcs(shape: Sequence[int], begin: int) -> frozenset:
    return frozenset((begin + h - 1, begin + i) for i, h in enumerate(shape) if h)


def intra_structures(heads: Sequence[int], seg: Segmentation) -> list[tuple[int, ...]]:
    return [structure_shape(heads, span) for span in seg.spans]

"""Readers and writers for word-level corpora, char trees and intra-word annotations.

Formats (UTF-8, tab-separated, blank line after every sentence):

* word corpus: 10 CoNLL-X columns ``id form lemma cpos pos feats head deprel _ _``
* char trees: 4 columns ``id char head label``
* annotations: ``form<TAB>heads`` for every occurrence of a word type, or
  ``sent<TAB>word<TAB>form<TAB>heads`` for one occurrence (1-based indices,
  overrides the type entry).  ``heads`` lists 1-based in-word heads with 0 for
  the word's root character, e.g. ``2,0``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

from .core import CharSentence, CharTree, Segmentation, WordTree, is_projective, is_tree


class DataError(ValueError):
    def __init__(self, path, line: Optional[int], message: str):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line


@dataclass(frozen=True)
class Example:
    sentence: CharSentence
    tree: WordTree
    projective: bool = True

    @property
    def forms(self) -> list[str]:
        return self.tree.segmentation.words(self.sentence)


def _blocks(path) -> Iterator[list[tuple[int, list[str]]]]:
    block: list[tuple[int, list[str]]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                if block:
                    yield block
                block = []
                continue
            if line.startswith("#") and not block:
                continue
            block.append((lineno, line.split("\t")))
    if block:
        yield block


def _int(path, lineno, value, what):
    try:
        return int(value)
    except ValueError:
        raise DataError(path, lineno, f"non-integer {what} {value!r}") from None


def _parse_rows(path, block, ncols):
    ids, rows = [], []
    for lineno, cols in block:
        if len(cols) != ncols:
            raise DataError(path, lineno, f"expected {ncols} columns, got {len(cols)}")
        ids.append(_int(path, lineno, cols[0], "id"))
        rows.append((lineno, cols))
    if ids != list(range(1, len(ids) + 1)):
        raise DataError(path, block[0][0], "ids must run 1..k")
    heads = [-1]
    for lineno, cols in rows:
        head = _int(path, lineno, cols[2 if ncols == 4 else 6], "head")
        if not 0 <= head <= len(rows):
            raise DataError(path, lineno, f"head {head} out of range")
        heads.append(head)
    return rows, heads


def read_conll(path) -> list[Example]:
    """Word-level corpus; non-projective sentences are kept but flagged."""
    out = []
    for block in _blocks(path):
        rows, heads = _parse_rows(path, block, 10)
        forms = []
        for lineno, cols in rows:
            if not cols[1] or any(c.isspace() for c in cols[1]):
                raise DataError(path, lineno, f"bad form {cols[1]!r}")
            forms.append(cols[1])
        labels = [None] + [cols[7] for _, cols in rows]
        if not is_tree(heads):
            raise DataError(path, block[0][0], "heads do not form a single-rooted tree")
        seg = Segmentation.from_lengths(len(f) for f in forms)
        tree = WordTree(seg, tuple(heads), tuple(labels))
        out.append(Example(CharSentence.from_text("".join(forms)), tree, is_projective(heads)))
    return out


def format_conll(sentence: CharSentence, tree: WordTree) -> str:
    forms = tree.segmentation.words(sentence)
    lines = [f"{w}\t{form}\t_\t_\t_\t_\t{tree.heads[w]}\t{tree.labels[w] or '_'}\t_\t_"
             for w, form in enumerate(forms, 1)]
    return "\n".join(lines) + "\n\n"


def write_conll(path, examples: Iterable[tuple[CharSentence, WordTree]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for sentence, tree in examples:
            fh.write(format_conll(sentence, tree))


def format_char_tree(sentence: CharSentence, tree: CharTree) -> str:
    if sentence.n != tree.n:
        raise ValueError("sentence and tree lengths differ")
    labels = tree.labels or (None,) * (tree.n + 1)
    lines = [f"{m}\t{sentence[m]}\t{tree.heads[m]}\t{labels[m] or '_'}"
             for m in range(1, tree.n + 1)]
    return "\n".join(lines) + "\n\n"


def write_char_tree(path, trees: Iterable[tuple[CharSentence, CharTree]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for sentence, tree in trees:
            fh.write(format_char_tree(sentence, tree))


def read_char_tree(path) -> list[tuple[CharSentence, CharTree]]:
    out = []
    for block in _blocks(path):
        rows, heads = _parse_rows(path, block, 4)
        chars = []
        for lineno, cols in rows:
            if len(cols[1]) != 1:
                raise DataError(path, lineno, f"not a single character: {cols[1]!r}")
            chars.append(cols[1])
        labels = [None] + [None if cols[3] == "_" else cols[3] for _, cols in rows]
        out.append((CharSentence(tuple(chars)), CharTree(tuple(heads), tuple(labels))))
    return out


# ---------------------------------------------------------------------------
# intra-word annotations


@dataclass
class Annotations:
    types: dict[str, tuple[int, ...]] = field(default_factory=dict)
    occurrences: dict[tuple[int, int], tuple[str, tuple[int, ...]]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.types) + len(self.occurrences)

    def lookup(self, sent: int, word: int, form: str) -> Optional[tuple[int, ...]]:
        hit = self.occurrences.get((sent, word))
        if hit is not None and hit[0] == form:
            return hit[1]
        return self.types.get(form)


def parse_shape(text: str) -> tuple[int, ...]:
    text = text.strip()
    if text.startswith("head="):
        text = text[5:]
    text = text.strip("[]() ")
    return tuple(int(x) for x in text.split(","))


def check_shape(shape: Sequence[int], length: int) -> None:
    if len(shape) != length:
        raise ValueError(f"{len(shape)} heads for a word of length {length}")
    heads = (-1, *shape)
    if sum(1 for h in shape if h == 0) != 1:
        raise ValueError("annotation must have exactly one root")
    if not is_tree(heads):
        raise ValueError("annotation is cyclic or out of range")
    if not is_projective(heads):
        raise ValueError("annotation is non-projective")


def read_intra_annotations(path) -> Annotations:
    ann = Annotations()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) not in (2, 4):
                raise DataError(path, lineno, f"expected 2 or 4 columns, got {len(cols)}")
            form = cols[-2]
            try:
                shape = parse_shape(cols[-1])
                check_shape(shape, len(form))
            except ValueError as err:
                raise DataError(path, lineno, str(err)) from None
            if len(cols) == 2:
                ann.types[form] = shape
            else:
                key = (_int(path, lineno, cols[0], "sentence index"),
                       _int(path, lineno, cols[1], "word index"))
                ann.occurrences[key] = (form, shape)
    return ann


def ensure_parent(path) -> None:
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)

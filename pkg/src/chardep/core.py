"""Shared domain types for character-level dependency parsing.

Position 0 is always the virtual ROOT token, both for characters and for
words.  Head arrays therefore have length ``n + 1`` and ``heads[0]`` is the
placeholder ``-1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

#: Semiring zero used for masked scores.  Anything below half of it is
#: treated as "no derivation".
MASK_VALUE = -1e9

INTRA = "INTRA"
ROOT_LABEL = "root"
ROOT_TOKEN = "<root>"


#: ``s[h, m]`` scores the arc h -> m; shape (n + 1, n + 1).
ArcScores = np.ndarray
#: ``t[h, m, l]`` scores label l on arc h -> m; shape (n + 1, n + 1, |labels|).
LabelScores = np.ndarray


def is_masked(value: float) -> bool:
    return value <= MASK_VALUE / 2


class IllegalStructure(ValueError):
    """A character tree cannot be collapsed into a word tree."""

    def __init__(self, message: str, arcs: Sequence[tuple[int, int]] = ()):
        super().__init__(message)
        self.arcs = tuple(arcs)


class EmptyForestError(ValueError):
    """No tree satisfies the requested constraints."""

    def __init__(self, message: str = "empty forest", value: float = MASK_VALUE):
        super().__init__(message)
        self.value = value


class NoValidTreeError(EmptyForestError):
    """The score table masks out every tree."""


# ---------------------------------------------------------------------------
# tree predicates over plain head arrays


def _normalize_heads(heads: Sequence[int]) -> tuple[int, ...]:
    heads = tuple(int(h) for h in heads)
    if not heads:
        raise ValueError("head array must have length n + 1 >= 2")
    return (-1,) + heads[1:]


def is_tree(heads: Sequence[int]) -> bool:
    """True iff ``heads`` encodes a single-rooted tree over positions 1..n."""
    n = len(heads) - 1
    if n < 1:
        return False
    if any(not 0 <= heads[m] <= n or heads[m] == m for m in range(1, n + 1)):
        return False
    if sum(1 for m in range(1, n + 1) if heads[m] == 0) != 1:
        return False
    # every position must reach 0 without revisiting
    state = [0] * (n + 1)  # 0 unvisited, 1 on stack, 2 done
    state[0] = 2
    for start in range(1, n + 1):
        path = []
        node = start
        while state[node] == 0:
            state[node] = 1
            path.append(node)
            node = heads[node]
        if state[node] == 1:
            return False
        for p in path:
            state[p] = 2
    return True


def is_projective(heads: Sequence[int]) -> bool:
    """No two arcs cross when drawn above the sentence (ROOT arcs included)."""
    arcs = [(min(h, m), max(h, m)) for m, h in enumerate(heads) if m > 0]
    for a, (l1, r1) in enumerate(arcs):
        for l2, r2 in arcs[a + 1:]:
            if l1 < l2 < r1 < r2 or l2 < l1 < r2 < r1:
                return False
    return True


def validate_char_tree(tree: "CharTree") -> bool:
    return is_tree(tree.heads) and is_projective(tree.heads)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CharSentence:
    chars: tuple[str, ...]

    def __post_init__(self):
        chars = tuple(self.chars)
        if not chars:
            raise ValueError("a sentence needs at least one character")
        for c in chars:
            if len(c) != 1:
                raise ValueError(f"not a single character: {c!r}")
        object.__setattr__(self, "chars", chars)

    @classmethod
    def from_text(cls, text: str) -> "CharSentence":
        return cls(tuple(text))

    @property
    def n(self) -> int:
        return len(self.chars)

    @property
    def text(self) -> str:
        return "".join(self.chars)

    def __len__(self) -> int:
        return len(self.chars)

    def __getitem__(self, position: int) -> str:
        if position == 0:
            return ROOT_TOKEN
        if not 1 <= position <= self.n:
            raise IndexError(position)
        return self.chars[position - 1]


@dataclass(frozen=True)
class Segmentation:
    """Contiguous word spans ``(begin, end)``, 1-based and inclusive."""

    spans: tuple[tuple[int, int], ...]

    def __post_init__(self):
        spans = tuple((int(b), int(e)) for b, e in self.spans)
        if not spans:
            raise ValueError("empty segmentation")
        expected = 1
        for b, e in spans:
            if b != expected or e < b:
                raise ValueError(f"spans must tile 1..n contiguously, got {spans}")
            expected = e + 1
        object.__setattr__(self, "spans", spans)

    @classmethod
    def from_lengths(cls, lengths: Iterable[int]) -> "Segmentation":
        spans, begin = [], 1
        for length in lengths:
            if length < 1:
                raise ValueError("word lengths must be positive")
            spans.append((begin, begin + length - 1))
            begin += length
        return cls(tuple(spans))

    @classmethod
    def from_bmes(cls, tags: Iterable[str]) -> "Segmentation":
        spans, begin = [], None
        for i, tag in enumerate(tags, 1):
            if tag in ("B", "S"):
                if begin is not None:
                    raise ValueError(f"unterminated word before position {i}")
                begin = i
            elif tag not in ("M", "E") or begin is None:
                raise ValueError(f"invalid BMES tag {tag!r} at position {i}")
            if tag in ("E", "S"):
                if tag == "S" and begin != i:
                    raise ValueError(f"S tag inside a word at position {i}")
                spans.append((begin, i))
                begin = None
        if begin is not None:
            raise ValueError("unterminated word at end of sequence")
        return cls(tuple(spans))

    def to_bmes(self) -> list[str]:
        tags = []
        for b, e in self.spans:
            if b == e:
                tags.append("S")
            else:
                tags.extend(["B"] + ["M"] * (e - b - 1) + ["E"])
        return tags

    @property
    def n(self) -> int:
        return self.spans[-1][1]

    @property
    def n_words(self) -> int:
        return len(self.spans)

    def lengths(self) -> list[int]:
        return [e - b + 1 for b, e in self.spans]

    def word_ids(self) -> np.ndarray:
        """Word index (1-based) of every position; 0 for ROOT."""
        ids = np.zeros(self.n + 1, dtype=np.int64)
        for w, (b, e) in enumerate(self.spans, 1):
            ids[b:e + 1] = w
        return ids

    def span(self, word: int) -> tuple[int, int]:
        if word == 0:
            return (0, 0)
        return self.spans[word - 1]

    def words(self, sentence: CharSentence) -> list[str]:
        return ["".join(sentence.chars[b - 1:e]) for b, e in self.spans]


@dataclass(frozen=True)
class LabelSet:
    """Ordered label inventory.  ``INTRA`` is always id 0."""

    labels: tuple[str, ...]
    root: str = ROOT_LABEL

    def __post_init__(self):
        labels = tuple(self.labels)
        if not labels or labels[0] != INTRA:
            raise ValueError(f"{INTRA} must be the first label")
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate labels")
        if self.root not in labels:
            raise ValueError(f"root label {self.root!r} missing")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_index", {l: i for i, l in enumerate(labels)})

    @classmethod
    def build(cls, labels: Iterable[str], root: str = ROOT_LABEL) -> "LabelSet":
        syntactic = sorted(set(labels) | {root} - {INTRA})
        return cls((INTRA, *syntactic), root=root)

    @property
    def intra(self) -> str:
        return self.labels[0]

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(f"unknown label {label!r}") from None

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self) -> Iterator[str]:
        return iter(self.labels)

    def __contains__(self, label: object) -> bool:
        return label in self._index

    def __getitem__(self, i: int) -> str:
        return self.labels[i]


@dataclass(frozen=True)
class CharTree:
    heads: tuple[int, ...]
    labels: Optional[tuple[Optional[str], ...]] = None

    def __post_init__(self):
        heads = _normalize_heads(self.heads)
        n = len(heads) - 1
        for m in range(1, n + 1):
            if not 0 <= heads[m] <= n:
                raise ValueError(f"head {heads[m]} of position {m} out of range")
        object.__setattr__(self, "heads", heads)
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != n + 1:
                raise ValueError("labels must have length n + 1")
            object.__setattr__(self, "labels", (None,) + labels[1:])

    @property
    def n(self) -> int:
        return len(self.heads) - 1

    def arcs(self) -> list[tuple[int, int]]:
        return [(h, m) for m, h in enumerate(self.heads) if m > 0]

    def with_labels(self, labels: Sequence[Optional[str]]) -> "CharTree":
        return CharTree(self.heads, tuple(labels))


@dataclass(frozen=True)
class WordTree:
    segmentation: Segmentation
    heads: tuple[int, ...]
    labels: tuple[Optional[str], ...]

    def __post_init__(self):
        heads = _normalize_heads(self.heads)
        labels = (None,) + tuple(self.labels)[1:]
        k = self.segmentation.n_words
        if len(heads) != k + 1 or len(labels) != k + 1:
            raise ValueError(f"expected {k + 1} heads/labels for {k} words")
        for w in range(1, k + 1):
            if not 0 <= heads[w] <= k:
                raise ValueError(f"head {heads[w]} of word {w} out of range")
        object.__setattr__(self, "heads", heads)
        object.__setattr__(self, "labels", labels)

    @property
    def n_words(self) -> int:
        return self.segmentation.n_words

    @property
    def whead(self) -> tuple[int, ...]:
        return self.heads

    @property
    def wlabel(self) -> tuple[Optional[str], ...]:
        return self.labels

    def is_valid(self) -> bool:
        return is_tree(self.heads) and is_projective(self.heads)

    def is_projective(self) -> bool:
        return is_projective(self.heads)

    def span_arcs(self) -> list[tuple[tuple[int, int], tuple[int, int], Optional[str]]]:
        """Arcs as ``(modifier span, head span, label)``; ROOT's span is (0, 0)."""
        seg = self.segmentation
        return [(seg.span(w), seg.span(self.heads[w]), self.labels[w])
                for w in range(1, self.n_words + 1)]


@dataclass(frozen=True)
class C2fArcScores:
    """Separate intra-word and inter-word arc score tables."""

    s_intra: np.ndarray
    s_inter: np.ndarray

    def __post_init__(self):
        intra = np.array(self.s_intra, dtype=np.float64)
        inter = np.array(self.s_inter, dtype=np.float64)
        if intra.shape != inter.shape or intra.ndim != 2 or intra.shape[0] != intra.shape[1]:
            raise ValueError("intra and inter tables must be square and of equal size")
        intra[0, :] = MASK_VALUE  # ROOT never heads an intra-word arc
        object.__setattr__(self, "s_intra", intra)
        object.__setattr__(self, "s_inter", inter)

    @property
    def n(self) -> int:
        return self.s_intra.shape[0] - 1


@dataclass(frozen=True)
class ForestSpec:
    """Compatibility constraints induced by a segmentation and word-level heads.

    ``whead`` may be ``None``: then any word-level tree is allowed and only the
    segmentation constrains the character trees (gold-segmentation parsing).
    ``fixed`` maps a word index to a fixed set of intra-word arcs.
    """

    segmentation: Segmentation
    whead: Optional[tuple[int, ...]] = None
    fixed: Mapping[int, frozenset] = field(default_factory=dict)

    def __post_init__(self):
        k = self.segmentation.n_words
        if self.whead is not None:
            whead = _normalize_heads(self.whead)
            if len(whead) != k + 1 or any(not 0 <= h <= k for h in whead[1:]):
                raise ValueError("whead does not match the segmentation")
            object.__setattr__(self, "whead", whead)
        fixed = {int(w): frozenset((int(h), int(m)) for h, m in arcs)
                 for w, arcs in dict(self.fixed).items()}
        object.__setattr__(self, "fixed", MappingProxyType(fixed))
        ids = self.segmentation.word_ids()
        ids.setflags(write=False)
        object.__setattr__(self, "_ids", ids)

    @property
    def n(self) -> int:
        return self.segmentation.n

    @property
    def word_ids(self) -> np.ndarray:
        return self._ids

    def fixed_root(self, word: int) -> Optional[int]:
        arcs = self.fixed.get(word)
        if arcs is None:
            return None
        b, e = self.segmentation.span(word)
        return next(c for c in range(b, e + 1) if c not in {m for _, m in arcs})

    def admissible(self, h: int, m: int) -> bool:
        ids = self._ids
        wm = ids[m]
        if h != 0 and ids[h] == wm:
            arcs = self.fixed.get(int(wm))
            return arcs is None or (h, m) in arcs
        root = self.fixed_root(int(wm))
        if root is not None and m != root:
            return False
        if self.whead is None:
            return True
        return self.whead[wm] == (0 if h == 0 else ids[h])

    def arc_mask(self) -> np.ndarray:
        n = self.n
        mask = np.zeros((n + 1, n + 1), dtype=bool)
        for h in range(n + 1):
            for m in range(1, n + 1):
                if h != m:
                    mask[h, m] = self.admissible(h, m)
        return mask


def arc_admissible(spec: ForestSpec, h: int, m: int) -> bool:
    n = spec.n
    if not (0 <= h <= n and 1 <= m <= n) or h == m:
        raise IndexError(f"arc ({h}, {m}) out of range for n={n}")
    return spec.admissible(h, m)

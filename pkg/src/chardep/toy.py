"""Deterministic template grammar producing a small word-segmented treebank."""

from __future__ import annotations

import numpy as np

from .core import CharSentence, Segmentation, WordTree
from .io import Example

LEXICON = {
    "N": ("上海", "金融业", "北京", "学生", "书", "政府", "经济", "人"),
    "V": ("发展", "喜欢", "看", "支持", "写"),
    "VC": ("计划", "希望"),
    "A": ("新", "重要", "美丽", "大"),
    "D": ("都", "也", "不"),
    "P": ("。",),
}

# (category, head index (1-based, 0 = root), label) per word
TEMPLATES = (
    (("N", 2, "nsubj"), ("V", 0, "root"), ("N", 2, "dobj"), ("P", 2, "punct")),
    (("A", 2, "amod"), ("N", 3, "nsubj"), ("V", 0, "root"), ("N", 3, "dobj"), ("P", 3, "punct")),
    (("N", 3, "nsubj"), ("D", 3, "advmod"), ("V", 0, "root"), ("N", 3, "dobj"), ("P", 3, "punct")),
    (("N", 2, "nsubj"), ("VC", 0, "root"), ("V", 2, "ccomp"), ("N", 3, "dobj"),
     ("P", 2, "punct")),
    (("N", 2, "nsubj"), ("V", 0, "root"), ("A", 4, "amod"), ("N", 2, "dobj"), ("P", 2, "punct")),
    (("A", 2, "amod"), ("N", 4, "nsubj"), ("D", 4, "advmod"), ("VC", 0, "root"),
     ("V", 4, "ccomp"), ("A", 7, "amod"), ("N", 5, "dobj"), ("P", 4, "punct")),
)

LABELS = ("root", "nsubj", "dobj", "amod", "advmod", "ccomp", "punct")


def vocabulary() -> list[str]:
    return sorted({c for words in LEXICON.values() for w in words for c in w})


def toy_sentence(rng: np.random.Generator) -> Example:
    template = TEMPLATES[rng.integers(len(TEMPLATES))]
    forms = [LEXICON[cat][rng.integers(len(LEXICON[cat]))] for cat, _, _ in template]
    seg = Segmentation.from_lengths(len(f) for f in forms)
    heads = (-1, *(h for _, h, _ in template))
    labels = (None, *(l for _, _, l in template))
    return Example(CharSentence.from_text("".join(forms)), WordTree(seg, heads, labels))


def toy_corpus(size: int, seed: int = 0) -> list[Example]:
    rng = np.random.default_rng(seed)
    return [toy_sentence(rng) for _ in range(size)]


def toy_split(n_train: int = 200, n_test: int = 50, seed: int = 0):
    """Train and held-out sets drawn from independent streams of one seed."""
    return toy_corpus(n_train, seed=seed), toy_corpus(n_test, seed=seed + 10_000)

import sys
import numpy as np
import pytest
import torch
from hypothesis import settings

from chardep.core import CharSentence, CharTree, ForestSpec, Segmentation, WordTree

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")
torch.set_num_threads(1)

FIG1_TEXT = "上海计划发展金融业"
FIG1_LENGTHS = (2, 2, 2, 3)
FIG1_WHEAD = (-1, 2, 0, 2, 3)
FIG1_WLABEL = (None, "nsubj", "root", "ccomp", "dobj")
# annotated character tree of the example sentence
FIG1_CHAR_HEADS = (-1, 2, 4, 4, 0, 4, 5, 9, 7, 5)
FIG1_CHAR_LABELS = (None, "INTRA", "nsubj", "INTRA", "root", "ccomp", "INTRA", "INTRA",
                    "INTRA", "dobj")


@pytest.fixture
def fig1_sentence():
    return CharSentence.from_text(FIG1_TEXT)


@pytest.fixture
def fig1_seg():
    return Segmentation.from_lengths(FIG1_LENGTHS)


@pytest.fixture
def fig1_word_tree(fig1_seg):
    return WordTree(fig1_seg, FIG1_WHEAD, FIG1_WLABEL)


@pytest.fixture
def fig1_spec(fig1_seg):
    return ForestSpec(fig1_seg, FIG1_WHEAD)


@pytest.fixture
def fig1_char_tree():
    return CharTree(FIG1_CHAR_HEADS, FIG1_CHAR_LABELS)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)

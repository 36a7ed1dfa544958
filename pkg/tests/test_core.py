import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chardep.core import (INTRA, MASK_VALUE, C2fArcScores, CharSentence, CharTree, ForestSpec,
                          LabelSet, Segmentation, WordTree, arc_admissible, is_masked,
                          is_projective, is_tree, validate_char_tree)

from conftest import FIG1_CHAR_HEADS


def test_validate_single_character():
    assert validate_char_tree(CharTree((-1, 0)))


def test_validate_rejects_cycle():
    assert not validate_char_tree(CharTree((-1, 2, 1)))


def test_validate_rejects_two_roots():
    assert not validate_char_tree(CharTree((-1, 0, 0)))


def test_validate_rejects_crossing():
    # 1 -> 3 crosses 2 -> 4
    assert is_tree((-1, 0, 4, 1, 1))
    assert not validate_char_tree(CharTree((-1, 0, 4, 1, 1)))


def test_validate_fig1_tree():
    assert validate_char_tree(CharTree(FIG1_CHAR_HEADS))


def test_root_arc_crossing_counts():
    # ROOT -> 2 crosses 1 -> 3
    assert not is_projective((-1, 3, 0, 2))


def test_char_tree_rejects_out_of_range_head():
    with pytest.raises(ValueError):
        CharTree((-1, 5))


def test_sentence_indexing(fig1_sentence):
    assert fig1_sentence.n == 9
    assert fig1_sentence[1] == "上"
    assert fig1_sentence[9] == "业"
    with pytest.raises(IndexError):
        fig1_sentence[10]
    with pytest.raises(ValueError):
        CharSentence(())


def test_segmentation_checks():
    with pytest.raises(ValueError):
        Segmentation(((1, 2), (4, 4)))
    with pytest.raises(ValueError):
        Segmentation(((2, 3),))
    seg = Segmentation.from_lengths([2, 1, 3])
    assert seg.spans == ((1, 2), (3, 3), (4, 6))
    assert list(seg.word_ids()) == [0, 1, 1, 2, 3, 3, 3]
    assert seg.to_bmes() == ["B", "E", "S", "B", "M", "E"]


@given(st.lists(st.integers(1, 4), min_size=1, max_size=8))
def test_bmes_round_trip(lengths):
    seg = Segmentation.from_lengths(lengths)
    assert Segmentation.from_bmes(seg.to_bmes()) == seg


@pytest.mark.parametrize("tags", [["M"], ["B"], ["B", "S"], ["E"], ["X"]])
def test_bad_bmes(tags):
    with pytest.raises(ValueError):
        Segmentation.from_bmes(tags)


def test_label_set_puts_intra_first():
    labels = LabelSet.build(["nsubj", "dobj", "root", "nsubj"])
    assert labels[0] == INTRA
    assert labels.index(INTRA) == 0
    assert labels.root == "root"
    assert set(labels) == {INTRA, "nsubj", "dobj", "root"}
    with pytest.raises(ValueError):
        LabelSet(("root", INTRA))


def test_label_set_configurable_root():
    labels = LabelSet.build(["nsubj"], root="HED")
    assert "HED" in labels and labels.root == "HED"


def test_word_tree_validity(fig1_word_tree):
    assert fig1_word_tree.is_valid()
    assert fig1_word_tree.whead == (-1, 2, 0, 2, 3)
    assert fig1_word_tree.span_arcs()[3] == ((7, 9), (5, 6), "dobj")


def test_arc_admissible_examples(fig1_spec):
    assert arc_admissible(fig1_spec, 7, 8)
    assert arc_admissible(fig1_spec, 5, 9)
    assert not arc_admissible(fig1_spec, 1, 3)
    assert arc_admissible(fig1_spec, 0, 3)
    assert not arc_admissible(fig1_spec, 0, 1)


def test_arc_admissible_range(fig1_spec):
    for h, m in [(10, 1), (0, 0), (3, 3), (1, 10)]:
        with pytest.raises(IndexError):
            arc_admissible(fig1_spec, h, m)


def test_admissibility_asymmetric_across_words(fig1_spec):
    n = fig1_spec.n
    wid = fig1_spec.word_ids
    for h in range(1, n + 1):
        for m in range(1, n + 1):
            if h != m and wid[h] != wid[m] and arc_admissible(fig1_spec, h, m):
                assert not arc_admissible(fig1_spec, m, h)


def test_segmentation_only_spec(fig1_seg):
    spec = ForestSpec(fig1_seg)
    mask = spec.arc_mask()
    assert mask[1, 3] and mask[3, 1] and mask[0, 7]
    assert not mask[:, 0].any()


def test_fixed_structure_restricts_entry():
    seg = Segmentation.from_lengths([3])
    spec = ForestSpec(seg, (-1, 0), {1: {(3, 2), (2, 1)}})
    assert spec.fixed_root(1) == 3
    assert spec.admissible(0, 3) and not spec.admissible(0, 1)
    assert spec.admissible(2, 1) and not spec.admissible(1, 2)


def test_c2f_scores_mask_root_row():
    s = C2fArcScores(np.zeros((3, 3)), np.ones((3, 3)))
    assert np.all(s.s_intra[0] == MASK_VALUE)
    assert s.n == 2
    assert is_masked(MASK_VALUE) and not is_masked(-1e3)

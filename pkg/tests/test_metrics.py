import pytest
from hypothesis import given
from hypothesis import strategies as st

from chardep.core import Segmentation, WordTree
from chardep.metrics import (attachment_scores, complete_match, corpus_dep_f1, dep_f1,
                             evaluate_corpus, seg_f1, structure_cm, structure_distribution)


def seg(*lengths):
    return Segmentation.from_lengths(lengths)


def test_seg_f1_identity(fig1_seg):
    assert seg_f1(fig1_seg, fig1_seg) == (1.0, 1.0, 1.0)


def test_seg_f1_split_word():
    # gold {上海, 计划}, pred {上, 海, 计划}
    p, r, f = seg_f1(seg(2, 2), seg(1, 1, 2))
    assert (p, r, f) == pytest.approx((1 / 3, 1 / 2, 0.4))


def test_seg_f1_no_overlap_and_mismatch():
    assert seg_f1(seg(2, 2), seg(1, 2, 1))[2] == 0.0
    with pytest.raises(ValueError):
        seg_f1(seg(2), seg(3))


def test_dep_identity(fig1_word_tree):
    assert dep_f1(fig1_word_tree, fig1_word_tree) == 1.0
    assert dep_f1(fig1_word_tree, fig1_word_tree, labeled=True) == 1.0


def test_dep_one_missegmented_word(fig1_word_tree):
    # 发展 split into 发 + 展: the arcs of 发展 and 金融业 both fail
    pred = WordTree(seg(2, 2, 1, 1, 3), (-1, 2, 0, 2, 3, 3),
                    (None, "nsubj", "root", "ccomp", "dep", "dobj"))
    # gold arcs 4, pred arcs 5, matches 2 (上海 and 计划)
    assert dep_f1(fig1_word_tree, pred) == pytest.approx(2 * (2 / 5) * (2 / 4) / (2 / 5 + 2 / 4))


def test_punctuation_excluded():
    gold = WordTree(seg(1, 1, 1), (-1, 0, 1, 1), (None, "root", "obj", "punct"))
    pred = WordTree(seg(1, 1, 1), (-1, 0, 1, 2), (None, "root", "obj", "punct"))
    assert dep_f1(gold, pred) == 1.0
    assert attachment_scores(gold, pred) == (1.0, 1.0)
    assert dep_f1(gold, pred, punct_labels=()) < 1.0


def test_attachment_scores():
    labels = (None, "a", "root", "b", "c", "d")
    gold = WordTree(seg(1, 1, 1, 1, 1), (-1, 2, 0, 2, 3, 4), labels)
    pred = WordTree(seg(1, 1, 1, 1, 1), (-1, 2, 0, 2, 3, 3), labels)
    assert attachment_scores(gold, pred) == (0.8, 0.8)
    with pytest.raises(ValueError):
        attachment_scores(gold, WordTree(seg(2, 3), (-1, 0, 1), (None, "root", "x")))


@given(st.lists(st.tuples(st.integers(0, 3), st.sampled_from("abc")), min_size=4, max_size=4))
def test_labeled_never_exceeds_unlabeled(arcs):
    heads = (-1, 0) + tuple(min(h, w) for w, (h, _) in enumerate(arcs[1:], 1))
    labels = (None,) + tuple(l for _, l in arcs)
    gold = WordTree(seg(1, 1, 1, 1), (-1, 0, 1, 1, 1), (None, "a", "b", "c", "a"))
    pred = WordTree(seg(1, 1, 1, 1), heads, labels)
    assert dep_f1(gold, pred, True, ()) <= dep_f1(gold, pred, False, ())
    uas, las = attachment_scores(gold, pred, ())
    assert las <= uas


def test_arc_needs_both_spans(fig1_word_tree):
    # correct heads but merged segmentation: no arc touching the merged word matches
    pred = WordTree(seg(4, 2, 3), (-1, 0, 1, 2), (None, "root", "ccomp", "dobj"))
    assert dep_f1(fig1_word_tree, pred) == pytest.approx(2 * (1 / 3) * (1 / 4) / (1 / 3 + 1 / 4))


def test_corpus_order_invariance(fig1_word_tree):
    other = WordTree(seg(1, 1), (-1, 0, 1), (None, "root", "a"))
    bad = WordTree(seg(1, 1), (-1, 2, 0), (None, "a", "root"))
    golds, preds = [fig1_word_tree, other], [fig1_word_tree, bad]
    assert corpus_dep_f1(golds, preds) == corpus_dep_f1(golds[::-1], preds[::-1])
    stats = evaluate_corpus(golds, preds)
    assert stats["CM"] == 50.0 and 0 <= stats["UF"] <= 1
    assert complete_match(fig1_word_tree, fig1_word_tree)


def test_structure_distribution():
    assert structure_distribution([(2, 0)] * 4) == {2: {(2, 0): 100.0}}
    dist = structure_distribution([(2, 0), (0, 1), (2, 0), (3, 3, 0), (0,)])
    assert dist == {2: {(2, 0): pytest.approx(200 / 3), (0, 1): pytest.approx(100 / 3)},
                    3: {(3, 3, 0): 100.0}}
    for table in dist.values():
        assert sum(table.values()) == pytest.approx(100.0)


def test_structure_cm():
    gold = [(2, 0), (0, 1), (2, 0), (0, 1), None]
    assert structure_cm([gold], gold) == 100.0
    run_a = [(2, 0), (0, 1), (0, 1), (2, 0), (2, 0)]
    run_b = [(0, 1), (2, 0), (2, 0), (0, 1), (0, 1)]
    assert structure_cm([run_a, run_b], gold, "one-to-one") == 50.0
    assert structure_cm([run_a, run_b], gold, "many-to-one") == 100.0
    with pytest.raises(ValueError):
        structure_cm([], gold)


@given(st.lists(st.lists(st.sampled_from([(2, 0), (0, 1)]), min_size=3, max_size=3),
                min_size=1, max_size=4))
def test_many_to_one_dominates(runs):
    gold = [(2, 0), (0, 1), (2, 0)]
    assert structure_cm(runs, gold, "many-to-one") >= structure_cm(runs, gold, "one-to-one")

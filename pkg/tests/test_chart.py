import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from chardep import chart
from chardep.core import (MASK_VALUE, C2fArcScores, CharTree, EmptyForestError, ForestSpec,
                          NoValidTreeError, Segmentation, validate_char_tree)
from chardep.oracle import (brute_argmax, brute_logZ, c2f_legal, c2f_pair_scores,
                            enumerate_c2f, enumerate_projective, filter_compatible,
                            inter_under_intra, random_spec, tree_score)

from conftest import FIG1_CHAR_HEADS


def test_single_char_decode_and_inside():
    s = np.array([[0.0, 3.5], [0.0, 0.0]])
    assert chart.eisner_decode(s) == (-1, 0)
    assert chart.inside(s) == pytest.approx(3.5)
    assert chart.arc_marginals(s)[0, 1] == pytest.approx(1.0)


def test_two_char_decode():
    s = np.zeros((3, 3))
    s[0, 1], s[1, 2], s[0, 2], s[2, 1] = 5, 4, 1, 1
    assert chart.eisner_decode(s) == (-1, 0, 1)


def test_two_char_inside_counts_both_trees():
    assert chart.inside(np.zeros((3, 3))) == pytest.approx(math.log(2))


def test_zero_score_counts_match_enumeration():
    for n in range(1, 8):
        assert round(math.exp(chart.inside(np.zeros((n + 1, n + 1))))) == len(enumerate_projective(n))


def test_zero_score_tie_break_is_fixed():
    # smallest split point and smallest root position win ties
    assert chart.eisner_decode(np.zeros((5, 5))) == (-1, 0, 1, 2, 3)


def test_fig1_constrained_decode(fig1_spec, rng):
    s = rng.normal(scale=0.1, size=(10, 10))
    for m, h in enumerate(FIG1_CHAR_HEADS[1:], 1):
        s[h, m] += 5.0
    assert chart.constrained_eisner(s, fig1_spec) == FIG1_CHAR_HEADS


def test_fig1_forest_size(fig1_spec):
    # dual-method agreement with the enumeration oracle, frozen
    z = chart.constrained_inside(np.zeros((10, 10)), fig1_spec)
    assert round(math.exp(z)) == 56


def test_one_two_char_word_forces_single_root(rng):
    spec = ForestSpec(Segmentation.from_lengths([2]), (-1, 0))
    for _ in range(10):
        heads = chart.constrained_eisner(rng.normal(size=(3, 3)), spec)
        assert sorted(heads[1:]) in ([0, 1], [0, 2])


def test_single_char_words_have_one_tree(rng):
    seg = Segmentation.from_lengths([1] * 5)
    spec = ForestSpec(seg, (-1, 2, 0, 2, 5, 3))
    assert chart.constrained_inside(np.zeros((6, 6)), spec) == pytest.approx(0.0, abs=1e-12)
    assert chart.constrained_eisner(rng.normal(size=(6, 6)), spec) == (-1, 2, 0, 2, 5, 3)


@pytest.mark.parametrize("n", range(1, 8))
def test_random_agreement_with_oracle(n):
    rng = np.random.default_rng(n)
    trees = enumerate_projective(n)
    for _ in range(5):
        spec = random_spec(n, rng)
        s = rng.normal(scale=2.0, size=(n + 1, n + 1))
        compat = filter_compatible(trees, spec)
        assert chart.inside(s) == pytest.approx(brute_logZ(trees, s), abs=1e-6)
        assert chart.constrained_inside(s, spec) == pytest.approx(brute_logZ(compat, s), abs=1e-6)
        assert tree_score(chart.eisner_decode(s), s) == brute_argmax(trees, s)[1]
        assert tree_score(chart.constrained_eisner(s, spec), s) == brute_argmax(compat, s)[1]


def test_count_equality_without_root_as_head():
    rng = np.random.default_rng(7)
    for n in range(2, 8):
        trees = enumerate_projective(n)
        for _ in range(5):
            spec = random_spec(n, rng)
            z = chart.constrained_inside(np.zeros((n + 1, n + 1)), spec, root_as_head=False)
            count = len(filter_compatible(trees, spec, root_as_head=False))
            assert round(math.exp(z)) == count


def test_semiring_duality_exact():
    # integer scores make every sum exact, so the chart value must equal the tree score
    rng = np.random.default_rng(3)
    for n in range(1, 12):
        s = rng.integers(-20, 20, size=(n + 1, n + 1)).astype(float)
        spec = random_spec(n, rng)
        for wid, table in ((None, s), (spec, s)):
            t = torch.as_tensor(table)[None]
            if wid is None:
                value, trees = chart.batch_eisner(t, [n])
            else:
                t = chart.apply_spec_mask(t, [spec])
                value, trees = chart.batch_eisner(t, [n], chart.spec_batch([spec], [n]))
            assert float(value[0]) == tree_score(trees[0], s)


def test_masking_is_monotone():
    rng = np.random.default_rng(11)
    for n in range(2, 9):
        s = rng.normal(size=(n + 1, n + 1))
        spec = random_spec(n, rng)
        z_free = chart.inside(s)
        z_seg = chart.constrained_inside(s, ForestSpec(spec.segmentation))
        z_full = chart.constrained_inside(s, spec)
        assert z_full <= z_seg + 1e-12 <= z_free + 2e-12


def test_all_masked_raises():
    s = np.full((4, 4), MASK_VALUE)
    with pytest.raises(NoValidTreeError):
        chart.eisner_decode(s)
    spec = ForestSpec(Segmentation.from_lengths([1, 2]), (-1, 0, 1))
    with pytest.raises(EmptyForestError):
        chart.constrained_eisner(s, spec)
    with pytest.raises(EmptyForestError):
        chart.constrained_inside(s, spec)


def test_marginals_match_finite_differences(rng):
    n = 6
    s = rng.normal(size=(n + 1, n + 1))
    spec = random_spec(n, rng)
    eps = 1e-5
    for sp in (None, spec):
        mu = chart.arc_marginals(s, sp)
        f = chart.inside if sp is None else (lambda x: chart.constrained_inside(x, sp))
        for h, m in [(0, 1), (2, 3), (5, 4), (1, 6), (3, 1)]:
            plus, minus = s.copy(), s.copy()
            plus[h, m] += eps
            minus[h, m] -= eps
            assert mu[h, m] == pytest.approx((f(plus) - f(minus)) / (2 * eps), abs=1e-6)


def test_inadmissible_marginal_is_exactly_zero(fig1_spec, rng):
    mu = chart.arc_marginals(rng.normal(size=(10, 10)), fig1_spec)
    assert mu[1, 3] == 0.0
    assert mu[0, 1] == 0.0
    assert np.allclose(mu[:, 1:].sum(0), 1.0)


def test_batch_matches_single_calls(rng):
    tables = [rng.normal(size=(n + 1, n + 1)) for n in (3, 7, 1, 5)]
    batch, lens = chart.pad_batch(tables)
    z = chart.batch_inside(batch, lens)
    _, trees = chart.batch_eisner(batch, lens)
    for b, s in enumerate(tables):
        assert float(z[b]) == pytest.approx(chart.inside(s), abs=1e-10)
        assert trees[b] == chart.eisner_decode(s)


@given(st.integers(1, 10), st.integers(0, 2**31 - 1))
def test_decoder_outputs_are_valid_trees(n, seed):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=(n + 1, n + 1))
    spec = random_spec(n, rng)
    assert validate_char_tree(CharTree(chart.eisner_decode(s)))
    assert validate_char_tree(CharTree(chart.constrained_eisner(s, spec)))
    heads, roles = chart.c2f_eisner(C2fArcScores(s, rng.normal(size=(n + 1, n + 1))))
    assert validate_char_tree(CharTree(heads))
    assert c2f_legal(heads, roles)


# ---------------------------------------------------------------------------
# coarse-to-fine


def test_c2f_single_char():
    heads, roles = chart.c2f_eisner(C2fArcScores(np.zeros((2, 2)), np.zeros((2, 2))))
    assert heads == (-1, 0) and roles == (None, "inter")


def test_c2f_window_forms_word():
    n = 5
    si = np.full((n + 1, n + 1), -5.0)
    se = np.zeros((n + 1, n + 1))
    si[3, 2] = si[2, 3] = 5.0
    heads, roles = chart.c2f_eisner(C2fArcScores(si, se))
    intra = [(heads[m], m) for m in range(1, n + 1) if roles[m] == "intra"]
    assert intra in ([(3, 2)], [(2, 3)])


@pytest.mark.parametrize("root_as_head", [True, False])
@pytest.mark.parametrize("n", range(1, 6))
def test_c2f_agrees_with_pair_enumeration(n, root_as_head):
    rng = np.random.default_rng([n, root_as_head])
    trees, intra = enumerate_c2f(n, root_as_head=root_as_head)
    for _ in range(4):
        sc = C2fArcScores(rng.normal(size=(n + 1, n + 1)), rng.normal(size=(n + 1, n + 1)))
        values = c2f_pair_scores(trees, intra, sc.s_intra, sc.s_inter)
        top = values.max()
        expect = top + math.log(np.exp(values - top).sum())
        assert chart.c2f_inside(sc, root_as_head=root_as_head) == pytest.approx(expect, abs=1e-6)
        heads, roles = chart.c2f_eisner(sc, root_as_head=root_as_head)
        flags = np.array([r == "intra" for r in roles])
        got = c2f_pair_scores(np.array([heads]), flags[None], sc.s_intra, sc.s_inter)[0]
        assert got == top


def test_c2f_rule_exclusion_shrinks_derivations():
    # witness on n = 5: some pair is derivable only with the excluded rule
    legal, _ = enumerate_c2f(5)
    loose, _ = enumerate_c2f(5, root_as_head=False)
    assert len(loose) > len(legal)
    z_on = chart.c2f_inside(C2fArcScores(np.zeros((6, 6)), np.zeros((6, 6))))
    z_off = chart.c2f_inside(C2fArcScores(np.zeros((6, 6)), np.zeros((6, 6))), root_as_head=False)
    assert round(math.exp(z_on)) == len(legal) == 933
    assert round(math.exp(z_off)) == len(loose) == 1240


def test_c2f_never_puts_inter_under_intra():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = int(rng.integers(1, 9))
        sc = C2fArcScores(rng.normal(scale=3, size=(n + 1, n + 1)),
                          rng.normal(scale=3, size=(n + 1, n + 1)))
        heads, roles = chart.c2f_eisner(sc)
        assert inter_under_intra(heads, roles) == []


def test_merge_routes_by_role(fig1_spec, rng):
    sc = C2fArcScores(rng.normal(size=(10, 10)), rng.normal(size=(10, 10)))
    merged = chart.merge_c2f_scores(sc, fig1_spec)
    assert merged[7, 8] == sc.s_intra[7, 8]
    assert merged[5, 9] == sc.s_inter[5, 9]
    assert merged[0, 4] == sc.s_inter[0, 4]
    assert merged[1, 3] == MASK_VALUE


def test_merged_inside_matches_role_scored_forest(rng):
    for n in range(2, 8):
        spec = random_spec(n, rng)
        sc = C2fArcScores(rng.normal(size=(n + 1, n + 1)), rng.normal(size=(n + 1, n + 1)))
        compat = filter_compatible(enumerate_projective(n), spec)
        wid = spec.word_ids
        intra = (wid[compat] == wid[None, :]) & (compat > 0)
        values = c2f_pair_scores(compat, intra, sc.s_intra, sc.s_inter)
        top = values.max()
        z = chart.constrained_inside(chart.merge_c2f_scores(sc, spec), spec)
        assert z == pytest.approx(top + math.log(np.exp(values - top).sum()), abs=1e-6)

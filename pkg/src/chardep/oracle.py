"""Exhaustive enumeration used as ground truth for the chart algorithms.

Trees are handled as integer arrays of shape ``[T, n + 1]`` where column 0 is
the ``-1`` placeholder for ROOT.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .core import MASK_VALUE, ForestSpec, Segmentation, is_projective, is_tree

MAX_N = 9


@lru_cache(maxsize=None)
def _enumerate(n: int) -> np.ndarray:
    # arc lists of each Eisner item, built bottom-up by span splitting
    @lru_cache(maxsize=None)
    def complete(h: int, e: int) -> tuple:
        if h == e:
            return ((),)
        step = 1 if e > h else -1
        out = []
        for k in range(h + step, e + step, step):
            for a in incomplete(h, k):
                for b in complete(k, e):
                    out.append(a + b)
        return tuple(out)

    @lru_cache(maxsize=None)
    def incomplete(h: int, m: int) -> tuple:
        lo, hi = min(h, m), max(h, m)
        out = []
        for k in range(lo, hi):
            for a in complete(lo, k):
                for b in complete(hi, k + 1):
                    out.append(((h, m),) + a + b)
        return tuple(out)

    rows = []
    for r in range(1, n + 1):
        for a in complete(r, 1):
            for b in complete(r, n):
                heads = [-1] * (n + 1)
                heads[r] = 0
                for h, m in a + b:
                    heads[m] = h
                rows.append(heads)
    trees = np.array(sorted(rows), dtype=np.int64)
    trees.setflags(write=False)
    return trees


def enumerate_projective(n: int) -> np.ndarray:
    """All single-rooted projective trees over ``n`` characters, sorted."""
    if not 1 <= n <= MAX_N:
        raise ValueError(f"enumeration supports 1 <= n <= {MAX_N}, got {n}")
    return _enumerate(n)


def enumerate_bruteforce(n: int) -> np.ndarray:
    """Generate-and-filter enumeration over all head arrays (small n only)."""
    rows = []
    for tail in itertools.product(range(n + 1), repeat=n):
        heads = (-1,) + tail
        if is_tree(heads) and is_projective(heads):
            rows.append(heads)
    return np.array(sorted(rows), dtype=np.int64).reshape(-1, n + 1)


# ---------------------------------------------------------------------------
# structural checks


def _external(trees: np.ndarray, wid: np.ndarray) -> np.ndarray:
    """``ext[t, m]``: the head of m lies outside m's word (ROOT counts as outside)."""
    heads = np.where(trees < 0, 0, trees)
    ext = wid[heads] != wid[None, :]
    ext[:, 0] = False
    return ext


def single_root_ok(trees: np.ndarray, seg: Segmentation) -> np.ndarray:
    """Each word has exactly one character whose head lies outside the word."""
    trees = np.atleast_2d(trees)
    ext = _external(trees, seg.word_ids())
    starts = [b for b, _ in seg.spans]
    counts = np.add.reduceat(ext[:, 1:].astype(np.int64), np.array(starts) - 1, axis=1)
    return np.all(counts == 1, axis=1)


def root_as_head_ok(trees: np.ndarray, seg: Segmentation) -> np.ndarray:
    """Every inter-word arc leaves from a character whose own head is outside its word."""
    trees = np.atleast_2d(trees)
    ext = _external(trees, seg.word_ids())
    heads = np.where(trees < 0, 0, trees)
    head_ext = np.take_along_axis(ext, heads, axis=1)
    bad = ext & (heads > 0) & ~head_ext
    return ~np.any(bad, axis=1)


def admissible_ok(trees: np.ndarray, spec: ForestSpec) -> np.ndarray:
    trees = np.atleast_2d(trees)
    mask = spec.arc_mask()
    cols = np.arange(1, spec.n + 1)
    return np.all(mask[trees[:, 1:], cols[None, :]], axis=1)


def filter_compatible(trees: np.ndarray, spec: ForestSpec, *, single_root: bool = True,
                      root_as_head: bool = True) -> np.ndarray:
    """Rows of ``trees`` that belong to the forest described by ``spec``."""
    trees = np.atleast_2d(trees)
    keep = admissible_ok(trees, spec)
    if single_root:
        keep &= single_root_ok(trees, spec.segmentation)
    if root_as_head:
        keep &= root_as_head_ok(trees, spec.segmentation)
    return trees[keep]


def inter_under_intra(heads: Sequence[int], roles: Sequence[Optional[str]]) -> list[tuple[int, int]]:
    """Intra arcs that span a character attached by an inter arc."""
    bad = []
    for m in range(1, len(heads)):
        if roles[m] != "intra":
            continue
        h = heads[m]
        for x in range(min(h, m) + 1, max(h, m)):
            if roles[x] != "intra":
                bad.append((h, m))
                break
    return bad


def c2f_legal(heads: Sequence[int], roles: Sequence[Optional[str]], *,
              root_as_head: bool = True) -> bool:
    n = len(heads) - 1
    for m in range(1, n + 1):
        h = heads[m]
        if h == 0 and roles[m] != "inter":
            return False
        if root_as_head and roles[m] == "inter" and h != 0 and roles[h] != "inter":
            return False
    return not inter_under_intra(heads, roles)


# ---------------------------------------------------------------------------
# brute-force scoring


def tree_scores(trees: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Arc-sum score of every tree, accumulated in modifier order."""
    trees = np.atleast_2d(trees)
    scores = np.asarray(scores, dtype=np.float64)
    total = np.zeros(trees.shape[0])
    for m in range(1, trees.shape[1]):
        total += scores[trees[:, m], m]
    return total


def tree_score(heads: Sequence[int], scores: np.ndarray) -> float:
    return float(tree_scores(np.asarray(heads)[None], scores)[0])


def _logsumexp(x: np.ndarray) -> float:
    top = np.max(x)
    return float(top + np.log(np.sum(np.exp(x - top))))


def brute_logZ(trees: np.ndarray, scores: np.ndarray) -> float:
    if len(trees) == 0:
        raise ValueError("empty tree list")
    return _logsumexp(tree_scores(trees, scores))


def brute_argmax(trees: np.ndarray, scores: np.ndarray) -> tuple[tuple[int, ...], float]:
    if len(trees) == 0:
        raise ValueError("empty tree list")
    values = tree_scores(trees, scores)
    best = int(np.argmax(values))
    return tuple(int(h) for h in trees[best]), float(values[best])


def brute_marginals(trees: np.ndarray, scores: np.ndarray) -> np.ndarray:
    if len(trees) == 0:
        raise ValueError("empty tree list")
    values = tree_scores(trees, scores)
    weights = np.exp(values - np.max(values))
    weights /= weights.sum()
    n = trees.shape[1] - 1
    out = np.zeros((n + 1, n + 1))
    for m in range(1, n + 1):
        out[:, m] = np.bincount(trees[:, m], weights=weights, minlength=n + 1)
    return out


def enumerate_c2f(n: int, *, root_as_head: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Legal (tree, role tagging) pairs; roles are a boolean intra flag per position."""
    trees = enumerate_projective(n)
    out_t, out_r = [], []
    for heads in trees:
        free = [m for m in range(1, n + 1) if heads[m] != 0]
        for bits in itertools.product((False, True), repeat=len(free)):
            intra = np.zeros(n + 1, dtype=bool)
            intra[free] = bits
            roles = [None] + ["intra" if intra[m] else "inter" for m in range(1, n + 1)]
            if c2f_legal(heads, roles, root_as_head=root_as_head):
                out_t.append(heads)
                out_r.append(intra)
    return np.array(out_t, dtype=np.int64), np.array(out_r, dtype=bool)


def c2f_pair_scores(trees: np.ndarray, intra: np.ndarray, s_intra: np.ndarray,
                    s_inter: np.ndarray) -> np.ndarray:
    total = np.zeros(trees.shape[0])
    for m in range(1, trees.shape[1]):
        total += np.where(intra[:, m], s_intra[trees[:, m], m], s_inter[trees[:, m], m])
    return total


# ---------------------------------------------------------------------------
# random instances


def random_word_tree_heads(k: int, rng: np.random.Generator) -> tuple[int, ...]:
    trees = enumerate_projective(k)
    return tuple(int(h) for h in trees[rng.integers(len(trees))])


def random_segmentation(n: int, rng: np.random.Generator, max_len: int = 3) -> Segmentation:
    lengths, left = [], n
    while left:
        length = int(rng.integers(1, min(max_len, left) + 1))
        lengths.append(length)
        left -= length
    return Segmentation.from_lengths(lengths)


def random_spec(n: int, rng: np.random.Generator, max_len: int = 3) -> ForestSpec:
    seg = random_segmentation(n, rng, max_len)
    return ForestSpec(seg, random_word_tree_heads(seg.n_words, rng))


# ---------------------------------------------------------------------------
# self-check suite


@dataclass
class CheckReport:
    checks: int = 0
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def expect(self, cond: bool, message: Callable[[], str]) -> None:
        self.checks += 1
        if not cond:
            self.failures.append(message())


def _fd_marginals(scores: np.ndarray, spec: Optional[ForestSpec], step: float) -> np.ndarray:
    import torch

    from .chart import apply_spec_mask, batch_inside, spec_batch

    n = scores.shape[0] - 1
    cells = [(h, m) for h in range(n + 1) for m in range(1, n + 1) if h != m]
    base = torch.as_tensor(scores, dtype=torch.float64)
    batch = base.repeat(2 * len(cells), 1, 1)
    for c, (h, m) in enumerate(cells):
        batch[2 * c, h, m] += step
        batch[2 * c + 1, h, m] -= step
    lens = [n] * len(batch)
    with torch.no_grad():
        if spec is None:
            z = batch_inside(batch, lens)
        else:
            batch = apply_spec_mask(batch, [spec] * len(batch))
            z = batch_inside(batch, lens, spec_batch([spec] * len(batch), lens))
    z = z.numpy()
    out = np.zeros_like(scores)
    for c, (h, m) in enumerate(cells):
        out[h, m] = (z[2 * c] - z[2 * c + 1]) / (2 * step)
    return out


def selfcheck(max_n: int = 8, seeds: int = 100, *, seed: int = 0, scale: float = 2.0,
              inside_fn: Optional[Callable] = None, fd_max_n: int = 8,
              tol: float = 1e-6, fd_tol: float = 1e-4, fd_step: float = 1e-4) -> CheckReport:
    """Compare every chart routine with enumeration on random instances.

    ``inside_fn`` replaces the unconstrained inside routine; it exists so the
    suite itself can be tested against a deliberately broken implementation.
    """
    from . import chart

    inside_fn = chart.inside if inside_fn is None else inside_fn
    report = CheckReport()
    for n in range(1, max_n + 1):
        trees = enumerate_projective(n)
        rng = np.random.default_rng([seed, n])
        for trial in range(seeds):
            spec = random_spec(n, rng)
            s = rng.normal(scale=scale, size=(n + 1, n + 1))
            tag = f"n={n} trial={trial} seg={spec.segmentation.lengths()} whead={spec.whead}"
            compat = filter_compatible(trees, spec)

            z, zb = inside_fn(s), brute_logZ(trees, s)
            report.expect(abs(z - zb) <= tol, lambda: f"inside {z} != brute {zb} ({tag})")
            zc, zcb = chart.constrained_inside(s, spec), brute_logZ(compat, s)
            report.expect(abs(zc - zcb) <= tol,
                          lambda: f"constrained_inside {zc} != brute {zcb} ({tag})")

            best = tree_score(chart.eisner_decode(s), s)
            _, bb = brute_argmax(trees, s)
            report.expect(best == bb, lambda: f"eisner score {best} != brute {bb} ({tag})")
            cbest = tree_score(chart.constrained_eisner(s, spec), s)
            _, cbb = brute_argmax(compat, s)
            report.expect(cbest == cbb,
                          lambda: f"constrained_eisner score {cbest} != brute {cbb} ({tag})")

            for sp, pool in ((None, trees), (spec, compat)):
                mu = chart.arc_marginals(s, sp)
                err = np.max(np.abs(mu - brute_marginals(pool, s)))
                which = "constrained" if sp else "free"
                report.expect(err <= tol, lambda: f"{which} marginals off by {err} ({tag})")
                if n <= fd_max_n:
                    fd = np.max(np.abs(mu - _fd_marginals(s, sp, fd_step)))
                    report.expect(fd <= fd_tol,
                                  lambda: f"{which} marginals vs finite differences {fd} ({tag})")
    return report


def count_compatible(spec: ForestSpec, **kwargs) -> int:
    return len(filter_compatible(enumerate_projective(spec.n), spec, **kwargs))


def log_count(count: int) -> float:
    return math.log(count) if count else MASK_VALUE

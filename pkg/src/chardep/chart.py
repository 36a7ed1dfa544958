"""Span-based charts for projective dependency parsing.

Every chart works on a batch of score tables ``s`` of shape ``[B, N, N]``
(``N = max(n) + 1``) in either the sum-product (log space) or the max-product
semiring.  Complete spans are ``C[h, e]`` and incomplete spans ``I[h, m]``;
the direction is encoded by the order of the indices.  ROOT always takes
exactly one child, attached in a final step outside the span loop.

Word constraints are expressed through per-position word ids.  Unconstrained
parsing is the special case where every character is its own word.
"""

from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np
import torch

from .core import (MASK_VALUE, C2fArcScores, EmptyForestError, ForestSpec,
                   NoValidTreeError, is_masked)

Tensorish = Union[np.ndarray, torch.Tensor]

INTRA_ROLE = "intra"
INTER_ROLE = "inter"


def as_tensor(x: Tensorish) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x.to(torch.float64)
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def _reduce(vals: torch.Tensor, viterbi: bool):
    if viterbi:
        return torch.max(vals, dim=-1)  # first index wins ties
    return torch.logsumexp(vals, dim=-1), None


def pad_batch(tables: Sequence[Tensorish], fill: float = MASK_VALUE) -> tuple[torch.Tensor, list[int]]:
    lens = [as_tensor(t).shape[0] - 1 for t in tables]
    size = max(lens) + 1
    out = torch.full((len(tables), size, size), fill, dtype=torch.float64)
    for b, t in enumerate(tables):
        k = lens[b] + 1
        out[b, :k, :k] = as_tensor(t)
    return out, lens


def spec_word_ids(spec: Optional[ForestSpec], n: int, size: Optional[int] = None) -> torch.Tensor:
    """Word id per position, ROOT is 0 and padding is -1."""
    size = n + 1 if size is None else size
    wid = torch.full((size,), -1, dtype=torch.long)
    if spec is None:
        wid[:n + 1] = torch.arange(n + 1)
    else:
        if spec.n != n:
            raise ValueError(f"spec covers {spec.n} characters, scores cover {n}")
        wid[:n + 1] = torch.tensor(np.array(spec.word_ids))
    return wid


def apply_spec_mask(s: torch.Tensor, specs: Sequence[Optional[ForestSpec]]) -> torch.Tensor:
    masks = torch.ones_like(s, dtype=torch.bool)
    for b, spec in enumerate(specs):
        if spec is not None:
            k = spec.n + 1
            masks[b, :k, :k] = torch.as_tensor(spec.arc_mask())
    return s.masked_fill(~masks, MASK_VALUE)


# ---------------------------------------------------------------------------
# first-order chart


def _eisner_chart(s, lens, wid, viterbi, single_root=True, root_as_head=True):
    B, N, _ = s.shape
    I = s.new_full((B, N, N), MASK_VALUE)
    C = s.new_full((B, N, N), MASK_VALUE)
    ar = torch.arange(N)
    C[:, ar, ar] = 0.0
    bp_i = torch.zeros((B, N, N), dtype=torch.long) if viterbi else None
    bp_c = torch.zeros((B, N, N), dtype=torch.long) if viterbi else None

    same = wid[:, :, None] == wid[:, None, :]
    if single_root:
        edge = torch.full((B, 1), -2, dtype=torch.long)
        right_bound = wid != torch.cat([wid[:, 1:], edge], 1)
        left_bound = wid != torch.cat([edge, wid[:, :-1]], 1)
        upper = ar[None, :] > ar[:, None]
        span_ok = same | torch.where(upper[None], right_bound[:, None, :], left_bound[:, None, :])

    for w in range(1, N - 1):
        i = torch.arange(1, N - w)
        j = i + w
        r = torch.arange(w)
        ic, jc = i[:, None], j[:, None]

        k = ic + r
        inner, arg = _reduce(C[:, ic, k] + C[:, jc, k + 1], viterbi)
        I[:, i, j] = inner + s[:, i, j]
        I[:, j, i] = inner + s[:, j, i]
        if viterbi:
            bp_i[:, i, j] = arg + i
            bp_i[:, j, i] = arg + i

        k = ic + 1 + r
        vals = I[:, ic, k] + C[:, k, jc]
        if root_as_head:
            vals = vals.masked_fill(same[:, ic, k] & ~same[:, k, jc], MASK_VALUE)
        right, arg_r = _reduce(vals, viterbi)

        k = ic + r
        vals = C[:, k, ic] + I[:, jc, k]
        if root_as_head:
            vals = vals.masked_fill(same[:, jc, k] & ~same[:, k, ic], MASK_VALUE)
        left, arg_l = _reduce(vals, viterbi)

        if single_root:
            right = right.masked_fill(~span_ok[:, i, j], MASK_VALUE)
            left = left.masked_fill(~span_ok[:, j, i], MASK_VALUE)
        C[:, i, j] = right
        C[:, j, i] = left
        if viterbi:
            bp_c[:, i, j] = arg_r + i + 1
            bp_c[:, j, i] = arg_l + i

    lens_t = torch.as_tensor(lens)
    last = C[torch.arange(B), :, lens_t]
    vals = s[:, 0, :] + C[:, :, 1] + last
    valid = (ar[None, :] >= 1) & (ar[None, :] <= lens_t[:, None])
    vals = vals.masked_fill(~valid, MASK_VALUE)
    total, root = _reduce(vals, viterbi)
    return total, (bp_i, bp_c, root)


def _backtrack(bp_i, bp_c, root, n):
    heads = [-1] * (n + 1)
    r = int(root)
    heads[r] = 0
    stack = [("C", r, 1), ("C", r, n)]
    while stack:
        kind, x, y = stack.pop()
        if x == y:
            continue
        if kind == "C":
            k = int(bp_c[x, y])
            stack += [("I", x, k), ("C", k, y)]
        else:
            heads[y] = x
            k = int(bp_i[x, y])
            if x < y:
                stack += [("C", x, k), ("C", y, k + 1)]
            else:
                stack += [("C", y, k), ("C", x, k + 1)]
    return tuple(heads)


def batch_inside(s: torch.Tensor, lens: Sequence[int], wid: Optional[torch.Tensor] = None,
                 single_root: bool = True, root_as_head: bool = True) -> torch.Tensor:
    """Log partition per batch item; differentiable with respect to ``s``."""
    if wid is None:
        wid = _free_word_ids(s.shape[1], lens)
    total, _ = _eisner_chart(s, lens, wid, False, single_root, root_as_head)
    return total


def batch_eisner(s: torch.Tensor, lens: Sequence[int], wid: Optional[torch.Tensor] = None,
                 single_root: bool = True, root_as_head: bool = True):
    """Viterbi trees; returns ``(scores, heads)`` with chart root values."""
    if wid is None:
        wid = _free_word_ids(s.shape[1], lens)
    with torch.no_grad():
        total, (bp_i, bp_c, root) = _eisner_chart(s, lens, wid, True, single_root, root_as_head)
    bp_i, bp_c = bp_i.numpy(), bp_c.numpy()
    trees = []
    for b, n in enumerate(lens):
        if is_masked(float(total[b])):
            trees.append(None)
        else:
            trees.append(_backtrack(bp_i[b], bp_c[b], root[b], n))
    return total, trees


def _free_word_ids(size: int, lens: Sequence[int]) -> torch.Tensor:
    wid = torch.full((len(lens), size), -1, dtype=torch.long)
    for b, n in enumerate(lens):
        wid[b, :n + 1] = torch.arange(n + 1)
    return wid


def spec_batch(specs: Sequence[Optional[ForestSpec]], lens: Sequence[int]) -> torch.Tensor:
    size = max(lens) + 1
    return torch.stack([spec_word_ids(sp, n, size) for sp, n in zip(specs, lens)])


# ---------------------------------------------------------------------------
# single-sentence wrappers


def inside(scores: Tensorish) -> float:
    s = as_tensor(scores)[None]
    with torch.no_grad():
        return float(batch_inside(s, [s.shape[1] - 1])[0])


def eisner_decode(scores: Tensorish) -> tuple[int, ...]:
    s = as_tensor(scores)[None]
    _, trees = batch_eisner(s, [s.shape[1] - 1])
    if trees[0] is None:
        raise NoValidTreeError("every projective tree uses a masked arc")
    return trees[0]


def constrained_inside(scores: Tensorish, spec: ForestSpec, *, single_root: bool = True,
                       root_as_head: bool = True) -> float:
    s = apply_spec_mask(as_tensor(scores)[None], [spec])
    n = s.shape[1] - 1
    total = float(batch_inside(s, [n], spec_batch([spec], [n]), single_root, root_as_head)[0])
    if is_masked(total):
        raise EmptyForestError("no compatible tree", value=total)
    return total


def constrained_eisner(scores: Tensorish, spec: ForestSpec, *, single_root: bool = True,
                       root_as_head: bool = True) -> tuple[int, ...]:
    s = apply_spec_mask(as_tensor(scores)[None], [spec])
    n = s.shape[1] - 1
    _, trees = batch_eisner(s, [n], spec_batch([spec], [n]), single_root, root_as_head)
    if trees[0] is None:
        raise EmptyForestError("no compatible tree")
    return trees[0]


def arc_marginals(scores: Tensorish, spec: Optional[ForestSpec] = None, *,
                  single_root: bool = True, root_as_head: bool = True) -> np.ndarray:
    """Posterior arc probabilities as the gradient of the log partition."""
    s = as_tensor(scores).detach().clone()[None].requires_grad_(True)
    n = s.shape[1] - 1
    if spec is None:
        total = batch_inside(s, [n])
    else:
        masked = apply_spec_mask(s, [spec])
        total = batch_inside(masked, [n], spec_batch([spec], [n]), single_root, root_as_head)
    value = float(total.detach()[0])
    if is_masked(value):
        raise EmptyForestError("no compatible tree", value=value)
    (grad,) = torch.autograd.grad(total.sum(), s)
    return grad[0].numpy()


# ---------------------------------------------------------------------------
# coarse-to-fine chart


def _c2f_chart(si, se, lens, viterbi, root_as_head=True):
    B, N, _ = si.shape
    tables = [si.new_full((B, N, N), MASK_VALUE) for _ in range(5)]
    Ih, I, Ch, C, A = tables
    ar = torch.arange(N)
    Ch[:, ar, ar] = 0.0
    A[:, ar, ar] = 0.0
    bps = None
    if viterbi:
        bps = {name: torch.zeros((B, N, N), dtype=torch.long)
               for name in ("Ih", "I", "Ch", "C1", "C2", "opt")}

    def combine(v1, v2):
        if v2 is None:
            return v1, torch.zeros_like(v1, dtype=torch.long)
        if viterbi:
            pick = v2 > v1
            return torch.where(pick, v2, v1), pick.long()
        return torch.logaddexp(v1, v2), None

    for w in range(1, N - 1):
        i = torch.arange(1, N - w)
        j = i + w
        r = torch.arange(w)
        ic, jc = i[:, None], j[:, None]

        k = ic + r
        inner_h, arg_h = _reduce(Ch[:, ic, k] + Ch[:, jc, k + 1], viterbi)
        inner, arg = _reduce(A[:, ic, k] + A[:, jc, k + 1], viterbi)
        Ih[:, i, j] = inner_h + si[:, i, j]
        Ih[:, j, i] = inner_h + si[:, j, i]
        I[:, i, j] = inner + se[:, i, j]
        I[:, j, i] = inner + se[:, j, i]

        k = ic + 1 + r
        ch_r, a_chr = _reduce(Ih[:, ic, k] + Ch[:, k, jc], viterbi)
        c1_r, a_c1r = _reduce(I[:, ic, k] + A[:, k, jc], viterbi)
        c2_r, a_c2r = (None, None) if root_as_head else _reduce(Ih[:, ic, k] + C[:, k, jc], viterbi)
        k = ic + r
        ch_l, a_chl = _reduce(Ch[:, k, ic] + Ih[:, jc, k], viterbi)
        c1_l, a_c1l = _reduce(A[:, k, ic] + I[:, jc, k], viterbi)
        c2_l, a_c2l = (None, None) if root_as_head else _reduce(C[:, k, ic] + Ih[:, jc, k], viterbi)
        c_r, opt_r = combine(c1_r, c2_r)
        c_l, opt_l = combine(c1_l, c2_l)

        Ch[:, i, j] = ch_r
        Ch[:, j, i] = ch_l
        C[:, i, j] = c_r
        C[:, j, i] = c_l
        if viterbi:
            A[:, i, j] = torch.maximum(ch_r, c_r)
            A[:, j, i] = torch.maximum(ch_l, c_l)
            for name, a_r, a_l, off in (("Ih", arg_h, arg_h, 0), ("I", arg, arg, 0),
                                        ("Ch", a_chr, a_chl, None), ("C1", a_c1r, a_c1l, None),
                                        ("C2", a_c2r, a_c2l, None)):
                if a_r is None:
                    continue
                if off is None:
                    bps[name][:, i, j] = a_r + i + 1
                    bps[name][:, j, i] = a_l + i
                else:
                    bps[name][:, i, j] = a_r + i
                    bps[name][:, j, i] = a_l + i
            bps["opt"][:, i, j] = opt_r
            bps["opt"][:, j, i] = opt_l
        else:
            A[:, i, j] = torch.logaddexp(ch_r, c_r)
            A[:, j, i] = torch.logaddexp(ch_l, c_l)

    lens_t = torch.as_tensor(lens)
    vals = se[:, 0, :] + A[:, :, 1] + A[torch.arange(B), :, lens_t]
    valid = (ar[None, :] >= 1) & (ar[None, :] <= lens_t[:, None])
    total, root = _reduce(vals.masked_fill(~valid, MASK_VALUE), viterbi)
    return total, (Ch, C, bps, root)


def _c2f_backtrack(ch, c, bps, root, n):
    heads = [-1] * (n + 1)
    roles = [None] * (n + 1)
    r = int(root)
    heads[r], roles[r] = 0, INTER_ROLE
    stack = [("A", r, 1), ("A", r, n)]
    while stack:
        kind, x, y = stack.pop()
        if x == y:
            continue
        if kind == "A":
            stack.append(("Ch" if ch[x, y] >= c[x, y] else "C", x, y))
        elif kind == "Ch":
            k = int(bps["Ch"][x, y])
            stack += [("Ih", x, k), ("Ch", k, y)]
        elif kind == "C":
            if bps["opt"][x, y]:
                k = int(bps["C2"][x, y])
                stack += [("Ih", x, k), ("C", k, y)]
            else:
                k = int(bps["C1"][x, y])
                stack += [("I", x, k), ("A", k, y)]
        else:
            intra = kind == "Ih"
            heads[y] = x
            roles[y] = INTRA_ROLE if intra else INTER_ROLE
            k = int(bps[kind][x, y])
            sub = "Ch" if intra else "A"
            if x < y:
                stack += [(sub, x, k), (sub, y, k + 1)]
            else:
                stack += [(sub, y, k), (sub, x, k + 1)]
    return tuple(heads), tuple(roles)


def batch_c2f_inside(si: torch.Tensor, se: torch.Tensor, lens: Sequence[int],
                     root_as_head: bool = True) -> torch.Tensor:
    total, _ = _c2f_chart(_mask_root_row(si), se, lens, False, root_as_head)
    return total


def batch_c2f_eisner(si: torch.Tensor, se: torch.Tensor, lens: Sequence[int],
                     root_as_head: bool = True):
    with torch.no_grad():
        total, (ch, c, bps, root) = _c2f_chart(_mask_root_row(si), se, lens, True, root_as_head)
    ch, c = ch.numpy(), c.numpy()
    bps = {k: v.numpy() for k, v in bps.items()}
    out = []
    for b, n in enumerate(lens):
        if is_masked(float(total[b])):
            out.append(None)
        else:
            out.append(_c2f_backtrack(ch[b], c[b], {k: v[b] for k, v in bps.items()}, root[b], n))
    return total, out


def _mask_root_row(si: torch.Tensor) -> torch.Tensor:
    row = torch.zeros_like(si, dtype=torch.bool)
    row[:, 0, :] = True
    return si.masked_fill(row, MASK_VALUE)


def c2f_eisner(scores: C2fArcScores, *, root_as_head: bool = True):
    """Best tree with a role tag ("intra" or "inter") per arc."""
    si = as_tensor(scores.s_intra)[None]
    se = as_tensor(scores.s_inter)[None]
    _, out = batch_c2f_eisner(si, se, [scores.n], root_as_head)
    if out[0] is None:
        raise NoValidTreeError("no coarse-to-fine derivation")
    return out[0]


def c2f_inside(scores: C2fArcScores, *, root_as_head: bool = True) -> float:
    si = as_tensor(scores.s_intra)[None]
    se = as_tensor(scores.s_inter)[None]
    return float(batch_c2f_inside(si, se, [scores.n], root_as_head)[0])


def merge_c2f_scores(scores: C2fArcScores, spec: ForestSpec) -> np.ndarray:
    """Route each admissible arc to the table matching its role under ``spec``."""
    wid = spec.word_ids
    same = (wid[:, None] == wid[None, :]) & (wid[:, None] > 0)
    merged = np.where(same, scores.s_intra, scores.s_inter)
    return np.where(spec.arc_mask(), merged, MASK_VALUE)


def merge_c2f_tensors(si: torch.Tensor, se: torch.Tensor, wid: torch.Tensor) -> torch.Tensor:
    same = (wid[:, :, None] == wid[:, None, :]) & (wid[:, :, None] > 0)
    return torch.where(same, si, se)

"""Forest CRF losses, a small reference scorer, training and decoding."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import chart
from .chart import (apply_spec_mask, as_tensor, batch_c2f_eisner, batch_c2f_inside, batch_eisner,
                    batch_inside, merge_c2f_tensors, spec_batch)
from .convert import pseudo_forest, recover_with_fallback, word_tree_to_forest
from .core import (INTRA, CharSentence, CharTree, EmptyForestError, ForestSpec, LabelSet,
                   Segmentation, WordTree, is_masked)
from .io import Example
from .metrics import evaluate_corpus

logger = logging.getLogger(__name__)

PAD, UNK, ROOT_ID = 0, 1, 2
MODES = ("latent", "latent-c2f", "leftward", "rightward", "pipeline-parse")
SUPPORTED_MODES = MODES[:4]


class ConfigError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


class MissingLabelError(ValueError):
    pass


@dataclass(frozen=True)
class LossBreakdown:
    """Loss of one sentence; the two components are None for the integrated loss."""

    total: float
    tree_loss: Optional[float] = None
    label_loss: Optional[float] = None

    @classmethod
    def separate(cls, tree_loss: float, label_loss: float) -> "LossBreakdown":
        return cls(tree_loss + label_loss, tree_loss, label_loss)


# ---------------------------------------------------------------------------
# losses


def gold_label_index(gold: WordTree, labels: LabelSet, spec: Optional[ForestSpec] = None,
                     size: Optional[int] = None) -> np.ndarray:
    """Label id every arc must carry to belong to the labeled forest of ``gold``."""
    spec = word_tree_to_forest(gold) if spec is None else spec
    n = spec.n
    size = n + 1 if size is None else size
    wid = spec.word_ids
    mask = spec.arc_mask()
    idx = np.zeros((size, size), dtype=np.int64)
    for w in range(1, gold.n_words + 1):
        b, e = gold.segmentation.span(w)
        label = gold.labels[w]
        heads = [h for h in range(n + 1) if wid[h] != w and any(mask[h, b:e + 1])]
        if not heads:
            continue
        if label is None or label not in labels or label == labels.intra:
            raise MissingLabelError(f"word {w} has no usable gold label ({label!r})")
        idx[np.ix_(heads, range(b, e + 1))] = labels.index(label)
    return idx


def batch_forest_loss(s: torch.Tensor, t: Optional[torch.Tensor], lens: Sequence[int],
                      specs: Sequence[ForestSpec], label_idx: Optional[torch.Tensor] = None,
                      s_intra: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Per-sentence ``log Z(x) - log Z(x, F)`` with optional label augmentation.

    In coarse-to-fine mode ``s`` holds the inter-word scores and ``s_intra``
    the intra-word ones; the partition sums over all (tree, role) derivations
    and the forest routes every arc to the role fixed by the segmentation.
    """
    wid = spec_batch(specs, lens)
    if s_intra is None:
        denom = batch_inside(s, lens)
        num = s
    else:
        denom = batch_c2f_inside(s_intra, s, lens)
        num = merge_c2f_tensors(s_intra, s, wid)
    if t is not None and t.shape[-1] > 1:
        logp = F.log_softmax(t, dim=-1)
        num = num + logp.gather(-1, label_idx[..., None]).squeeze(-1)
    num = batch_inside(apply_spec_mask(num, specs), lens, wid)
    if any(is_masked(float(v)) for v in num.detach()):
        raise EmptyForestError("a gold forest is empty")
    return denom - num


def tree_loss(scores, spec: ForestSpec) -> float:
    """``-log`` of the probability mass of the forest."""
    s = as_tensor(scores)[None]
    with torch.no_grad():
        return float(batch_forest_loss(s, None, [spec.n], [spec])[0])


def labeled_forest_loss(scores, labels, spec: ForestSpec, gold: WordTree,
                        label_set: LabelSet) -> float:
    """Integrated loss: label log-probabilities folded into the forest's arc scores.

    A label table with a single column means labels are forced, so they add nothing.
    """
    s = as_tensor(scores)[None]
    t = as_tensor(labels)[None]
    idx = torch.as_tensor(gold_label_index(gold, label_set, spec))[None]
    with torch.no_grad():
        return float(batch_forest_loss(s, t, [spec.n], [spec], idx)[0])


def integrated_loss(scores, labels, spec, gold, label_set) -> LossBreakdown:
    return LossBreakdown(labeled_forest_loss(scores, labels, spec, gold, label_set))


def label_decode(labels, heads: Sequence[int], label_set: Optional[LabelSet] = None,
                 roles: Optional[Sequence[Optional[str]]] = None) -> CharTree:
    """Best label per arc (first id wins ties).

    With ``roles``, intra-role arcs get INTRA and the others their best
    syntactic label.
    """
    t = np.asarray(labels.detach() if isinstance(labels, torch.Tensor) else labels,
                   dtype=np.float64)
    names = label_set.labels if label_set is not None else tuple(range(t.shape[-1]))
    out: list = [None]
    for m in range(1, len(heads)):
        row = t[heads[m], m]
        if roles is None:
            out.append(names[int(np.argmax(row))])
        elif roles[m] == chart.INTRA_ROLE:
            out.append(names[0])
        else:
            out.append(names[1 + int(np.argmax(row[1:]))])
    return CharTree(tuple(heads), tuple(out))


# ---------------------------------------------------------------------------
# configuration


@dataclass
class TrainConfig:
    mode: str = "latent"
    embedding_dim: int = 32
    hidden_dim: int = 64
    window: int = 2
    learning_rate: float = 1.0
    lr_decay: float = 0.97
    epochs: int = 50
    batch_size: int = 10
    clip_norm: float = 5.0
    seed: int = 1
    root_label: str = "root"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; choose from {', '.join(MODES)}")
        if self.mode not in SUPPORTED_MODES:
            raise ConfigError(f"mode {self.mode!r} needs a separate segmenter and is not supported")
        for name in ("embedding_dim", "hidden_dim", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.window < 0 or self.learning_rate <= 0 or self.clip_norm <= 0:
            raise ConfigError("window, learning_rate and clip_norm must be positive")

    @classmethod
    def from_text(cls, text: str, **overrides) -> "TrainConfig":
        """Parse ``key = value`` (or ``key: value``) lines; ``#`` starts a comment."""
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            sep = "=" if "=" in line else ":"
            if sep not in line:
                raise ConfigError(f"line {lineno}: expected key = value")
            key, value = (x.strip() for x in line.split(sep, 1))
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            values[key] = _coerce(types[key], value, lineno)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @classmethod
    def load(cls, path, **overrides) -> "TrainConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read(), **overrides)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def c2f(self) -> bool:
        return self.mode == "latent-c2f"


def _coerce(kind, value: str, lineno: int):
    kind = {"int": int, "float": float, "str": str}.get(kind, kind)
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value {value!r}") from None


# ---------------------------------------------------------------------------
# scorers


class ScorerContract(Protocol):
    """Maps a batch of sentences to arc and label scores.

    ``score`` returns ``(arc, labels)`` where ``arc`` is ``[B, N, N]`` or, for
    coarse-to-fine scorers, a pair ``(intra, inter)`` of such tensors, and
    ``labels`` is ``[B, N, N, L]``.  Gradients accumulate in the tensors
    returned by ``parameters()``.
    """

    c2f: bool

    def score(self, sentences: Sequence[CharSentence]): ...

    def parameters(self): ...


class Vocab:
    def __init__(self, chars: Sequence[str]):
        self.chars = tuple(chars)
        self._index = {c: i + 3 for i, c in enumerate(self.chars)}

    @classmethod
    def build(cls, sentences: Sequence[CharSentence]) -> "Vocab":
        return cls(sorted({c for s in sentences for c in s.chars}))

    def __len__(self) -> int:
        return len(self.chars) + 3

    def encode(self, sentences: Sequence[CharSentence]) -> tuple[torch.Tensor, list[int]]:
        lens = [s.n for s in sentences]
        ids = torch.full((len(sentences), max(lens) + 1), PAD, dtype=torch.long)
        for b, s in enumerate(sentences):
            ids[b, 0] = ROOT_ID
            ids[b, 1:s.n + 1] = torch.tensor([self._index.get(c, UNK) for c in s.chars])
        return ids, lens


class ReferenceScorer(nn.Module):
    """Window features over character embeddings feeding biaffine arc and label scorers."""

    def __init__(self, vocab: Vocab, labels: LabelSet, embedding_dim: int = 32,
                 hidden_dim: int = 64, window: int = 2, c2f: bool = False):
        super().__init__()
        self.vocab, self.labels, self.window, self.c2f = vocab, labels, window, c2f
        d_in = (2 * window + 1) * embedding_dim
        self.embed = nn.Embedding(len(vocab), embedding_dim)
        self.head_mlp = nn.Linear(d_in, hidden_dim)
        self.mod_mlp = nn.Linear(d_in, hidden_dim)
        n_arc = 2 if c2f else 1
        self.arc = nn.Parameter(torch.empty(n_arc, hidden_dim + 1, hidden_dim))
        self.lab = nn.Parameter(torch.empty(len(labels), hidden_dim + 1, hidden_dim + 1))
        nn.init.normal_(self.embed.weight, std=0.5)
        nn.init.normal_(self.arc, std=0.1)
        nn.init.normal_(self.lab, std=0.1)

    def features(self, ids: torch.Tensor):
        k = self.window
        win = F.pad(ids, (k, k), value=PAD).unfold(1, 2 * k + 1, 1)
        x = self.embed(win).flatten(2)
        head = torch.tanh(self.head_mlp(x))
        mod = torch.tanh(self.mod_mlp(x))
        return head, mod

    def score(self, sentences: Sequence[CharSentence]):
        ids, lens = self.vocab.encode(sentences)
        head, mod = self.features(ids)
        ones = head.new_ones(head.shape[:-1] + (1,))
        head1 = torch.cat([head, ones], -1)
        mod1 = torch.cat([mod, ones], -1)
        arcs = torch.einsum("bhx,rxy,bmy->rbhm", head1, self.arc, mod)
        labels = torch.einsum("bhx,lxy,bmy->bhml", head1, self.lab, mod1)
        arc = (arcs[0], arcs[1]) if self.c2f else arcs[0]
        return arc, labels, lens


class ConstantScorer:
    """Parameter-free scorer: every arc gets ``arc_value``, labels are uniform."""

    c2f = False

    def __init__(self, labels: LabelSet, arc_value: float = 0.0):
        self.labels = labels
        self.arc_value = arc_value

    def score(self, sentences: Sequence[CharSentence]):
        lens = [s.n for s in sentences]
        size = max(lens) + 1
        arc = torch.full((len(sentences), size, size), self.arc_value, dtype=torch.float64)
        labels = torch.zeros((len(sentences), size, size, len(self.labels)), dtype=torch.float64)
        return arc, labels, lens

    def parameters(self):
        return []


# ---------------------------------------------------------------------------
# training


@dataclass
class Batch:
    sentences: list[CharSentence]
    specs: list[ForestSpec]
    label_idx: torch.Tensor


def forest_for(gold: WordTree, mode: str) -> ForestSpec:
    if mode in ("leftward", "rightward"):
        return pseudo_forest(gold, mode)
    return word_tree_to_forest(gold)


def make_batch(examples: Sequence[Example], labels: LabelSet, mode: str) -> Batch:
    size = max(ex.sentence.n for ex in examples) + 1
    specs = [forest_for(ex.tree, mode) for ex in examples]
    idx = np.stack([gold_label_index(ex.tree, labels, sp, size) for ex, sp in zip(examples, specs)])
    return Batch([ex.sentence for ex in examples], specs, torch.as_tensor(idx))


def batch_loss(scorer, batch: Batch) -> torch.Tensor:
    arc, lab, lens = scorer.score(batch.sentences)
    if getattr(scorer, "c2f", False):
        s_intra, s_inter = arc
        losses = batch_forest_loss(s_inter, lab, lens, batch.specs, batch.label_idx, s_intra)
    else:
        losses = batch_forest_loss(arc, lab, lens, batch.specs, batch.label_idx)
    return losses.mean()


@dataclass
class TrainResult:
    model: "Model"
    loss_trace: list[float]
    skipped: int
    history: list[dict] = field(default_factory=list)


def build_labels(examples: Sequence[Example], root_label: str = "root") -> LabelSet:
    return LabelSet.build((l for ex in examples for l in ex.tree.labels[1:] if l is not None),
                          root=root_label)


def train(corpus: Sequence[Example], config: TrainConfig, dev: Sequence[Example] = (),
          on_epoch: Optional[Callable[[int, float, dict], None]] = None,
          scorer=None) -> TrainResult:
    """Minibatch gradient descent with clipping and per-epoch step decay."""
    torch.set_num_threads(1)
    torch.manual_seed(config.seed)
    kept = [ex for ex in corpus if ex.projective and ex.tree.is_projective()]
    skipped = len(corpus) - len(kept)
    if skipped:
        logger.warning("skipped %d non-projective sentences", skipped)
    if not kept:
        raise ConfigError("no projective training sentences")
    labels = build_labels(kept, config.root_label)
    vocab = Vocab.build([ex.sentence for ex in kept])
    if scorer is None:
        scorer = ReferenceScorer(vocab, labels, config.embedding_dim, config.hidden_dim,
                                 config.window, c2f=config.c2f).double()
    model = Model(config, vocab, labels, scorer)
    params = [p for p in scorer.parameters() if p.requires_grad]
    rng = np.random.default_rng(config.seed)
    lr = config.learning_rate
    trace, history = [], []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(kept))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            chunk = [kept[i] for i in order[start:start + config.batch_size]]
            batch = make_batch(chunk, labels, config.mode)
            loss = batch_loss(scorer, batch)
            if not params:
                total += float(loss.detach()) * len(chunk)
                continue
            for p in params:
                p.grad = None
            loss.backward()
            norm = float(torch.nn.utils.clip_grad_norm_(params, config.clip_norm))
            if not (math.isfinite(float(loss.detach())) and math.isfinite(norm)):
                raise TrainingDiverged(f"epoch {epoch}, batch at {start}: loss={float(loss.detach())}, "
                                       f"grad norm={norm}, lr={lr}")
            with torch.no_grad():
                for p in params:
                    p.add_(p.grad, alpha=-lr)
            total += float(loss.detach()) * len(chunk)
        trace.append(total / len(kept))
        lr *= config.lr_decay
        stats = {}
        if dev:
            parses = model.parse([ex.sentence for ex in dev])
            stats = evaluate_corpus([ex.tree for ex in dev], [p.word_tree for p in parses])
            history.append(stats)
        if on_epoch is not None:
            on_epoch(epoch, trace[-1], stats)
    return TrainResult(model, trace, skipped, history)


# ---------------------------------------------------------------------------
# model: parsing and persistence


@dataclass
class Parse:
    sentence: CharSentence
    char_tree: CharTree
    word_tree: WordTree


class Model:
    def __init__(self, config: TrainConfig, vocab: Vocab, labels: LabelSet, scorer):
        self.config, self.vocab, self.labels, self.scorer = config, vocab, labels, scorer

    @property
    def c2f(self) -> bool:
        return self.config.c2f

    def parse(self, sentences: Sequence[CharSentence],
              segmentations: Optional[Sequence[Segmentation]] = None,
              batch_size: int = 32) -> list[Parse]:
        """Decode sentences; with ``segmentations`` the words are fixed."""
        out = []
        for start in range(0, len(sentences), batch_size):
            chunk = list(sentences[start:start + batch_size])
            segs = None if segmentations is None else list(segmentations[start:start + batch_size])
            out.extend(self._parse_batch(chunk, segs))
        return out

    def _parse_batch(self, sentences, segs):
        if not sentences:
            return []
        with torch.no_grad():
            arc, lab, lens = self.scorer.score(sentences)
        results = []
        if segs is not None:
            specs = [ForestSpec(seg) for seg in segs]
            for sp, sent in zip(specs, sentences):
                if sp.n != sent.n:
                    raise ValueError("segmentation does not match sentence length")
            wid = spec_batch(specs, lens)
            s = merge_c2f_tensors(arc[0], arc[1], wid) if self.c2f else arc
            _, trees = batch_eisner(apply_spec_mask(s, specs), lens, wid)
            for b, heads in enumerate(trees):
                wordid = specs[b].word_ids
                roles = [None] + [chart.INTRA_ROLE if heads[m] and wordid[heads[m]] == wordid[m]
                                  else chart.INTER_ROLE for m in range(1, lens[b] + 1)]
                results.append((heads, roles))
        elif self.c2f:
            _, results = batch_c2f_eisner(arc[0], arc[1], lens)
        else:
            _, trees = batch_eisner(arc, lens)
            results = [(heads, None) for heads in trees]
        parses = []
        for b, (heads, roles) in enumerate(results):
            t = lab[b].numpy()
            ctree = label_decode(t, heads, self.labels, roles)
            wtree = recover_with_fallback(ctree, t, self.labels)
            parses.append(Parse(sentences[b], ctree, wtree))
        return parses

    # persistence ---------------------------------------------------------

    def to_json(self, loss_trace: Sequence[float] = ()) -> str:
        params = {name: {"shape": list(p.shape), "data": p.detach().reshape(-1).tolist()}
                  for name, p in self.scorer.state_dict().items()}
        doc = {
            "format": "chardep-model/1",
            "config": self.config.to_dict(),
            "vocab": list(self.vocab.chars),
            "labels": list(self.labels.labels),
            "root_label": self.labels.root,
            "params": params,
            "loss_trace": list(loss_trace),
        }
        return json.dumps(doc, ensure_ascii=False, sort_keys=True) + "\n"

    def save(self, path, loss_trace: Sequence[float] = ()) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_json(loss_trace))

    @classmethod
    def from_json(cls, text: str) -> "Model":
        doc = json.loads(text)
        if doc.get("format") != "chardep-model/1":
            raise ValueError("not a chardep model file")
        config = TrainConfig(**doc["config"])
        vocab = Vocab(doc["vocab"])
        labels = LabelSet(tuple(doc["labels"]), root=doc["root_label"])
        scorer = ReferenceScorer(vocab, labels, config.embedding_dim, config.hidden_dim,
                                 config.window, c2f=config.c2f).double()
        state = {name: torch.tensor(v["data"], dtype=torch.float64).reshape(v["shape"])
                 for name, v in doc["params"].items()}
        scorer.load_state_dict(state)
        return cls(config, vocab, labels, scorer)

    @classmethod
    def load(cls, path) -> "Model":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())

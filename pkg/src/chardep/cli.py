"""Command line entry point: ``chardep {train,parse,evaluate,analyze,selfcheck,toy}``."""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Optional, Sequence

from .convert import intra_structures
from .core import CharSentence, Segmentation
from .io import (DataError, ensure_parent, format_char_tree, format_conll, read_char_tree,
                 read_conll, read_intra_annotations, write_conll)
from .metrics import (DEFAULT_PUNCT, evaluate_corpus, format_report, format_shape,
                      structure_cm, structure_distribution)
from .training import MODES, ConfigError, Model, TrainConfig, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chardep", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train the reference scorer")
    p.add_argument("--config", help="key = value training config")
    p.add_argument("--train", required=True, help="CoNLL training corpus")
    p.add_argument("--dev", help="CoNLL dev corpus, evaluated after every epoch")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", required=True, help="model file to write")

    p = sub.add_parser("parse", help="parse sentences with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True,
                   help="raw text (one sentence per line) or CoNLL with --gold-seg")
    p.add_argument("--output", required=True, help="recovered word trees (CoNLL)")
    p.add_argument("--char-output", help="char trees (default: OUTPUT.chars)")
    p.add_argument("--gold-seg", action="store_true",
                   help="read CoNLL input and keep its segmentation")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("evaluate", help="score predicted word trees against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--punct-labels", default=",".join(sorted(DEFAULT_PUNCT)),
                   help="comma-separated labels treated as punctuation")

    p = sub.add_parser("analyze", help="intra-word structure statistics")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", nargs="+", help="models decoded with gold segmentation")
    src.add_argument("--pred", nargs="+", help="char tree files aligned with the gold file")
    p.add_argument("--gold-seg", required=True, help="CoNLL file giving the segmentation")
    p.add_argument("--annotations", help="intra-word structure annotations")
    p.add_argument("--cm", action="store_true", help="report complete match (needs annotations)")
    p.add_argument("--table", help="also write the histogram as a TSV file")

    p = sub.add_parser("selfcheck", help="compare the charts with exhaustive enumeration")
    p.add_argument("--max-n", type=int, default=8)
    p.add_argument("--seeds", type=int, default=100, help="random instances per length")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mutate", choices=["sign-flip"], help=argparse.SUPPRESS)

    p = sub.add_parser("toy", help="write the synthetic toy treebank")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--train-size", type=int, default=200)
    p.add_argument("--test-size", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    return parser


# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    overrides = dict(mode=args.mode, seed=args.seed, epochs=args.epochs)
    config = (TrainConfig.load(args.config, **overrides) if args.config
              else TrainConfig(**{k: v for k, v in overrides.items() if v is not None}))
    corpus = read_conll(args.train)
    dev = read_conll(args.dev) if args.dev else []

    def report(epoch, loss, stats):
        line = f"epoch {epoch} loss {loss:.6f}"
        if stats:
            line += f" dev UF {stats['UF']:.4f} LF {stats['LF']:.4f} F1_seg {stats['F1_seg']:.4f}"
        print(line, flush=True)

    result = train(corpus, config, dev=dev, on_epoch=report)
    if result.skipped:
        print(f"skipped {result.skipped} non-projective sentences")
    ensure_parent(args.out)
    result.model.save(args.out, result.loss_trace)
    return EXIT_OK


def _read_text(path) -> list[CharSentence]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            text = "".join(line.split())
            if text:
                out.append(CharSentence.from_text(text))
    return out


def _parse_chunk(model_json: str, texts: list[str], spans: Optional[list]):
    model = Model.from_json(model_json)
    sents = [CharSentence.from_text(t) for t in texts]
    segs = None if spans is None else [Segmentation(tuple(map(tuple, s))) for s in spans]
    return [(format_conll(p.sentence, p.word_tree), format_char_tree(p.sentence, p.char_tree))
            for p in model.parse(sents, segs)]


def parse_corpus(model_path, sentences, segs=None, jobs: int = 1) -> list[tuple[str, str]]:
    with open(model_path, encoding="utf-8") as fh:
        model_json = fh.read()
    texts = [s.text for s in sentences]
    spans = None if segs is None else [seg.spans for seg in segs]
    if jobs <= 1 or len(texts) < 2:
        return _parse_chunk(model_json, texts, spans)
    size = -(-len(texts) // jobs)
    chunks = [(texts[i:i + size], None if spans is None else spans[i:i + size])
              for i in range(0, len(texts), size)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = pool.map(_parse_chunk, [model_json] * len(chunks), *zip(*chunks))
        return [row for part in parts for row in part]


def cmd_parse(args) -> int:
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    if args.gold_seg:
        examples = read_conll(args.input)
        sentences = [ex.sentence for ex in examples]
        segs = [ex.tree.segmentation for ex in examples]
    else:
        sentences, segs = _read_text(args.input), None
    Model.load(args.model)  # fail early on a bad model file
    rows = parse_corpus(args.model, sentences, segs, args.jobs)
    char_out = args.char_output or f"{args.output}.chars"
    ensure_parent(args.output)
    ensure_parent(char_out)
    with open(args.output, "w", encoding="utf-8", newline="\n") as fw, \
            open(char_out, "w", encoding="utf-8", newline="\n") as fc:
        for word_block, char_block in rows:
            fw.write(word_block)
            fc.write(char_block)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    gold = read_conll(args.gold)
    pred = read_conll(args.pred)
    if len(gold) != len(pred):
        raise DataError(args.pred, None, f"{len(pred)} sentences, gold has {len(gold)}")
    for k, (g, p) in enumerate(zip(gold, pred), 1):
        if g.sentence != p.sentence:
            raise DataError(args.pred, None, f"sentence {k} text differs from gold")
    punct = frozenset(x for x in args.punct_labels.split(",") if x)
    stats = evaluate_corpus([ex.tree for ex in gold], [ex.tree for ex in pred], punct)
    stats.setdefault("UAS", "n/a")
    stats.setdefault("LAS", "n/a")
    sys.stdout.write(format_report(stats))
    return EXIT_OK


def cmd_analyze(args) -> int:
    if args.cm and not args.annotations:
        raise UsageError("--cm needs --annotations")
    gold = read_conll(args.gold_seg)
    segs = [ex.tree.segmentation for ex in gold]
    runs = []
    if args.model:
        for path in args.model:
            model = Model.load(path)
            runs.append([p.char_tree.heads for p in model.parse([ex.sentence for ex in gold], segs)])
    else:
        for path in args.pred:
            trees = read_char_tree(path)
            if len(trees) != len(gold):
                raise DataError(path, None, f"{len(trees)} sentences, gold has {len(gold)}")
            runs.append([t.heads for _, t in trees])
    shapes = [[shape for heads, seg in zip(run, segs) for shape in intra_structures(heads, seg)]
              for run in runs]
    ann = read_intra_annotations(args.annotations) if args.annotations else None
    gold_shapes = None
    if ann is not None:
        gold_shapes = [ann.lookup(s, w, form)
                       for s, ex in enumerate(gold, 1)
                       for w, form in enumerate(ex.forms, 1)]
        gold_shapes = [g if g is not None and len(g) > 1 else None for g in gold_shapes]

    table = []
    values = {}
    for r, run in enumerate(shapes, 1):
        subsets = [("all", run)]
        if gold_shapes is not None:
            subsets.append(("annotated", [s for s, g in zip(run, gold_shapes) if g is not None]))
        for subset, items in subsets:
            for length, dist in structure_distribution(items).items():
                for shape, pct in dist.items():
                    key = f"run{r}.{subset}.len{length}.{format_shape(shape)}"
                    values[key] = pct
                    table.append(f"{r}\t{subset}\t{length}\t{format_shape(shape)}\t{pct:.4f}")
    if args.cm:
        values["CM"] = structure_cm(shapes, gold_shapes, "one-to-one")
        values["CM_M-1"] = structure_cm(shapes, gold_shapes, "many-to-one")
    sys.stdout.write(format_report(values))
    if args.table:
        ensure_parent(args.table)
        with open(args.table, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("run\tsubset\tlength\tshape\tpercent\n")
            fh.writelines(line + "\n" for line in table)
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    from . import chart
    from .oracle import MAX_N, selfcheck

    if not 1 <= args.max_n <= MAX_N:
        raise UsageError(f"--max-n must be within 1..{MAX_N}")
    inside_fn = None
    if args.mutate == "sign-flip":
        inside_fn = lambda s: -chart.inside(s)  # noqa: E731
    report = selfcheck(args.max_n, args.seeds, seed=args.seed, inside_fn=inside_fn)
    print(f"checks: {report.checks}")
    print(f"failures: {len(report.failures)}")
    for line in report.failures[:10]:
        print(f"counterexample: {line}")
    return EXIT_OK if report.ok else EXIT_CHECK


def cmd_toy(args) -> int:
    from .toy import toy_split

    train_set, test_set = toy_split(args.train_size, args.test_size, args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    write_conll(os.path.join(args.out_dir, "train.conll"),
                [(ex.sentence, ex.tree) for ex in train_set])
    write_conll(os.path.join(args.out_dir, "test.conll"),
                [(ex.sentence, ex.tree) for ex in test_set])
    with open(os.path.join(args.out_dir, "test.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(ex.sentence.text + "\n" for ex in test_set)
    return EXIT_OK


COMMANDS = {"train": cmd_train, "parse": cmd_parse, "evaluate": cmd_evaluate,
            "analyze": cmd_analyze, "selfcheck": cmd_selfcheck, "toy": cmd_toy}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as err:
        print(f"chardep: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ConfigError, OSError, ValueError) as err:
        print(f"chardep: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

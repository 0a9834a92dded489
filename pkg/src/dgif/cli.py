"""Command-line entry point: ``dgif {train,eval,predict,gen-data,inspect}``."""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from .config import load_config
from .data_io import SyntheticSpec, generate_synthetic, parse_corpus, write_corpus
from .errors import DGIFError
from .io_utils import atomic_write_text

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

# flag -> TrainConfig field
_OVERRIDES = {
    "seed": "seed", "epochs": "epochs", "lr": "lr", "delta": "delta", "window": "window",
    "gat_layers": "gat_layers", "alpha": "alpha", "beta": "beta", "gamma": "gamma", "lambda_": "lam",
    "disable_lar": "disable_lar", "disable_lsi": "disable_lsi", "disable_gil": "disable_gil",
    "teacher_forcing": "teacher_forcing",
}


class UsageError(Exception):
    pass


def _config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration (flags override --config)")
    g.add_argument("--config", type=Path, help="flat key=value config file")
    g.add_argument("--seed", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--lr", type=float)
    g.add_argument("--delta", type=float, help="relevance threshold (default 1/n per utterance)")
    g.add_argument("--window", type=int)
    g.add_argument("--gat-layers", type=int)
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--gamma", type=float)
    g.add_argument("--lambda", dest="lambda_", type=float)
    for name in ("lar", "lsi", "gil"):
        g.add_argument(f"--disable-{name}", action="store_const", const=True, default=None)
    g.add_argument("--teacher-forcing", action=argparse.BooleanOptionalAction, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dgif", description="Joint multi-intent detection and slot filling.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--train", type=Path, required=True, help="training corpus")
    p.add_argument("--val", type=Path, help="validation corpus (default: the training corpus)")
    p.add_argument("--checkpoint", type=Path, required=True, help="output checkpoint directory")
    p.add_argument("--verbalize", type=Path, help="word override file for label verbalization")
    _config_flags(p)

    p = sub.add_parser("eval", help="score predictions or a checkpoint against a gold corpus")
    p.add_argument("--data", type=Path, required=True, help="gold corpus")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint", type=Path)
    src.add_argument("--pred", type=Path, help="prediction dump in corpus format")
    p.add_argument("--out", type=Path, help="also write the report here")

    p = sub.add_parser("predict", help="write a prediction dump")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True, help="corpus whose tokens are labeled")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic corpus and its grammar manifest")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--intents", type=int, default=5)
    p.add_argument("--slot-types", type=int, default=2, help="slot types per intent")
    p.add_argument("--templates", type=int, default=3, help="templates per intent")
    p.add_argument("--samples", type=int, default=200, help="training samples")
    p.add_argument("--test-samples", type=int, default=50)
    p.add_argument("--max-intents", type=int, default=2)

    p = sub.add_parser("inspect", help="dump relevance and attention matrices for one utterance")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--utterance", required=True, help="whitespace-separated tokens")
    p.add_argument("--out", type=Path, required=True, help="output directory for CSV files")
    return parser


def _load_corpus(path: Path):
    if not path.is_file():
        raise UsageError(f"no such corpus file: {path}")
    return parse_corpus(path)


def _checkpoint(path: Path):
    from .checkpoint import load_checkpoint
    if not path.is_dir():
        raise UsageError(f"no such checkpoint directory: {path}")
    return load_checkpoint(path)


def cmd_train(args) -> int:
    from .label_space import load_overrides
    from .training import train

    if args.config is not None and not args.config.is_file():
        raise UsageError(f"no such config file: {args.config}")
    overrides = {field: getattr(args, flag) for flag, field in _OVERRIDES.items()}
    config = load_config(args.config, overrides)
    train_set = _load_corpus(args.train)
    val_set = _load_corpus(args.val) if args.val else None
    words = load_overrides(args.verbalize) if args.verbalize else None
    result = train(train_set, config, val_set, overrides=words, checkpoint_dir=args.checkpoint,
                   on_epoch=lambda e: print(e.line(), flush=True))
    atomic_write_text(args.checkpoint / "train_log.txt", result.log_text())
    print(f"best_epoch={result.best_epoch} best_overall_acc={result.best_overall!r} checkpoint={args.checkpoint}")
    return 0


def cmd_eval(args) -> int:
    from .evaluation import evaluate

    gold = _load_corpus(args.data)
    if args.pred is not None:
        pred = _load_corpus(args.pred)
        if [p.tokens for p in pred] != [g.tokens for g in gold]:
            raise UsageError("prediction dump does not align with the gold corpus tokens")
    else:
        pred = _checkpoint(args.checkpoint).predict(gold)
    report = evaluate(gold, pred)
    text = report.table() + "\n\n" + report.key_values() + "\n"
    sys.stdout.write(text)
    if args.out is not None:
        atomic_write_text(args.out, text)
    return 0


def cmd_predict(args) -> int:
    model = _checkpoint(args.checkpoint)
    preds = model.predict(_load_corpus(args.data))
    write_corpus(args.out, preds)
    print(f"wrote {len(preds)} predictions to {args.out}")
    return 0


def cmd_gen_data(args) -> int:
    if args.samples < 1 or args.test_samples < 0:
        raise UsageError("--samples must be >= 1 and --test-samples >= 0")
    spec = SyntheticSpec(intents=args.intents, slot_types_per_intent=args.slot_types,
                         templates_per_intent=args.templates, samples=args.samples + args.test_samples,
                         max_intents=args.max_intents, seed=args.seed)
    corpus = generate_synthetic(spec)
    train_part, test_part = corpus.samples[: args.samples], corpus.samples[args.samples :]
    write_corpus(args.out / "train.txt", train_part)
    if test_part:
        write_corpus(args.out / "test.txt", test_part)
    atomic_write_text(args.out / "manifest.txt", corpus.manifest())
    print(f"wrote {len(train_part)} train / {len(test_part)} test samples to {args.out}")
    return 0


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cmd_inspect(args) -> int:
    model = _checkpoint(args.checkpoint)
    tokens = tuple(args.utterance.lower().split())
    if not tokens:
        raise UsageError("empty utterance")
    f = model.forward(tokens, model.label_spaces())
    intents = [model.intents.names[i] for i in f.selected]
    print("intents: " + " ".join(intents))
    print("slots:   " + " ".join(model.slots.names[i] for i in f.slot_logits.data.argmax(axis=1)))
    if f.graph is None:
        rel = f.attention.data
        atomic_write_text(args.out / "attention.csv",
                          _csv(["token"] + intents, ([t] + list(map(repr, r)) for t, r in zip(tokens, rel))))
        print(f"graph disabled; wrote token->intent attention to {args.out / 'attention.csv'}")
        return 0
    rel = f.graph.relevance
    atomic_write_text(args.out / "relevance.csv",
                      _csv(["token"] + intents, ([t] + list(map(repr, r)) for t, r in zip(tokens, rel))))
    nodes = [f"intent:{n}" for n in intents] + [f"token{i}:{t}" for i, t in enumerate(tokens)]
    for layer, alpha in enumerate(f.gat.alphas):
        atomic_write_text(args.out / f"alpha_layer{layer}.csv",
                          _csv(["node"] + nodes, ([n] + list(map(repr, r)) for n, r in zip(nodes, alpha))))
    print(f"wrote relevance.csv and {len(f.gat.alphas)} attention matrices to {args.out}")
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "predict": cmd_predict,
            "gen-data": cmd_gen_data, "inspect": cmd_inspect}


def _configure_logging() -> None:
    raw = os.environ.get("DGIF_LOG_LEVEL", "info").strip().lower()
    if raw not in LOG_LEVELS:
        raise UsageError(f"DGIF_LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}, got {raw!r}")
    logging.basicConfig(level=LOG_LEVELS[raw], stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def run(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv`` and run one command; returns the process exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return int(exc.code or 0)
    try:
        _configure_logging()
        return COMMANDS[args.command](args)
    except (UsageError, DGIFError, OSError, UnicodeDecodeError) as exc:
        print(f"dgif {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print(f"dgif {args.command}: interrupted", file=sys.stderr)
        return 130


def main() -> None:
    sys.exit(run())

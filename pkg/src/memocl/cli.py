"""Command-line entry point: train, adapt, evaluate, report, fixture.

Exit codes: 0 success, 2 usage or configuration error, 1 runtime failure.
Outputs go to ``--out`` or, when omitted, to ``$MEMOCL_OUT`` (default
``runs``).  Every command writes a ``manifest.json`` next to its outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, baselines, runner
from .adapt import CONTINUAL, EPISODIC, AdaptConfig
from .augment import AugmenterSet, load_augmenter_set, load_word_vectors
from .data import apply_shift, load_dataset, load_shift_spec, split_words
from .errors import InvalidInputError, ParseError, ValidationError
from .model import Vocabulary, init_params, load_checkpoint, predict, save_checkpoint, train_source

OUT_ENV = "MEMOCL_OUT"
DEFAULT_OUT = "runs"
CHECKPOINT_FILE = "checkpoint.json"
OUTCOMES_FILE = "outcomes.jsonl"
REPORT_TEXT = "report.txt"
REPORT_JSON = "report.json"
MANIFEST_FILE = "manifest.json"


class UsageError(Exception):
    """Bad flags or unreadable inputs; maps to exit code 2."""


# -- helpers -----------------------------------------------------------------


def _existing(path: str | None, what: str) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {path}")
    return p


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _manifest(command: str, args, inputs: dict, outputs: list[str], extra: dict | None = None) -> dict:
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out")}
    manifest = {
        "command": command,
        "version": __version__,
        "flags": flags,
        "inputs": {k: {"path": str(p), "sha256": _sha256(p)} for k, p in sorted(inputs.items()) if p},
        "outputs": outputs,
    }
    if extra:
        manifest.update(extra)
    return manifest


def _add_out(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")


def _add_stream_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--checkpoint", required=True, help="model checkpoint written by 'train'")
    p.add_argument("--data", required=True, help="test dataset (.jsonl)")
    p.add_argument("--shift", help="shift spec applied to the test data before streaming")
    p.add_argument("--lexicon", help="synonym lexicon (.tsv)")
    p.add_argument("--vectors", help="word-vector table (.txt)")
    p.add_argument("--rules", help="paraphrase rules (.tsv)")
    p.add_argument("--rate", type=float, default=0.3, help="per-token replacement rate (default 0.3)")
    p.add_argument("--knn", type=int, default=3, help="neighbours considered by the embedding augmenter")
    p.add_argument("--num-aug", type=int, default=20, help="augmentations per sample (default 20)")
    p.add_argument("--seed", type=int, nargs="+", default=[0], help="stream seeds, one run each")


def _load_stream_inputs(args):
    paths = {
        "checkpoint": _existing(args.checkpoint, "checkpoint"),
        "data": _existing(args.data, "dataset"),
        "shift": _existing(args.shift, "shift spec"),
        "lexicon": _existing(args.lexicon, "lexicon"),
        "vectors": _existing(args.vectors, "word-vector table"),
        "rules": _existing(args.rules, "rule file"),
    }
    vocab, params = load_checkpoint(paths["checkpoint"])
    ds = load_dataset(paths["data"])
    if paths["shift"]:
        ds = apply_shift(ds, load_shift_spec(paths["shift"]))
    augs = load_augmenter_set(paths["lexicon"], paths["vectors"], paths["rules"], args.rate, args.knn)
    return paths, vocab, params, ds, augs


# -- commands ----------------------------------------------------------------


def cmd_train(args) -> int:
    paths = {
        "data": _existing(args.data, "dataset"),
        "extra_vocab": _existing(args.extra_vocab, "word-vector table"),
    }
    ds = load_dataset(paths["data"])
    words = [split_words(r.text) for r in ds.records]
    extra = list(load_word_vectors(paths["extra_vocab"]).words) if paths["extra_vocab"] else []
    vocab = Vocabulary.build([w for ws in words for w in ws] + extra)
    if args.dim < 1 or args.epochs < 0 or args.lr <= 0 or args.weight_decay < 0:
        raise UsageError("need --dim >= 1, --epochs >= 0, --lr > 0 and --weight-decay >= 0")
    p0 = init_params(len(vocab), args.dim, ds.num_classes, seed=args.seed, scale=args.init_scale)
    seqs = [vocab.encode(ws) for ws in words]
    labels = [r.label for r in ds.records]
    params = train_source(p0, seqs, labels, epochs=args.epochs, eta=args.lr, seed=args.seed,
                          batch_size=args.batch_size, weight_decay=args.weight_decay)
    acc = float(np.mean([predict(params, s) == y for s, y in zip(seqs, labels)]))

    out = _out_dir(args)
    save_checkpoint(out / CHECKPOINT_FILE, vocab, params)
    runner.write_manifest(out / MANIFEST_FILE, _manifest(
        "train", args, paths, [CHECKPOINT_FILE], {"train_accuracy": acc, "vocab_size": len(vocab)}))
    print(f"trained on {len(seqs)} samples, accuracy {acc:.4f}, wrote {out / CHECKPOINT_FILE}")
    return 0


def cmd_adapt(args) -> int:
    try:
        cfg = AdaptConfig(
            delta=args.delta, num_aug=args.num_aug, eta=args.lr, optimizer=args.optimizer,
            mode=EPISODIC if args.mode == "memo" else CONTINUAL, smf_enabled=args.smf == "on",
            max_attempts=args.max_attempts, steps_per_sample=args.steps,
        )
    except InvalidInputError as exc:
        raise UsageError(f"invalid adaptation config: {exc}") from None
    paths, vocab, params, ds, augs = _load_stream_inputs(args)
    rows = []
    for seed in args.seed:
        seed_rows, _ = runner.run_adapt(params, vocab, ds, cfg, augs, seed)
        rows.extend(seed_rows)

    out = _out_dir(args)
    runner.write_jsonl(out / OUTCOMES_FILE, rows)
    runner.write_manifest(out / MANIFEST_FILE, _manifest(
        "adapt", args, paths, [OUTCOMES_FILE],
        {"method": runner.adapt_method_name(cfg), "config": cfg.to_dict(), "augmenters": augs.describe()}))
    print(f"{runner.adapt_method_name(cfg)}: {len(rows)} outcomes over seeds {args.seed}, wrote {out / OUTCOMES_FILE}")
    return 0


def cmd_evaluate(args) -> int:
    if args.method not in runner.EVAL_METHODS:
        raise UsageError(f"unknown method {args.method!r}; valid methods: {', '.join(runner.EVAL_METHODS)}")
    if args.num_aug < 1:
        raise UsageError("--num-aug must be >= 1")
    if args.method == "tta-weighted" and not args.calib:
        raise UsageError("tta-weighted needs a calibration split (--calib)")
    paths, vocab, params, ds, augs = _load_stream_inputs(args)
    paths["calib"] = _existing(args.calib, "calibration dataset")
    calib = load_dataset(paths["calib"]) if paths["calib"] else None

    rows, fitted = [], {}
    for seed in args.seed:
        weights = None
        if args.method == "tta-weighted":
            pool, labels = runner.calibration_pool(params, vocab, calib, augs, args.num_aug, seed)
            weights = baselines.fit_class_weights(pool, labels, seed=seed)
            fitted[str(seed)] = [float(w) for w in weights]
        rows.extend(runner.run_evaluate(params, vocab, ds, args.method, augs, args.num_aug, seed, weights))

    out = _out_dir(args)
    runner.write_jsonl(out / OUTCOMES_FILE, rows)
    extra = {"method": args.method, "augmenters": augs.describe()}
    if fitted:
        extra["class_weights"] = fitted
    runner.write_manifest(out / MANIFEST_FILE, _manifest("evaluate", args, paths, [OUTCOMES_FILE], extra))
    print(f"{args.method}: {len(rows)} predictions over seeds {args.seed}, wrote {out / OUTCOMES_FILE}")
    return 0


def cmd_report(args) -> int:
    paths = {f"log{i}": _existing(p, "outcome log") for i, p in enumerate(args.logs)}
    rows = []
    for p in paths.values():
        try:
            rows.extend(runner.read_jsonl(p))
        except json.JSONDecodeError as exc:
            raise UsageError(f"{p}: not a JSONL outcome log ({exc})") from None
    summary = runner.summarize(rows, args.num_groups)
    table = runner.format_report(summary)

    out = _out_dir(args)
    (out / REPORT_TEXT).write_text(table, encoding="utf-8")
    (out / REPORT_JSON).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    runner.write_manifest(out / MANIFEST_FILE, _manifest("report", args, paths, [REPORT_TEXT, REPORT_JSON]))
    sys.stdout.write(table)
    return 0


def cmd_fixture(args) -> int:
    from .synthetic import build_fixture, write_fixture

    out = _out_dir(args)
    paths = write_fixture(build_fixture(), out)
    runner.write_manifest(out / MANIFEST_FILE, _manifest(
        "fixture", args, {}, sorted(p.name for p in paths.values())))
    print(f"wrote fixture files to {out}")
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memocl", description="Test-time adaptation by marginal entropy minimisation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a source model and write a checkpoint")
    p.add_argument("--data", required=True, help="labeled training dataset (.jsonl)")
    p.add_argument("--extra-vocab", help="word-vector table whose words join the vocabulary")
    p.add_argument("--dim", type=int, default=16, help="embedding width (default 16)")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--weight-decay", type=float, default=0.003)
    p.add_argument("--init-scale", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    _add_out(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("adapt", help="adapt along a test stream (MEMO or MEMO-CL)")
    _add_stream_inputs(p)
    p.add_argument("--mode", choices=("memo", "memo-cl"), default="memo-cl",
                   help="memo resets weights per sample, memo-cl carries them forward")
    p.add_argument("--smf", choices=("on", "off"), default="on", help="semantic margin filtering")
    p.add_argument("--delta", type=float, default=0.1, help="filter margin (default 0.1)")
    p.add_argument("--lr", type=float, default=1e-4, help="adaptation learning rate (default 1e-4)")
    p.add_argument("--optimizer", choices=("sgd", "adam"), default="sgd")
    p.add_argument("--steps", type=int, default=1, help="updates per sample (default 1)")
    p.add_argument("--max-attempts", type=int, help="augmentation attempts per sample (default 10 * num-aug)")
    _add_out(p)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("evaluate", help="frozen-model baseline or test-time augmentation")
    _add_stream_inputs(p)
    p.add_argument("--method", default="baseline", help=f"one of {', '.join(runner.EVAL_METHODS)}")
    p.add_argument("--calib", help="labeled calibration split, required by tta-weighted")
    _add_out(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="summarise outcome logs into a comparison table")
    p.add_argument("logs", nargs="+", help="outcome logs (.jsonl) from adapt or evaluate")
    p.add_argument("--num-groups", type=int, default=8)
    _add_out(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("fixture", help="write the synthetic benchmark fixture")
    _add_out(p)
    p.set_defaults(func=cmd_fixture)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, InvalidInputError, ValidationError, ParseError, FileNotFoundError) as exc:
        print(f"memocl {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"memocl {args.command}: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

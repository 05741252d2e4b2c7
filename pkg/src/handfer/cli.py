"""Command-line entry point: ``handfer {train-expr,train-hand,evaluate,predict,edges}``.

Settings resolve as defaults < ``--config`` file < command-line flags. The
config file holds flat ``key = value`` lines; ``#`` starts a comment.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable

from . import imaging
from .dataset import ExpressionLabel, ManifestError, read_manifest, split
from .evaluation import ablation_report, format_report_csv, format_report_table
from .fusion import FusionMode
from .learner import (
    EXPRESSION,
    HAND,
    CheckpointError,
    ModelConfig,
    TrainConfig,
    format_history_csv,
    init_model,
    load_checkpoint,
    load_corpus,
    save_checkpoint,
    train,
)
from .pipeline import ExpressionClassifier, HandDetector, recognize

class CLIError(Exception):
    pass


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace("/", ",").split(",") if v.strip())


def _modes(text: str) -> list[FusionMode]:
    return [FusionMode.parse(m) for m in text.split(",") if m.strip()]


# key -> (parser, default)
SETTINGS: dict[str, tuple[Callable, object]] = {
    "learning_rate": (float, 5e-5),
    "weight_decay": (float, 1e-4),
    "epochs": (int, 20),
    "batch_size": (int, 32),
    "beta1": (float, 0.9),
    "beta2": (float, 0.999),
    "epsilon": (float, 1e-8),
    "freeze_fraction": (float, 0.8),
    "input_width": (int, 128),
    "input_height": (int, 128),
    "channels": (_int_list, (8, 8, 16, 16, 16)),
    "seed": (int, 0),
    "val_fraction": (float, 0.2),
    "train_manifest": (Path, None),
    "val_manifest": (Path, None),
    "pretrain_manifest": (Path, None),
    "out": (Path, Path(".")),
    "expr_ckpt": (Path, None),
    "hand_ckpt": (Path, None),
    "modes": (_modes, list(FusionMode)),
}


def read_config(path: Path) -> dict:
    if not path.is_file():
        raise CLIError(f"config file not found: {path}")
    values = {}
    for n, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise CLIError(f"{path}:{n}: expected 'key = value'")
        if key not in SETTINGS:
            raise CLIError(f"{path}:{n}: unknown key {key!r}")
        try:
            values[key] = SETTINGS[key][0](value.strip())
        except ValueError as exc:
            raise CLIError(f"{path}:{n}: bad value for {key}: {exc}") from None
    return values


def resolve(args: argparse.Namespace) -> dict:
    settings = {k: default for k, (_, default) in SETTINGS.items()}
    if args.config is not None:
        settings.update(read_config(args.config))
    settings.update({k: v for k, v in vars(args).items() if k in SETTINGS and v is not None})
    return settings


def _train_config(s: dict) -> TrainConfig:
    return TrainConfig(
        learning_rate=s["learning_rate"], weight_decay=s["weight_decay"], epochs=s["epochs"],
        batch_size=s["batch_size"], beta1=s["beta1"], beta2=s["beta2"], epsilon=s["epsilon"],
        freeze_fraction=s["freeze_fraction"], seed=s["seed"],
    )


def _manifest(path: Path | None, flag: str):
    if path is None:
        raise CLIError(f"{flag} is required")
    if not path.is_file():
        raise CLIError(f"manifest not found: {path}")
    return read_manifest(path)


def _checkpoint(path: Path | None, flag: str, head_classes: int):
    if path is None:
        raise CLIError(f"{flag} is required")
    if not path.is_file():
        raise CLIError(f"checkpoint not found: {path}")
    params = load_checkpoint(path)
    if params.config.head_classes != head_classes:
        raise CLIError(f"{path}: expected a {head_classes}-way head, found {params.config.head_classes}")
    return params


def _train(s: dict, task: str, prefix: str, pretrain: bool) -> int:
    entries, root = _manifest(s["train_manifest"], "--train-manifest")
    if task == HAND:
        unlabeled = [e for e in entries if e.hand is None]
        if unlabeled:
            raise CLIError(f"{s['train_manifest']}: line {unlabeled[0].line}: hand flag is '?' but train-hand needs labels")
    size = (s["input_width"], s["input_height"])
    if s["val_manifest"] is not None:
        val_entries, val_root = _manifest(s["val_manifest"], "--val-manifest")
    else:
        labels = [int(e.hand) for e in entries] if task == HAND else None
        entries, val_entries = split(entries, s["val_fraction"], s["seed"], labels=labels)
        val_root = root
    train_set = load_corpus(entries, root, task, size)
    val_set = load_corpus(val_entries, val_root, task, size) if val_entries else None
    pretrain_set = None
    if pretrain and s["pretrain_manifest"] is not None:
        pre_entries, pre_root = _manifest(s["pretrain_manifest"], "--pretrain-manifest")
        pretrain_set = load_corpus(pre_entries, pre_root, task, size)

    config = ModelConfig(size, s["channels"], 2 if task == HAND else 6, s["seed"])
    result = train(init_model(config), train_set, _train_config(s), val_set=val_set, pretrain_set=pretrain_set)
    out = s["out"]
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / f"{prefix}.ckpt", result.params)
    (out / f"{prefix}_history.csv").write_text(format_history_csv(result.history), encoding="utf-8")
    target = [h for h in result.history if h.phase != "pretrain"]
    if result.best_epoch:
        print(f"best epoch {result.best_epoch}: val macro-F1 {target[result.best_epoch - 1].val_macro_f1:.6f}")
    print(f"wrote {out / f'{prefix}.ckpt'}", file=sys.stderr)
    return 0


def cmd_train_expr(s: dict) -> int:
    return _train(s, EXPRESSION, "expr", pretrain=True)


def cmd_train_hand(s: dict) -> int:
    return _train(s, HAND, "hand", pretrain=False)


def cmd_evaluate(s: dict) -> int:
    modes = s["modes"]
    if not modes:
        raise CLIError("--modes selects no fusion mode")
    entries, root = _manifest(s["val_manifest"], "--val-manifest")
    expr = _checkpoint(s["expr_ckpt"], "--expr-ckpt", 6)
    hand = None
    if any(m.uses_hand for m in modes):
        if s["hand_ckpt"] is None:
            raise CLIError("hand-using fusion mode requested without --hand-ckpt")
        hand = HandDetector(_checkpoint(s["hand_ckpt"], "--hand-ckpt", 2), root)
    rows = ablation_report(entries, ExpressionClassifier(expr, root), hand, modes)
    out = s["out"]
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(format_report_csv(rows), encoding="utf-8")
    sys.stdout.write(format_report_table(rows))
    return 0


def _prob_line(probs) -> str:
    return " ".join(f"{label.token}={p:.6f}" for label, p in zip(ExpressionLabel, probs))


def cmd_predict(s: dict, image: Path, mode: FusionMode) -> int:
    if not image.is_file():
        raise CLIError(f"image not found: {image}")
    img = imaging.read_pgm(image)
    expr = _checkpoint(s["expr_ckpt"], "--expr-ckpt", 6)
    hand = _checkpoint(s["hand_ckpt"], "--hand-ckpt", 2) if mode.uses_hand else None
    r = recognize(img, expr, hand, mode)
    print(f"mode: {mode.value}")
    print(f"expression: {r.expression.token}")
    print(f"expression_probs: {_prob_line(r.expression_probs)}")
    if r.hand is None:
        print("hand: n/a")
    else:
        print(f"hand: {str(r.hand).lower()}")
        print(f"hand_prob: {r.hand_prob:.6f}")
    print(f"label: {r.label.token}")
    return 0


def cmd_edges(image: Path, out: Path) -> int:
    if not image.is_file():
        raise CLIError(f"image not found: {image}")
    edges = imaging.sobel_edges(imaging.read_pgm(image))
    try:
        imaging.write_pgm(out, imaging.edges_to_image(edges))
    except OSError as exc:
        raise CLIError(f"cannot write {out}: {exc.strerror}") from None
    print(f"wrote {out}", file=sys.stderr)
    return 0


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key = value settings file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def _training_flags(p: argparse.ArgumentParser, pretrain: bool) -> None:
    p.add_argument("--train-manifest", type=Path)
    p.add_argument("--val-manifest", type=Path)
    if pretrain:
        p.add_argument("--pretrain-manifest", type=Path, help="source corpus for the pretraining phase")
    p.add_argument("--val-fraction", type=float, help="held-out share when no --val-manifest is given")
    p.add_argument("--learning-rate", "--lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--freeze-fraction", type=float)
    p.add_argument("--input-width", type=int)
    p.add_argument("--input-height", type=int)
    p.add_argument("--channels", type=_int_list, help="comma-separated channels per conv block")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="handfer", description="Hand-assisted expression recognition")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-expr", help="train the 6-way expression classifier")
    _common(p)
    _training_flags(p, pretrain=True)

    p = sub.add_parser("train-hand", help="train the hand detector on Sobel edge maps")
    _common(p)
    _training_flags(p, pretrain=False)

    p = sub.add_parser("evaluate", help="macro-F1 report for each fusion mode")
    _common(p)
    p.add_argument("--expr-ckpt", type=Path)
    p.add_argument("--hand-ckpt", type=Path)
    p.add_argument("--val-manifest", type=Path)
    p.add_argument("--modes", type=_modes, help="comma-separated fusion modes (default: all)")

    p = sub.add_parser("predict", help="recognize a single PGM image")
    _common(p)
    p.add_argument("image", type=Path)
    p.add_argument("--expr-ckpt", type=Path)
    p.add_argument("--hand-ckpt", type=Path)
    p.add_argument("--mode", type=FusionMode.parse, default=FusionMode.HAND_OVERRIDE_EXCEPT_HAPPINESS)

    p = sub.add_parser("edges", help="export the Sobel edge map of a PGM image")
    _common(p)
    p.add_argument("image", type=Path)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        s = resolve(args)
        if args.command == "train-expr":
            return cmd_train_expr(s)
        if args.command == "train-hand":
            return cmd_train_hand(s)
        if args.command == "evaluate":
            return cmd_evaluate(s)
        if args.command == "predict":
            return cmd_predict(s, args.image, args.mode)
        if args.out is None:
            raise CLIError("edges needs --out PATH")
        return cmd_edges(args.image, args.out)
    except (CLIError, ManifestError, CheckpointError, imaging.PGMError, ValueError, OSError) as exc:
        print(f"handfer {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

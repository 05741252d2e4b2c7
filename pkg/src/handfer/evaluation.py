"""Confusion matrices, per-class F1 and the macro-F1 ablation report."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .dataset import ExpressionLabel, ManifestEntry
from .fusion import FusionMode, fuse_batch


@dataclass
class ConfusionMatrix:
    """``cells[t, p]`` counts samples with truth ``t`` predicted as ``p``."""

    cells: np.ndarray

    @property
    def k(self) -> int:
        return self.cells.shape[0]

    @property
    def total(self) -> int:
        return int(self.cells.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.k != other.k:
            raise ValueError(f"cannot merge {self.k}-class and {other.k}-class matrices")
        return ConfusionMatrix(self.cells + other.cells)


@dataclass
class F1Report:
    per_class: list[float]
    macro: float
    support: list[int]


def confusion(preds: Sequence[int], truths: Sequence[int], k: int) -> ConfusionMatrix:
    if len(preds) != len(truths):
        raise ValueError(f"length mismatch: {len(preds)} predictions, {len(truths)} truths")
    p = np.asarray(preds, dtype=np.int64).reshape(-1)
    t = np.asarray(truths, dtype=np.int64).reshape(-1)
    for name, arr in (("prediction", p), ("truth", t)):
        if arr.size and (arr.min() < 0 or arr.max() >= k):
            raise ValueError(f"{name} label out of range [0, {k})")
    cells = np.zeros((k, k), dtype=np.int64)
    np.add.at(cells, (t, p), 1)
    return ConfusionMatrix(cells)


def per_class_f1(cm: ConfusionMatrix, c: int) -> float:
    """F1 = 2TP / (2TP + FP + FN), or 0 when nothing was predicted or true for ``c``."""
    if not 0 <= c < cm.k:
        raise ValueError(f"class index {c} out of range")
    tp = int(cm.cells[c, c])
    fp = int(cm.cells[:, c].sum()) - tp
    fn = int(cm.cells[c, :].sum()) - tp
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def macro_f1(cm: ConfusionMatrix) -> F1Report:
    # Zero-support classes are included in the mean with F1 = 0.
    per_class = [per_class_f1(cm, c) for c in range(cm.k)]
    support = [int(s) for s in cm.cells.sum(axis=1)]
    return F1Report(per_class, sum(per_class) / cm.k, support)


def evaluate_labels(preds, truths, k: int) -> F1Report:
    return macro_f1(confusion(preds, truths, k))


@dataclass
class AblationRow:
    mode: FusionMode
    report: F1Report


ExpressionPredictor = Callable[[ManifestEntry], ExpressionLabel]
HandPredictor = Callable[[ManifestEntry], bool]


def ablation_report(
    entries: Sequence[ManifestEntry],
    expr_model: ExpressionPredictor,
    hand_model: Optional[HandPredictor],
    modes: Sequence[FusionMode],
) -> list[AblationRow]:
    """Score each fusion mode on the same set of predictions.

    Each model is called once per entry; only the fusion rule varies between
    rows.
    """
    modes = list(modes)
    if hand_model is None and any(m.uses_hand for m in modes):
        bad = ", ".join(m.value for m in modes if m.uses_hand)
        raise ValueError(f"fusion mode(s) {bad} need a hand model")
    truths = [int(e.expression) for e in entries]
    y_e = [ExpressionLabel(expr_model(e)) for e in entries]
    if hand_model is not None and any(m.uses_hand for m in modes):
        y_h = [bool(hand_model(e)) for e in entries]
    else:
        y_h = [False] * len(entries)
    rows = []
    for mode in modes:
        fused = fuse_batch(zip(y_e, y_h), mode)
        rows.append(AblationRow(mode, evaluate_labels([int(y) for y in fused], truths, len(ExpressionLabel))))
    return rows


def report_header() -> list[str]:
    names = [label.token for label in ExpressionLabel]
    return ["mode", "macro_f1"] + [f"f1_{n}" for n in names] + [f"support_{n}" for n in names]


def format_report_csv(rows: Sequence[AblationRow]) -> str:
    out = io.StringIO()
    out.write(",".join(report_header()) + "\n")
    for row in rows:
        r = row.report
        fields = [row.mode.value, f"{r.macro:.6f}"]
        fields += [f"{v:.6f}" for v in r.per_class]
        fields += [str(s) for s in r.support]
        out.write(",".join(fields) + "\n")
    return out.getvalue()


def format_report_table(rows: Sequence[AblationRow]) -> str:
    names = [label.token[:5] for label in ExpressionLabel]
    width = max([len(r.mode.value) for r in rows] + [4])
    lines = [f"{'mode':<{width}}  macro%  " + "  ".join(f"{n:>6}" for n in names)]
    for row in rows:
        r = row.report
        cells = "  ".join(f"{100 * v:6.1f}" for v in r.per_class)
        lines.append(f"{row.mode.value:<{width}}  {100 * r.macro:6.1f}  {cells}")
    return "\n".join(lines) + "\n"

"""Rule-based late fusion of the expression and hand classifiers."""

from __future__ import annotations

from enum import Enum
from typing import Iterable

from .dataset import ExpressionLabel


class FusionMode(Enum):
    EXPRESSION_ONLY = "expression-only"
    HAND_OVERRIDE = "hand-override"
    HAND_OVERRIDE_EXCEPT_HAPPINESS = "hand-override-except-happiness"

    @property
    def uses_hand(self) -> bool:
        return self is not FusionMode.EXPRESSION_ONLY

    @classmethod
    def parse(cls, name: str) -> "FusionMode":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown fusion mode {name!r} (expected one of: {valid})") from None


def fuse(y_e: ExpressionLabel, y_h: bool, mode: FusionMode) -> ExpressionLabel:
    """Combine an expression label with a hand flag.

    A detected hand turns the prediction into fear. Under
    ``HAND_OVERRIDE_EXCEPT_HAPPINESS`` a happiness prediction is trusted and
    left alone.
    """
    y_e = ExpressionLabel(y_e)
    if mode is FusionMode.EXPRESSION_ONLY or not y_h:
        return y_e
    if mode is FusionMode.HAND_OVERRIDE_EXCEPT_HAPPINESS and y_e == ExpressionLabel.HAPPINESS:
        return y_e
    return ExpressionLabel.FEAR


def fuse_batch(pairs: Iterable[tuple[ExpressionLabel, bool]], mode: FusionMode) -> list[ExpressionLabel]:
    return [fuse(y_e, y_h, mode) for y_e, y_h in pairs]

"""Two-classifier recognition: expression on the image, hand on its edge map."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import imaging
from .dataset import ExpressionLabel, ManifestEntry
from .fusion import FusionMode, fuse
from .learner import ModelParameters, expression_input, hand_input, predict_expression, predict_hand


@dataclass
class Recognition:
    expression: ExpressionLabel
    expression_probs: np.ndarray
    hand: Optional[bool]
    hand_prob: Optional[float]
    label: ExpressionLabel


def recognize(
    img: imaging.Image,
    expr_params: ModelParameters,
    hand_params: Optional[ModelParameters],
    mode: FusionMode,
) -> Recognition:
    y_e, probs = predict_expression(expr_params, expression_input(img, expr_params.config.input_size))
    if not mode.uses_hand:
        return Recognition(y_e, probs, None, None, y_e)
    if hand_params is None:
        raise ValueError(f"fusion mode {mode.value} needs a hand model")
    y_h, p_hand = predict_hand(hand_params, hand_input(img, hand_params.config.input_size))
    return Recognition(y_e, probs, y_h, p_hand, fuse(y_e, y_h, mode))


class ExpressionClassifier:
    """Maps manifest entries to expression labels by loading each image from ``root``."""

    def __init__(self, params: ModelParameters, root):
        self.params = params
        self.root = Path(root)

    def __call__(self, entry: ManifestEntry) -> ExpressionLabel:
        img = imaging.read_pgm(self.root / entry.path)
        return predict_expression(self.params, expression_input(img, self.params.config.input_size))[0]


class HandDetector:
    def __init__(self, params: ModelParameters, root):
        self.params = params
        self.root = Path(root)

    def __call__(self, entry: ManifestEntry) -> bool:
        img = imaging.read_pgm(self.root / entry.path)
        return predict_hand(self.params, hand_input(img, self.params.config.input_size))[0]

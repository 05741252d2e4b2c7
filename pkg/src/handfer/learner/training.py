"""Training loop, model selection and single-image prediction."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .. import imaging
from ..dataset import ExpressionLabel, ManifestEntry, sampling_weights, weighted_sample
from ..evaluation import evaluate_labels
from .network import ModelParameters, forward, forward_with_cache, backward, softmax, softmax_cross_entropy
from .optim import AdamState, TrainConfig, adam_step, freeze_prefix

log = logging.getLogger(__name__)

EXPRESSION = "expression"
HAND = "hand"


@dataclass
class Corpus:
    """Network-ready inputs of shape (N, H, W) with one class index per sample."""

    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __len__(self) -> int:
        return len(self.labels)


def expression_input(img: imaging.Image, size: tuple[int, int]) -> np.ndarray:
    return imaging.normalize(imaging.resize_bilinear(img, *size)).pixels


def hand_input(img: imaging.Image, size: tuple[int, int]) -> np.ndarray:
    """Sobel magnitudes of the resized 8-bit image, divided by EDGE_INPUT_SCALE."""
    edges = imaging.sobel_edges(imaging.resize_bilinear(img, *size))
    return edges.magnitudes / imaging.EDGE_INPUT_SCALE


def load_corpus(entries: Sequence[ManifestEntry], root, task: str, size: tuple[int, int]) -> Corpus:
    if not entries:
        raise ValueError("manifest has no entries")
    root = Path(root)
    prepare = hand_input if task == HAND else expression_input
    inputs, labels = [], []
    for e in entries:
        if task == HAND:
            if e.hand is None:
                where = f"line {e.line}" if e.line is not None else repr(e.path)
                raise ValueError(f"{where}: hand flag is unlabeled ('?') but hand training needs it")
            labels.append(int(e.hand))
        else:
            labels.append(int(e.expression))
        inputs.append(prepare(imaging.read_pgm(root / e.path), size))
    return Corpus(np.stack(inputs), np.array(labels, dtype=np.int64), 2 if task == HAND else 6)


@dataclass
class EpochRecord:
    phase: str
    epoch: int
    loss: float
    val_macro_f1: float


@dataclass
class TrainResult:
    params: ModelParameters
    history: list[EpochRecord]
    best_epoch: int
    pretrained: Optional[ModelParameters] = None  # end-of-pretraining snapshot


def predict_labels(params: ModelParameters, inputs: np.ndarray, chunk: int = 256) -> np.ndarray:
    out = [np.argmax(forward(params, inputs[i:i + chunk]), axis=1) for i in range(0, len(inputs), chunk)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def _epoch_seed(seed: int, phase: int, epoch: int) -> int:
    return int(np.random.SeedSequence([seed, phase, epoch]).generate_state(1, dtype=np.uint64)[0])


def _run_epoch(params, state, data: Corpus, cfg: TrainConfig, seed: int) -> float:
    weights = sampling_weights(np.bincount(data.labels, minlength=data.num_classes))
    order = weighted_sample(data.labels, weights, seed, len(data))
    total = 0.0
    for start in range(0, len(order), cfg.batch_size):
        idx = order[start:start + cfg.batch_size]
        logits, cache = forward_with_cache(params, data.inputs[idx])
        loss, dlogits = softmax_cross_entropy(logits, data.labels[idx])
        adam_step(params, backward(params, cache, dlogits), state, cfg)
        total += loss * len(idx)
    return total / len(order)


def _score(params, data: Corpus) -> float:
    return evaluate_labels(predict_labels(params, data.inputs), data.labels, data.num_classes).macro


def train(
    params: ModelParameters,
    train_set: Corpus,
    cfg: TrainConfig,
    *,
    val_set: Optional[Corpus] = None,
    pretrain_set: Optional[Corpus] = None,
) -> TrainResult:
    """Train ``params`` (a copy) and return the best-validation snapshot.

    With ``pretrain_set`` the run has two phases: every tensor is trained on
    the source corpus, then the leading ``cfg.freeze_fraction`` of the blocks
    is frozen and training continues on ``train_set``. Without it, whatever
    freeze flags ``params`` already carries are honoured. Model selection
    (highest validation macro-F1, earliest epoch on ties) applies to the
    target phase; validation defaults to the training corpus. Each epoch
    draws ``len(train_set)`` weighted samples.
    """
    if len(train_set) == 0:
        raise ValueError("training corpus is empty")
    if train_set.num_classes != params.config.head_classes:
        raise ValueError(f"corpus has {train_set.num_classes} classes, model head has {params.config.head_classes}")
    params = params.copy()
    val_set = train_set if val_set is None else val_set
    history: list[EpochRecord] = []

    if pretrain_set is not None:
        if len(pretrain_set) == 0:
            raise ValueError("pretraining corpus is empty")
        freeze_prefix(params, 0.0)
        state = AdamState.zeros_like(params)
        for epoch in range(cfg.epochs):
            loss = _run_epoch(params, state, pretrain_set, cfg, _epoch_seed(cfg.seed, 0, epoch))
            history.append(EpochRecord("pretrain", epoch + 1, loss, _score(params, pretrain_set)))
            log.info("pretrain epoch %d loss %.4f", epoch + 1, loss)
        pretrained = params.copy()
        freeze_prefix(params, cfg.freeze_fraction)
        phase = "finetune"
    else:
        pretrained = None
        phase = "train"

    state = AdamState.zeros_like(params)
    best, best_f1, best_epoch = params.copy(), -1.0, 0
    for epoch in range(cfg.epochs):
        loss = _run_epoch(params, state, train_set, cfg, _epoch_seed(cfg.seed, 1, epoch))
        f1 = _score(params, val_set)
        history.append(EpochRecord(phase, epoch + 1, loss, f1))
        log.info("%s epoch %d loss %.4f val macro-F1 %.4f", phase, epoch + 1, loss, f1)
        if f1 > best_f1:
            best, best_f1, best_epoch = params.copy(), f1, epoch + 1
    return TrainResult(best, history, best_epoch, pretrained)


def format_history_csv(history: Sequence[EpochRecord]) -> str:
    out = io.StringIO()
    out.write("epoch,loss,val_macro_f1,phase\n")
    for r in history:
        out.write(f"{r.epoch},{r.loss:.6f},{r.val_macro_f1:.6f},{r.phase}\n")
    return out.getvalue()


def _single(x) -> np.ndarray:
    if isinstance(x, imaging.Image):
        x = x.pixels
    elif isinstance(x, imaging.EdgeMap):
        x = x.magnitudes
    return np.asarray(x, dtype=np.float64)[None]


def predict_expression(params: ModelParameters, img) -> tuple[ExpressionLabel, np.ndarray]:
    """Expression label and its 6 class probabilities for one normalized image."""
    if params.config.head_classes != 6:
        raise ValueError(f"expression prediction needs a 6-way head, model has {params.config.head_classes}")
    probs = softmax(forward(params, _single(img)))[0]
    return ExpressionLabel(int(np.argmax(probs))), probs


def predict_hand(params: ModelParameters, edge_map) -> tuple[bool, float]:
    """Hand flag and P(hand); the flag is set only when P(hand) > 0.5."""
    if params.config.head_classes != 2:
        raise ValueError(f"hand prediction needs a 2-way head, model has {params.config.head_classes}")
    p_hand = float(softmax(forward(params, _single(edge_map)))[0, 1])
    return p_hand > 0.5, p_hand

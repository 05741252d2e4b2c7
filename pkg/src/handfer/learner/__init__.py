"""Small CNN classifiers trained with manual backprop and Adam."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .network import (
    ModelConfig,
    ModelParameters,
    Tensor,
    backward,
    forward,
    forward_with_cache,
    init_model,
    softmax,
    softmax_cross_entropy,
)
from .optim import AdamState, TrainConfig, adam_step, freeze_prefix, frozen_blocks
from .training import (
    EXPRESSION,
    HAND,
    Corpus,
    EpochRecord,
    TrainResult,
    expression_input,
    format_history_csv,
    hand_input,
    load_corpus,
    predict_expression,
    predict_hand,
    predict_labels,
    train,
)

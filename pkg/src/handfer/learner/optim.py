"""Adam with decoupled weight decay, and block-prefix freezing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .network import ModelParameters


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-5
    weight_decay: float = 1e-4
    epochs: int = 20
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    freeze_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.freeze_fraction <= 1.0:
            raise ValueError(f"freeze_fraction must be in [0, 1], got {self.freeze_fraction}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be non-negative, got {self.epochs}")


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParameters) -> "AdamState":
        return cls(
            {p.name: np.zeros_like(p.value) for p in params},
            {p.name: np.zeros_like(p.value) for p in params},
        )


def adam_step(params: ModelParameters, grads: dict[str, np.ndarray], state: AdamState, cfg: TrainConfig) -> None:
    """One in-place Adam update.

    Weight decay is decoupled: ``theta -= lr * wd * theta`` before the Adam
    delta. Frozen tensors and their moments are left untouched; the step
    counter advances regardless.
    """
    state.t += 1
    bc1 = 1.0 - cfg.beta1 ** state.t
    bc2 = 1.0 - cfg.beta2 ** state.t
    for p in params:
        if p.frozen:
            continue
        g = grads[p.name]
        m, v = state.m[p.name], state.v[p.name]
        if g.shape != p.value.shape or m.shape != p.value.shape:
            raise ValueError(f"shape mismatch for {p.name}: param {p.value.shape}, grad {g.shape}, state {m.shape}")
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        if cfg.weight_decay:
            p.value -= cfg.learning_rate * cfg.weight_decay * p.value
        p.value -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.epsilon)


def freeze_prefix(params: ModelParameters, fraction: float) -> ModelParameters:
    """Freeze the first ``floor(fraction * block_count)`` blocks; the head stays trainable."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    # Guard against 0.8 * 10 = 7.999... style float error before flooring.
    n_frozen = math.floor(fraction * params.config.block_count + 1e-9)
    for p in params:
        p.frozen = p.block is not None and p.block < n_frozen
    return params


def frozen_blocks(params: ModelParameters) -> list[int]:
    return sorted({p.block for p in params if p.frozen and p.block is not None})

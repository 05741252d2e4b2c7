"""A small plain CNN with hand-written forward and backward passes.

Layout per block: 3x3 convolution (replicate padding) -> ReLU -> 2x2 average
pool. After the last block: global average pool -> dense head. An axis of
length 1 is not pooled; an odd trailing row/column is dropped by the pool.

Parameter order is block-major with the kernel before the bias, then
``head.weight`` and ``head.bias``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass(frozen=True)
class ModelConfig:
    input_size: tuple[int, int]  # (width, height)
    channels: tuple[int, ...]
    head_classes: int = 6
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if len(self.input_size) != 2 or min(self.input_size) < 1:
            raise ValueError(f"input_size must be two positive integers, got {self.input_size}")
        if not self.channels:
            raise ValueError("at least one conv block is required")
        if min(self.channels) < 1:
            raise ValueError(f"zero-sized layer in channels {self.channels}")
        if self.head_classes not in (2, 6):
            raise ValueError(f"head_classes must be 2 or 6, got {self.head_classes}")

    @property
    def block_count(self) -> int:
        return len(self.channels)


@dataclass
class Tensor:
    name: str
    value: np.ndarray
    block: Optional[int]  # None for the head
    frozen: bool = False


@dataclass
class ModelParameters:
    config: ModelConfig
    tensors: list[Tensor] = field(default_factory=list)

    def __getitem__(self, name: str) -> np.ndarray:
        for t in self.tensors:
            if t.name == name:
                return t.value
        raise KeyError(name)

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self.tensors)

    def names(self) -> list[str]:
        return [t.name for t in self.tensors]

    def copy(self) -> "ModelParameters":
        return ModelParameters(
            self.config,
            [Tensor(t.name, t.value.copy(), t.block, t.frozen) for t in self.tensors],
        )


def init_model(config: ModelConfig) -> ModelParameters:
    """He-normal kernels, fan-in scaled head, zero biases; deterministic in ``rng_seed``."""
    rng = np.random.default_rng(config.rng_seed)
    tensors = []
    c_in = 1
    for b, c_out in enumerate(config.channels):
        std = np.sqrt(2.0 / (c_in * 9))
        tensors.append(Tensor(f"block{b}.kernel", rng.normal(0.0, std, (c_out, c_in, 3, 3)), b))
        tensors.append(Tensor(f"block{b}.bias", np.zeros(c_out), b))
        c_in = c_out
    tensors.append(Tensor("head.weight", rng.normal(0.0, np.sqrt(1.0 / c_in), (c_in, config.head_classes)), None))
    tensors.append(Tensor("head.bias", np.zeros(config.head_classes), None))
    return ModelParameters(config, tensors)


def _pool_factors(h: int, w: int) -> tuple[int, int]:
    return (2 if h >= 2 else 1), (2 if w >= 2 else 1)


@dataclass
class ForwardCache:
    x: np.ndarray
    blocks: list[tuple[np.ndarray, np.ndarray]]  # (patches, pre-activation) per block
    features: np.ndarray
    last_shape: tuple[int, ...]


def _as_batch(params: ModelParameters, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        x = x[:, None]
    w, h = params.config.input_size
    if x.ndim != 4 or x.shape[1] != 1 or x.shape[2:] != (h, w):
        raise ValueError(f"expected batch of shape (N, {h}, {w}), got {x.shape}")
    return x


def forward_with_cache(params: ModelParameters, x) -> tuple[np.ndarray, ForwardCache]:
    a = _as_batch(params, x)
    x = a
    blocks = []
    for b in range(params.config.block_count):
        kernel, bias = params[f"block{b}.kernel"], params[f"block{b}.bias"]
        n, _, h, w = a.shape
        padded = np.pad(a, ((0, 0), (0, 0), (1, 1), (1, 1)), mode="edge")
        patches = sliding_window_view(padded, (3, 3), axis=(2, 3))  # (N, C, H, W, 3, 3)
        z = np.tensordot(patches, kernel, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        z += bias[None, :, None, None]
        blocks.append((patches, z))
        r = np.maximum(z, 0.0)
        fy, fx = _pool_factors(h, w)
        ho, wo = h // fy, w // fx
        a = r[:, :, :ho * fy, :wo * fx].reshape(n, -1, ho, fy, wo, fx).mean(axis=(3, 5))
    features = a.mean(axis=(2, 3))
    logits = features @ params["head.weight"] + params["head.bias"]
    return logits, ForwardCache(x, blocks, features, a.shape)


def forward(params: ModelParameters, x) -> np.ndarray:
    """Logits of shape (batch, head_classes) for a batch of (H, W) inputs."""
    return forward_with_cache(params, x)[0]


def backward(params: ModelParameters, cache: Optional[ForwardCache], dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients for every tensor, frozen or not, keyed by tensor name."""
    if cache is None:
        raise ValueError("backward needs the cache from forward_with_cache")
    grads: dict[str, np.ndarray] = {}
    dlogits = np.asarray(dlogits, dtype=np.float64)
    grads["head.weight"] = cache.features.T @ dlogits
    grads["head.bias"] = dlogits.sum(axis=0)
    n, c, h, w = cache.last_shape
    da = np.broadcast_to((dlogits @ params["head.weight"].T)[:, :, None, None] / (h * w), cache.last_shape)

    for b in reversed(range(params.config.block_count)):
        patches, z = cache.blocks[b]
        _, c_out, h, w = z.shape
        fy, fx = _pool_factors(h, w)
        ho, wo = h // fy, w // fx
        dr = np.zeros_like(z)
        up = np.repeat(np.repeat(da, fy, axis=2), fx, axis=3) / (fy * fx)
        dr[:, :, :ho * fy, :wo * fx] = up
        dz = dr * (z > 0)
        grads[f"block{b}.bias"] = dz.sum(axis=(0, 2, 3))
        grads[f"block{b}.kernel"] = np.tensordot(dz, patches, axes=([0, 2, 3], [0, 2, 3]))
        if b == 0:
            break
        kernel = params[f"block{b}.kernel"]
        dpatches = np.tensordot(dz, kernel, axes=([1], [0]))  # (N, H, W, C, 3, 3)
        c_in = kernel.shape[1]
        dpad = np.zeros((z.shape[0], c_in, h + 2, w + 2))
        for i in range(3):
            for j in range(3):
                dpad[:, :, i:i + h, j:j + w] += dpatches[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        da = _unpad_replicate(dpad)

    return {t.name: grads[t.name] for t in params.tensors}


def _unpad_replicate(dpad: np.ndarray) -> np.ndarray:
    # Adjoint of np.pad(mode="edge") with width 1: border taps flow back to
    # the clamped source row/column.
    rows = dpad[:, :, 1:-1, :].copy()
    rows[:, :, 0, :] += dpad[:, :, 0, :]
    rows[:, :, -1, :] += dpad[:, :, -1, :]
    out = rows[:, :, :, 1:-1].copy()
    out[:, :, :, 0] += rows[:, :, :, 0]
    out[:, :, :, -1] += rows[:, :, :, -1]
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, targets) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits.

    ``targets`` is either a one-hot array or a vector of class indices.
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets)
    n, k = logits.shape
    if targets.ndim == 1:
        onehot = np.zeros((n, k))
        onehot[np.arange(n), targets.astype(np.int64)] = 1.0
    else:
        onehot = targets.astype(np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    loss = float(-(onehot * log_p).sum() / n)
    return loss, (np.exp(log_p) - onehot) / n

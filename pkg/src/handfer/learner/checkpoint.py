"""Checkpoint files.

Layout::

    handfer-v1,input_width=W,input_height=H,channels=8/8/16,block_count=3,head_classes=6,rng_seed=0\\n
    block0.kernel:8x1x3x3:0;block0.bias:8:0;...;head.bias:6:0\\n
    <float32 little-endian elements of every tensor, directory order>

Values round to float32 on save, so a loaded model equals the in-memory one
up to float32 precision; save(load(save(p))) is byte-identical to save(p).
"""

from __future__ import annotations

import numpy as np

from .network import ModelConfig, ModelParameters, Tensor

FORMAT_VERSION = "handfer-v1"


class CheckpointError(ValueError):
    pass


def encode_checkpoint(params: ModelParameters) -> bytes:
    cfg = params.config
    fields = [
        FORMAT_VERSION,
        f"input_width={cfg.input_size[0]}",
        f"input_height={cfg.input_size[1]}",
        "channels=" + "/".join(str(c) for c in cfg.channels),
        f"block_count={cfg.block_count}",
        f"head_classes={cfg.head_classes}",
        f"rng_seed={cfg.rng_seed}",
    ]
    directory = ";".join(
        f"{t.name}:{'x'.join(str(d) for d in t.value.shape)}:{int(t.frozen)}" for t in params
    )
    body = b"".join(t.value.astype("<f4").tobytes() for t in params)
    return (",".join(fields) + "\n" + directory + "\n").encode("ascii") + body


def save_checkpoint(path, params: ModelParameters) -> None:
    with open(path, "wb") as f:
        f.write(encode_checkpoint(params))


def _parse_config(line: str) -> ModelConfig:
    parts = line.split(",")
    if parts[0] != FORMAT_VERSION:
        raise CheckpointError(f"line 1: unknown format version {parts[0]!r}")
    kv = {}
    for part in parts[1:]:
        key, sep, value = part.partition("=")
        if not sep:
            raise CheckpointError(f"line 1: malformed config field {part!r}")
        kv[key] = value
    try:
        channels = tuple(int(c) for c in kv["channels"].split("/"))
        config = ModelConfig(
            input_size=(int(kv["input_width"]), int(kv["input_height"])),
            channels=channels,
            head_classes=int(kv["head_classes"]),
            rng_seed=int(kv["rng_seed"]),
        )
        block_count = int(kv["block_count"])
    except KeyError as exc:
        raise CheckpointError(f"line 1: missing config field {exc.args[0]!r}") from None
    except ValueError as exc:
        raise CheckpointError(f"line 1: invalid config: {exc}") from None
    if block_count != config.block_count:
        raise CheckpointError(f"line 1: block_count={block_count} but {config.block_count} channel entries")
    return config


def decode_checkpoint(data: bytes) -> ModelParameters:
    first = data.find(b"\n")
    second = data.find(b"\n", first + 1) if first >= 0 else -1
    if first < 0 or second < 0:
        raise CheckpointError("header: expected two text lines before tensor data")
    try:
        config_line = data[:first].decode("ascii")
        dir_line = data[first + 1:second].decode("ascii")
    except UnicodeDecodeError:
        raise CheckpointError("header: non-ASCII bytes in text lines") from None
    config = _parse_config(config_line)
    expected = list(_template(config))

    entries = dir_line.split(";") if dir_line else []
    if len(entries) != len(expected):
        raise CheckpointError(f"line 2: expected {len(expected)} tensors, directory lists {len(entries)}")
    body = data[second + 1:]
    offset = 0
    tensors = []
    for i, (entry, (name, shape, block)) in enumerate(zip(entries, expected)):
        fields = entry.split(":")
        if len(fields) != 3:
            raise CheckpointError(f"line 2, entry {i}: malformed directory entry {entry!r}")
        got_name, got_shape, frozen = fields
        if got_name != name:
            raise CheckpointError(f"line 2, entry {i}: expected tensor {name!r}, found {got_name!r}")
        if got_shape != "x".join(str(d) for d in shape):
            raise CheckpointError(f"line 2, tensor {name}: shape {got_shape} does not match config {shape}")
        if frozen not in ("0", "1"):
            raise CheckpointError(f"line 2, tensor {name}: frozen flag must be 0 or 1, got {frozen!r}")
        nbytes = 4 * int(np.prod(shape))
        chunk = body[offset:offset + nbytes]
        if len(chunk) < nbytes:
            raise CheckpointError(
                f"tensor data for {name} truncated at byte {offset + len(chunk)} (needs {nbytes} bytes from {offset})"
            )
        value = np.frombuffer(chunk, dtype="<f4").astype(np.float64).reshape(shape)
        if not np.all(np.isfinite(value)):
            raise CheckpointError(f"tensor data for {name} contains non-finite values")
        tensors.append(Tensor(name, value, block, frozen == "1"))
        offset += nbytes
    if offset != len(body):
        raise CheckpointError(f"{len(body) - offset} trailing bytes after tensor data at byte {offset}")
    return ModelParameters(config, tensors)


def load_checkpoint(path) -> ModelParameters:
    with open(path, "rb") as f:
        data = f.read()
    try:
        return decode_checkpoint(data)
    except CheckpointError as exc:
        raise CheckpointError(f"{path}: {exc}") from None


def _template(config: ModelConfig):
    c_in = 1
    for b, c_out in enumerate(config.channels):
        yield f"block{b}.kernel", (c_out, c_in, 3, 3), b
        yield f"block{b}.bias", (c_out,), b
        c_in = c_out
    yield "head.weight", (c_in, config.head_classes), None
    yield "head.bias", (config.head_classes,), None

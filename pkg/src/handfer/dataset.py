"""Corpus manifests, class statistics, stratified splits and weighted sampling.

Randomness comes from numpy's PCG64 generator (``np.random.default_rng``),
seeded explicitly by the caller, so every draw is reproducible given the seed.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

HEADER = ("path", "expression", "hand")


class ExpressionLabel(IntEnum):
    ANGER = 0
    DISGUST = 1
    FEAR = 2
    HAPPINESS = 3
    SADNESS = 4
    SURPRISE = 5

    @classmethod
    def parse(cls, token: str) -> "ExpressionLabel":
        return cls[token.strip().upper()]

    @property
    def token(self) -> str:
        return self.name.lower()


NUM_EXPRESSIONS = len(ExpressionLabel)


class ManifestError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class UnknownExpression(ManifestError):
    pass


class MissingColumns(ManifestError):
    pass


class DuplicateHeader(ManifestError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    expression: ExpressionLabel
    hand: Optional[bool] = None  # None means unlabeled
    line: Optional[int] = field(default=None, compare=False)


_HAND_TOKENS = {"1": True, "0": False, "?": None}


def parse_manifest(text: str) -> list[ManifestEntry]:
    """Parse a ``path,expression,hand`` CSV. Line numbers in errors are 1-based."""
    reader = csv.reader(io.StringIO(text))
    entries: list[ManifestEntry] = []
    header_seen = False
    for row in reader:
        line = reader.line_num
        cells = [c.strip() for c in row]
        if not cells or cells == [""]:
            continue
        if tuple(c.lower() for c in cells) == HEADER:
            if header_seen:
                raise DuplicateHeader("header repeated", line)
            header_seen = True
            continue
        if not header_seen:
            raise MissingColumns(f"expected header {','.join(HEADER)}, got {','.join(cells)}", line)
        if len(cells) != 3:
            raise MissingColumns(f"expected 3 columns, got {len(cells)}", line)
        path, expr, hand = cells
        if not path:
            raise ManifestError("empty path", line)
        try:
            label = ExpressionLabel.parse(expr)
        except KeyError:
            raise UnknownExpression(f"unknown expression {expr!r}", line) from None
        if hand not in _HAND_TOKENS:
            raise ManifestError(f"hand flag must be 0, 1 or ?, got {hand!r}", line)
        entries.append(ManifestEntry(path, label, _HAND_TOKENS[hand], line))
    if not header_seen:
        raise MissingColumns("missing header", 1)
    return entries


def format_manifest(entries: Sequence[ManifestEntry]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(HEADER)
    for e in entries:
        hand = "?" if e.hand is None else str(int(e.hand))
        writer.writerow([e.path, e.expression.token, hand])
    return out.getvalue()


def read_manifest(path) -> tuple[list[ManifestEntry], Path]:
    """Read a manifest file; returns the entries and the directory paths resolve against."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_manifest(text), path.parent


def class_counts(entries: Sequence[ManifestEntry]) -> np.ndarray:
    counts = np.zeros(NUM_EXPRESSIONS, dtype=np.int64)
    for e in entries:
        counts[e.expression] += 1
    return counts


def sampling_weights(counts) -> np.ndarray:
    """Inverse-frequency class weights ``N / (K * n_c)``; empty classes get 0.

    K is the number of classes in ``counts`` (6 for expressions, 2 when
    balancing hand labels).
    """
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("all class counts are zero")
    weights = np.zeros_like(counts)
    nonzero = counts > 0
    weights[nonzero] = total / (len(counts) * counts[nonzero])
    return weights


def weighted_sample(labels, weights, rng_seed: int, n: int) -> np.ndarray:
    """Draw ``n`` indices with replacement, P(i) proportional to ``weights[labels[i]]``.

    ``labels`` is the per-entry class index (a sequence of ManifestEntry is
    accepted and mapped to its expressions).
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    labels = _as_labels(labels)
    p = np.asarray(weights, dtype=np.float64)[labels]
    total = p.sum()
    if not total > 0:
        raise ValueError("no entry has positive sampling weight")
    rng = np.random.default_rng(rng_seed)
    return rng.choice(len(labels), size=n, replace=True, p=p / total)


def _as_labels(labels) -> np.ndarray:
    if len(labels) and isinstance(labels[0], ManifestEntry):
        return np.array([int(e.expression) for e in labels], dtype=np.int64)
    return np.asarray(labels, dtype=np.int64)


def split(entries: Sequence, val_fraction: float, rng_seed: int, labels=None) -> tuple[list, list]:
    """Stratified train/validation split.

    Each class contributes ``round_half_up(count * val_fraction)`` samples to
    validation, capped so at least one sample of every class stays in train.
    Both halves keep the input order.
    """
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    labels = _as_labels(entries) if labels is None else np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(rng_seed)
    val_idx: set[int] = set()
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        n_val = min(math.floor(len(members) * val_fraction + 0.5), len(members) - 1)
        if n_val > 0:
            chosen = rng.permutation(members)[:n_val]
            val_idx.update(int(i) for i in chosen)
    train = [e for i, e in enumerate(entries) if i not in val_idx]
    val = [e for i, e in enumerate(entries) if i in val_idx]
    return train, val

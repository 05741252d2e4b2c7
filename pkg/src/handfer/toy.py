"""Generated toy corpora for tests and demos.

``python -m handfer.toy OUTDIR`` writes two PGM corpora with manifests:

* ``expr/``: six texture classes standing in for the six expressions.
* ``hand/``: smooth backgrounds, half of them with a sharp-edged bright
  patch standing in for a hand.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from . import imaging
from .dataset import ExpressionLabel, ManifestEntry, format_manifest


def expression_pattern(label: int, size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    phase = rng.integers(0, 4)
    if label == 0:
        img = ((yy + phase) // 2 % 2) * 180.0 + 40
    elif label == 1:
        img = ((xx + phase) // 2 % 2) * 180.0 + 40
    elif label == 2:
        img = (((yy + phase) // 2 + (xx + phase) // 2) % 2) * 180.0 + 40
    elif label == 3:
        img = np.full((size, size), 200.0)
    elif label == 4:
        img = np.full((size, size), 50.0)
    else:
        img = ((xx + yy + phase) // 2 % 2) * 180.0 + 40
    img = img + rng.normal(0.0, 8.0, img.shape)
    return np.clip(img, 0, 255)


def hand_scene(has_hand: bool, size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    angle = rng.uniform(0, 2 * np.pi)
    base = rng.uniform(60, 140)
    img = base + 40.0 * (np.cos(angle) * xx + np.sin(angle) * yy) + rng.normal(0.0, 2.0, (size, size))
    if has_hand:
        h, w = rng.integers(size // 4, size // 2 + 1, size=2)
        y0, x0 = rng.integers(0, size - h + 1), rng.integers(0, size - w + 1)
        img[y0:y0 + h, x0:x0 + w] = rng.uniform(220, 255)
    return np.clip(img, 0, 255)


def _write(root: Path, items, name: str) -> list[ManifestEntry]:
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (pixels, label, hand) in enumerate(items):
        rel = f"{name}_{i:04d}.pgm"
        imaging.write_pgm(root / rel, imaging.Image(np.floor(pixels + 0.5)))
        entries.append(ManifestEntry(rel, ExpressionLabel(label), hand))
    (root / "manifest.csv").write_text(format_manifest(entries), encoding="utf-8")
    return entries


def write_expression_corpus(root, n_per_class: int = 100, size: int = 16, seed: int = 0) -> list[ManifestEntry]:
    rng = np.random.default_rng(seed)
    items = [(expression_pattern(c, size, rng), c, None) for _ in range(n_per_class) for c in range(6)]
    return _write(Path(root), items, "expr")


def write_hand_corpus(root, n: int = 200, size: int = 16, seed: int = 0) -> list[ManifestEntry]:
    rng = np.random.default_rng(seed)
    items = []
    for i in range(n):
        has_hand = bool(i % 2)
        items.append((hand_scene(has_hand, size, rng), int(rng.integers(0, 6)), has_hand))
    return _write(Path(root), items, "hand")


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out", type=Path)
    parser.add_argument("--size", type=int, default=16)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--per-class", type=int, default=100)
    parser.add_argument("--hand-count", type=int, default=200)
    args = parser.parse_args(argv)
    write_expression_corpus(args.out / "expr", args.per_class, args.size, args.seed)
    write_hand_corpus(args.out / "hand", args.hand_count, args.size, args.seed + 1)
    print(f"wrote {args.out / 'expr' / 'manifest.csv'} and {args.out / 'hand' / 'manifest.csv'}")


if __name__ == "__main__":
    main()

"""Paired image folders: ``<root>/degraded/<stem>.*`` matched with ``<root>/gt/<stem>.*``."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .degrade import ImagePair
from .imageio import IMAGE_SUFFIXES, ImageFormatError, load_image


class DataError(RuntimeError):
    pass


def _index(folder: Path) -> dict[str, Path]:
    files = {}
    for p in sorted(folder.iterdir()):
        if p.suffix.lower() in IMAGE_SUFFIXES:
            if p.stem in files:
                raise DataError(f"{folder}: two images share the stem {p.stem!r}")
            files[p.stem] = p
    return files


def load_pairs(root) -> list[ImagePair]:
    root = Path(root)
    deg_dir, gt_dir = root / "degraded", root / "gt"
    for d in (deg_dir, gt_dir):
        if not d.is_dir():
            raise DataError(f"missing directory {d}")
    deg, gt = _index(deg_dir), _index(gt_dir)
    unmatched = sorted(set(deg) ^ set(gt))
    if unmatched:
        raise DataError(f"{root}: images without a partner: {', '.join(unmatched[:5])}")
    if not deg:
        raise DataError(f"{root}: no images found")
    pairs = []
    for stem in sorted(deg):
        try:
            a, b = load_image(deg[stem]), load_image(gt[stem])
        except (ImageFormatError, OSError) as exc:
            raise DataError(str(exc)) from None
        if a.shape != b.shape:
            raise DataError(f"{stem}: degraded {a.shape[1:]} and gt {b.shape[1:]} extents differ")
        pairs.append(ImagePair(a, b, stem))
    return pairs


def random_crop(pair: ImagePair, size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Aligned crop of both images; images smaller than ``size`` are reflect-padded first."""
    a, b = pair.degraded, pair.gt
    _, h, w = a.shape
    ph, pw = max(0, size - h), max(0, size - w)
    if ph or pw:
        spec = ((0, 0), (0, ph), (0, pw))
        a, b = np.pad(a, spec, mode="reflect"), np.pad(b, spec, mode="reflect")
        h, w = a.shape[1:]
    y = int(rng.integers(0, h - size + 1))
    x = int(rng.integers(0, w - size + 1))
    return a[:, y : y + size, x : x + size], b[:, y : y + size, x : x + size]

"""Synthetic degradations standing in for the UHD benchmarks, and synthetic scenes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

KINDS = ("lowlight", "rain", "blur", "haze")


@dataclass
class ImagePair:
    degraded: np.ndarray
    gt: np.ndarray
    id: str = ""

    def __post_init__(self):
        if self.degraded.shape != self.gt.shape:
            raise ValueError(f"pair {self.id!r}: shapes {self.degraded.shape} and {self.gt.shape} differ")
        self.degraded = np.clip(self.degraded, 0.0, 1.0)
        self.gt = np.clip(self.gt, 0.0, 1.0)


def lowlight(gt, rng, gamma=None, gain=None, noise=0.02):
    gamma = rng.uniform(2.0, 3.0) if gamma is None else gamma
    gain = rng.uniform(0.2, 0.5) if gain is None else gain
    out = (gain * gt) ** gamma
    if noise:
        out = out + rng.normal(0.0, noise, size=gt.shape)
    return out


def rain(gt, rng, streaks=None, intensity=None, length=None):
    _, h, w = gt.shape
    streaks = int(rng.integers(h * w // 200, h * w // 80 + 1)) if streaks is None else streaks
    intensity = rng.uniform(0.3, 0.6) if intensity is None else intensity
    length = int(rng.integers(max(3, h // 16), max(4, h // 6) + 1)) if length is None else length
    angle = np.deg2rad(rng.uniform(70.0, 110.0))  # one dominant orientation per image
    layer = np.zeros((h, w))
    dy, dx = np.sin(angle), np.cos(angle)
    steps = np.arange(length)
    for _ in range(streaks):
        y0, x0 = rng.uniform(0, h), rng.uniform(0, w)
        ys = np.round(y0 + steps * dy).astype(int)
        xs = np.round(x0 + steps * dx).astype(int)
        ok = (ys >= 0) & (ys < h) & (xs >= 0) & (xs < w)
        layer[ys[ok], xs[ok]] = 1.0
    soft = gaussian_filter(layer, 0.5)
    layer = soft * intensity / max(soft.max(), 1e-12)
    return gt + layer[None]


def blur(gt, rng, sigma=None):
    sigma = rng.uniform(1.5, 3.0) if sigma is None else sigma
    return np.stack([gaussian_filter(ch, sigma, mode="reflect") for ch in gt])


def haze(gt, rng, t=None, airlight=None):
    t = rng.uniform(0.3, 0.6) if t is None else t
    airlight = rng.uniform(0.8, 1.0) if airlight is None else airlight
    return gt * t + airlight * (1.0 - t)


_DEGRADE = {"lowlight": lowlight, "rain": rain, "blur": blur, "haze": haze}


def synth_degrade(gt: np.ndarray, kind: str, seed: int = 0, pair_id: str = "", **params) -> ImagePair:
    """Degrade a [3, H, W] image in [0, 1]; keyword params pin the random draws."""
    if kind not in _DEGRADE:
        raise ValueError(f"unknown degradation {kind!r}; choose from {KINDS}")
    rng = np.random.default_rng(seed)
    gt = np.asarray(gt, dtype=np.float64)
    out = _DEGRADE[kind](gt, rng, **params)
    return ImagePair(np.clip(out, 0.0, 1.0), gt, pair_id)


def random_scene(size: int = 64, seed: int = 0, width: int | None = None) -> np.ndarray:
    """Piecewise-smooth colour scene: shaded background, shapes and a grating."""
    rng = np.random.default_rng(seed)
    h, w = size, width or size
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    img = np.empty((3, h, w))
    for c in range(3):
        gy, gx = rng.uniform(-0.3, 0.3, 2)
        img[c] = rng.uniform(0.35, 0.65) + gy * (yy - 0.5) + gx * (xx - 0.5)
    for _ in range(int(rng.integers(3, 7))):
        cy, cx = rng.uniform(0, 1, 2)
        ry, rx = rng.uniform(0.05, 0.25, 2)
        colour = rng.uniform(0.1, 0.9, 3)
        if rng.random() < 0.5:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        else:
            mask = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        img[:, mask] = 0.5 * img[:, mask] + 0.5 * colour[:, None]
    freq = rng.uniform(6, 14)
    theta = rng.uniform(0, np.pi)
    grating = 0.06 * np.sin(2 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy))
    img += grating[None]
    img += rng.normal(0.0, 0.01, size=img.shape)
    return np.clip(img, 0.05, 0.95)

"""8-bit PNG and binary PPM (P6) images as float arrays [3, H, W] in [0, 1]."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

MAX_EXTENT = 1 << 15


class ImageFormatError(ValueError):
    pass


def _read_ppm(raw: bytes, path) -> np.ndarray:
    # header: magic, width, height, maxval separated by whitespace, '#' comments allowed
    tokens = []
    pos = 2
    token_re = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\d+)")
    for _ in range(3):
        m = token_re.match(raw, pos)
        if not m:
            raise ImageFormatError(f"{path}: malformed PPM header")
        tokens.append(int(m.group(1)))
        pos = m.end()
    if pos >= len(raw) or not raw[pos : pos + 1].isspace():
        raise ImageFormatError(f"{path}: malformed PPM header")
    pos += 1
    w, h, maxval = tokens
    if maxval != 255:
        raise ImageFormatError(f"{path}: only 8-bit PPM supported (maxval {maxval})")
    if not (0 < w <= MAX_EXTENT and 0 < h <= MAX_EXTENT):
        raise ImageFormatError(f"{path}: extent {w}x{h} out of range")
    need = w * h * 3
    body = raw[pos : pos + need]
    if len(body) < need:
        raise ImageFormatError(f"{path}: truncated PPM ({len(body)} of {need} bytes)")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)


def _read_png(path) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(path) as img:
            if img.format != "PNG":
                raise ImageFormatError(f"{path}: not a PNG file")
            if img.mode not in ("1", "L", "LA", "P", "RGB", "RGBA"):
                raise ImageFormatError(f"{path}: unsupported PNG mode {img.mode} (8-bit only)")
            if max(img.size) > MAX_EXTENT:
                raise ImageFormatError(f"{path}: extent {img.size} out of range")
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except ImageFormatError:
        raise
    except Exception as exc:  # PIL raises a zoo of types for broken files
        raise ImageFormatError(f"{path}: cannot decode PNG ({exc})") from None


def load_image(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"P6":
        hwc = _read_ppm(raw, path)
    elif raw[:8] == b"\x89PNG\r\n\x1a\n":
        hwc = _read_png(path)
    else:
        raise ImageFormatError(f"{path}: unsupported format (expect PNG or P6 PPM)")
    return np.clip(hwc.transpose(2, 0, 1).astype(np.float64) / 255.0, 0.0, 1.0)


def to_bytes(img: np.ndarray) -> np.ndarray:
    """[3, H, W] floats -> [H, W, 3] uint8 with round-half-up and clamping."""
    q = np.floor(np.asarray(img, dtype=np.float64) * 255.0 + 0.5)
    return np.clip(q, 0, 255).astype(np.uint8).transpose(1, 2, 0)


def save_image(path, img: np.ndarray) -> None:
    path = Path(path)
    hwc = np.ascontiguousarray(to_bytes(img))
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        h, w, _ = hwc.shape
        path.write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + hwc.tobytes())
    elif suffix == ".png":
        from PIL import Image

        Image.fromarray(hwc, mode="RGB").save(path, format="PNG")
    else:
        raise ImageFormatError(f"{path}: unsupported output format {suffix!r}")


IMAGE_SUFFIXES = (".png", ".ppm")

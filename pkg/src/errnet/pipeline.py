"""Three-stage assembly, configuration, ablation toggles and checkpoints."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .hfr import HFR
from .lfr import LFR
from .losses import LossReport, StageBundle, total_loss
from .module import Module
from .tensor import ShapeError, Tensor
from .zfe import ZFE

TOGGLES = ("L_zf", "L_lf", "L_hf", "ZFE", "LFR", "HFR", "PR")


@dataclass
class ErrConfig:
    channels: int = 16
    blocks: tuple[int, int, int] = (2, 2, 2)
    heads: int = 2
    d_state: int = 8
    kan_layers: int = 3
    window: int = 8
    kan_groups: int = 4
    kan_m: int = 5
    kan_n: int = 4
    k: int = 8
    patch: int = 64
    lr: float = 5e-4
    lr_min: float = 1e-7
    iters: int = 2000
    batch: int = 1
    weight_decay: float = 1e-4
    log_every: int = 20
    seed: int = 0
    dtype: str = "float32"
    disabled: tuple[str, ...] = ()

    def __post_init__(self):
        self.blocks = tuple(int(b) for b in self.blocks)
        self.disabled = tuple(self.disabled)
        self.validate()

    def validate(self) -> None:
        if len(self.blocks) != 3:
            raise ValueError(f"blocks needs three entries, got {self.blocks}")
        if self.patch % 8 or self.patch % self.window:
            raise ValueError(f"patch {self.patch} must be divisible by 8 and by window {self.window}")
        if not 1 <= self.k <= self.patch:
            raise ValueError(f"cutoff k={self.k} must lie in [1, patch={self.patch}]")
        if self.channels % self.heads:
            raise ValueError(f"heads {self.heads} must divide channels {self.channels}")
        if self.channels % self.kan_groups:
            raise ValueError(f"kan_groups {self.kan_groups} must divide channels {self.channels}")
        unknown = set(self.disabled) - set(TOGGLES)
        if unknown:
            raise ValueError(f"unknown toggles {sorted(unknown)}; known: {TOGGLES}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype}")

    @property
    def multiple(self) -> int:
        return math.lcm(8, self.window)

    def enabled(self, toggle: str) -> bool:
        return toggle not in self.disabled

    # flat key=value text -----------------------------------------------------
    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ErrConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ValueError(f"line {lineno}: unknown config key {key!r}")
            kwargs[key] = _parse_value(key, value)
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "ErrConfig":
        return cls.from_text(Path(path).read_text())


def wide_config(**overrides) -> ErrConfig:
    """Wide preset whose parameter total lands near 1.13M (a calibration point, not a claim)."""
    base = dict(channels=96, blocks=(4, 5, 4), heads=4, d_state=16, kan_groups=8)
    base.update(overrides)
    return ErrConfig(**base)


def _parse_value(key: str, value: str):
    if key == "blocks":
        return tuple(int(v) for v in value.split(","))
    if key == "disabled":
        return tuple(v.strip() for v in value.split(",") if v.strip())
    if key == "dtype":
        return value
    if key in ("lr", "lr_min", "weight_decay"):
        return float(value)
    return int(value)


class ERR(Module):
    """Zero-frequency enhancer -> low-frequency restorer -> high-frequency refiner."""

    def __init__(self, config: ErrConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        c = config.channels
        n1, n2, n3 = config.blocks
        self.zfe = ZFE(c, n1, config.heads, rng) if config.enabled("ZFE") else None
        self.lfr = LFR(c, n2, config.d_state, rng) if config.enabled("LFR") else None
        self.hfr = (
            HFR(c, config.kan_layers, config.kan_groups, config.window, rng, config.kan_m, config.kan_n)
            if config.enabled("HFR")
            else None
        )
        self.astype(np.dtype(config.dtype))

    def check_extents(self, h: int, w: int) -> None:
        m = self.config.multiple
        if h % m or w % m:
            raise ShapeError(f"image extents {h}x{w} must be multiples of {m} (lcm of 8 and window)")

    def forward(self, image: Tensor) -> StageBundle:
        h, w = image.shape[-2:]
        self.check_extents(h, w)
        pr = self.config.enabled("PR")
        if self.zfe is not None:
            o1, f1 = self.zfe(image)
        else:
            o1, f1 = image, None
        if self.lfr is not None:
            o2, f2 = self.lfr(image, f1 if pr else None, o1 if pr else image)
        else:
            o2, f2 = o1, f1
        if self.hfr is not None:
            o3 = self.hfr(image, f2 if pr else None, o2 if pr else image)
        else:
            o3 = o2
        return StageBundle(o1, o2, o3, f1, f2)

    def loss(self, bundle: StageBundle, gt: Tensor) -> LossReport:
        cfg = self.config
        return total_loss(bundle, gt, cfg.k, cfg.enabled("L_zf"), cfg.enabled("L_lf"), cfg.enabled("L_hf"))


def err_forward(image: Tensor, model: ERR) -> StageBundle:
    return model(image)


def ablation_variants(config: ErrConfig, toggles) -> ERR:
    """Model with the listed components disabled (stage -> identity, PR -> raw input)."""
    toggles = tuple(toggles)
    unknown = set(toggles) - set(TOGGLES)
    if unknown:
        raise ValueError(f"unknown toggles {sorted(unknown)}; known: {TOGGLES}")
    return ERR(replace(config, disabled=tuple(sorted(set(config.disabled) | set(toggles)))))


# ---------------------------------------------------------------------------
# checkpoint: header + config echo + named flat parameter records, little-endian
# ---------------------------------------------------------------------------

MAGIC = b"ERRCKPT\x00"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model: ERR) -> None:
    cfg = model.config.to_text().encode("utf-8")
    params = list(model.named_parameters())
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(cfg)))
        fh.write(cfg)
        fh.write(struct.pack("<I", len(params)))
        for name, p in params:
            raw = name.encode("utf-8")
            bits = 64 if p.dtype == np.float64 else 32
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<BB", p.ndim, bits))
            fh.write(struct.pack(f"<{p.ndim}Q", *p.shape))
            fh.write(np.ascontiguousarray(p.data, dtype=f"<f{bits // 8}").tobytes())


def _read(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError("truncated checkpoint")
    return buf


def load_checkpoint(path) -> ERR:
    with open(path, "rb") as fh:
        if _read(fh, len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
        version, cfg_len = struct.unpack("<II", _read(fh, 8))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        config = ErrConfig.from_text(_read(fh, cfg_len).decode("utf-8"))
        (count,) = struct.unpack("<I", _read(fh, 4))
        state = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", _read(fh, 2))
            name = _read(fh, nlen).decode("utf-8")
            ndim, bits = struct.unpack("<BB", _read(fh, 2))
            if bits not in (32, 64):
                raise CheckpointError(f"{name}: bad precision flag {bits}")
            shape = struct.unpack(f"<{ndim}Q", _read(fh, 8 * ndim))
            n = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(_read(fh, n * bits // 8), dtype=f"<f{bits // 8}").reshape(shape)
            state[name] = arr.astype(np.float64 if bits == 64 else np.float32)
        if fh.read(1):
            raise CheckpointError(f"{path}: trailing bytes after the last record")
    model = ERR(config)
    try:
        model.load_state_dict(state)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    return model

"""Training loop, evaluation and single-image inference."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..metrics import psnr, ssim
from ..pipeline import ERR, ErrConfig, ablation_variants, save_checkpoint
from ..tensor import Tensor, no_grad, pad2d
from .data import random_crop
from .degrade import ImagePair
from .optim import AdamW

log = logging.getLogger(__name__)

LOG_FIELDS = ("step", "lr", "l1_s1", "l1_s2", "l1_s3", "ssim_s1", "ssim_s2", "ssim_s3", "lzf", "llf", "lhf", "total")
STAGES = ("s1", "s2", "s3")


class NumericalError(RuntimeError):
    pass


@dataclass
class TrainResult:
    history: list[dict] = field(default_factory=list)
    best_psnr: float = float("-inf")
    best_step: int = -1
    skipped: int = 0
    model: ERR | None = None


def _batch(pairs, config: ErrConfig, rng, dtype) -> tuple[Tensor, Tensor]:
    xs, ys = [], []
    for _ in range(config.batch):
        pair = pairs[int(rng.integers(len(pairs)))]
        x, y = random_crop(pair, config.patch, rng)
        xs.append(x)
        ys.append(y)
    return Tensor(np.stack(xs).astype(dtype)), Tensor(np.stack(ys).astype(dtype))


def train(
    config: ErrConfig,
    pairs: list[ImagePair],
    out_dir=None,
    eval_pairs: list[ImagePair] | None = None,
    model: ERR | None = None,
) -> TrainResult:
    """AdamW + cosine schedule on random patches.

    At step 1, every ``log_every`` steps and at the last step one CSV row is written
    with the pre-update losses of that step and the model is scored on
    ``eval_pairs`` (default: the first 8 training pairs); the best mean
    PSNR(O_s3) is kept as ``best.ckpt``. ``last.ckpt`` is always written.
    """
    if not pairs:
        raise ValueError("train needs at least one pair")
    model = ERR(config) if model is None else model
    eval_pairs = pairs[:8] if eval_pairs is None else eval_pairs
    dtype = np.dtype(config.dtype)
    rng = np.random.default_rng(config.seed + 1)
    params = model.parameters()
    opt = AdamW(params, config.lr, config.lr_min, config.iters, weight_decay=config.weight_decay)
    out = Path(out_dir) if out_dir is not None else None
    writer = None
    fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        fh = open(out / "train_log.csv", "w", newline="")
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        writer.writeheader()
    result = TrainResult(model=model)

    def checkpoint(step: int) -> None:
        score = evaluate(model, eval_pairs).mean["psnr_s3"] if eval_pairs else float("nan")
        if result.best_step < 0 or score > result.best_psnr:
            result.best_psnr, result.best_step = score, step
            if out is not None:
                save_checkpoint(out / "best.ckpt", model)

    try:
        if config.iters == 0:
            checkpoint(0)
        t0 = time.perf_counter()
        for step in range(1, config.iters + 1):
            x, y = _batch(pairs, config, rng, dtype)
            report = model.loss(model(x), y)
            total = report.total.item()
            if not np.isfinite(total):
                raise NumericalError(f"non-finite total loss at step {step}")
            opt.zero_grad()
            report.total.backward()
            lr = opt.step()
            if step == 1 or step % config.log_every == 0 or step == config.iters:
                row = {"step": step, "lr": lr, **report.as_dict()}
                result.history.append(row)
                if writer is not None:
                    writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
                    fh.flush()
                checkpoint(step)
                log.info("step %d  total %.5f  lr %.2e  (%.1fs)", step, total, lr, time.perf_counter() - t0)
    finally:
        if fh is not None:
            fh.close()
    result.skipped = opt.state.skipped
    if out is not None:
        save_checkpoint(out / "last.ckpt", model)
    return result


STAGE_TERMS = {1: ("l1_s1", "ssim_s1", "lzf"), 2: ("l1_s2", "ssim_s2", "llf"), 3: ("l1_s3", "ssim_s3", "lhf")}


def overfit_stage(
    config: ErrConfig,
    pair: ImagePair,
    stage: int,
    log_every: int = 100,
    model: ERR | None = None,
) -> tuple[ERR, list[dict]]:
    """Fit one pair with only the terms tied to ``stage`` (its L1, SSIM and band loss).

    The whole image is used as the batch. Stages after ``stage`` receive no
    gradient, so a fresh model is built with them switched off (earlier
    stages initialise identically either way). Returns the model and the
    pre-update LossReport rows at step 1 and every ``log_every`` steps.
    """
    if stage not in STAGE_TERMS:
        raise ValueError(f"stage must be 1, 2 or 3, got {stage}")
    if model is None:
        model = ablation_variants(config, ("LFR", "HFR")[stage - 1 :])
    dtype = np.dtype(config.dtype)
    x = Tensor(pair.degraded[None].astype(dtype))
    y = Tensor(pair.gt[None].astype(dtype))
    opt = AdamW(model.parameters(), config.lr, config.lr_min, config.iters, weight_decay=config.weight_decay)
    history = []
    for step in range(1, config.iters + 1):
        report = model.loss(model(x), y)
        terms = [getattr(report, name) for name in STAGE_TERMS[stage]]
        objective = terms[0] + terms[1] + terms[2]
        if not np.isfinite(objective.item()):
            raise NumericalError(f"non-finite stage-{stage} objective at step {step}")
        if step == 1 or step % log_every == 0 or step == config.iters:
            history.append({"step": step, "objective": objective.item(), **report.as_dict()})
        opt.zero_grad()
        objective.backward()
        opt.step()
    return model, history


def read_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: (int(v) if k == "step" else float(v)) for k, v in row.items()} for row in csv.DictReader(fh)]


# ---------------------------------------------------------------------------
# inference and evaluation
# ---------------------------------------------------------------------------


def run_stages(model: ERR, image: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All three stage outputs for one [3, H, W] image of any extent, clamped to [0, 1].

    The image is reflect-padded up to the model's extent multiple and cropped back.
    """
    _, h, w = image.shape
    m = model.config.multiple
    pad = (0, (-h) % m, 0, (-w) % m)
    x = Tensor(image[None].astype(model.config.dtype))
    with no_grad():
        if pad[1] or pad[3]:
            x = pad2d(x, pad, mode="reflect")
        bundle = model(x)
    return tuple(np.clip(o.data[0, :, :h, :w].astype(np.float64), 0.0, 1.0) for o in bundle.outputs)


def infer(model: ERR, image: np.ndarray, stage: int = 3) -> np.ndarray:
    if stage not in (1, 2, 3):
        raise ValueError(f"stage must be 1, 2 or 3, got {stage}")
    return run_stages(model, image)[stage - 1]


@dataclass
class EvalReport:
    rows: list[dict]
    mean: dict[str, float]

    def format(self) -> str:
        keys = [f"{m}_{s}" for m in ("psnr", "ssim") for s in STAGES]
        lines = ["id," + ",".join(keys)]
        for r in self.rows + [{"id": "mean", **self.mean}]:
            lines.append(r["id"] + "," + ",".join(f"{r[k]:.4f}" for k in keys))
        return "\n".join(lines)


def evaluate(model: ERR, pairs: list[ImagePair]) -> EvalReport:
    rows = []
    for pair in pairs:
        row = {"id": pair.id}
        for s, out in zip(STAGES, run_stages(model, pair.degraded)):
            row[f"psnr_{s}"] = psnr(out, pair.gt)
            row[f"ssim_{s}"] = ssim(out, pair.gt)
        rows.append(row)
    keys = [k for k in rows[0] if k != "id"] if rows else []
    mean = {k: float(np.mean([r[k] for r in rows])) for k in keys}
    return EvalReport(rows, mean)

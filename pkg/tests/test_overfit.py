"""Regression fixtures that need a trained model (single-pair overfitting)."""

import numpy as np
import pytest

from errnet.harness.degrade import random_scene, synth_degrade
from errnet.harness.train import run_stages, train
from errnet.pipeline import ErrConfig
from slow_runs import full_overfit, stage_overfit

pytestmark = pytest.mark.slow


def test_stage1_mean_matches_gt():
    pair, model, history = stage_overfit(1)
    o1 = run_stages(model, pair.degraded)[0]
    assert abs(o1.mean() - pair.gt.mean()) / pair.gt.mean() < 0.02
    assert history[-1]["lzf"] < 1e-3 * history[0]["lzf"]


@pytest.mark.xfail(strict=True, reason="AdamW jitters around the |DC| kink once L_zf nears zero; see the ledger")
def test_stage1_zero_freq_loss_monotone_over_checkpoints():
    _, _, history = stage_overfit(1)
    lzf = [row["lzf"] for row in history]
    assert all(b < a for a, b in zip(lzf, lzf[1:]))


def test_stage1_zero_freq_loss_descends_before_floor():
    # the approach phase is monotone: step 1 to the first checkpoint, then
    # every checkpoint stays far below the initial value
    _, _, history = stage_overfit(1)
    lzf = [row["lzf"] for row in history]
    assert lzf[1] < 0.05 * lzf[0]
    assert max(lzf[1:]) < 0.05 * lzf[0]


def test_stage2_low_freq_loss_drops_tenfold():
    _, _, history = stage_overfit(2)
    assert history[-1]["llf"] * 10 <= history[0]["llf"]


def test_stage3_high_band_drops_fivefold():
    _, _, history = stage_overfit(3, "rain")
    assert history[-1]["lhf"] * 5 <= history[0]["lhf"]


def test_overfit_stage_ordering():
    _, _, report, _ = full_overfit()
    m = report.mean
    assert m["psnr_s3"] > m["psnr_s2"] > m["psnr_s1"]


def test_overfit_full_objective_spectral_terms():
    _, result, _, _ = full_overfit()
    first, last = result.history[0], result.history[-1]
    assert last["llf"] * 10 <= first["llf"]
    assert last["lzf"] < 1e-3 * first["lzf"]


def test_total_strictly_decreases_first_100_steps():
    seeds = range(20)
    good = 0
    for seed in seeds:
        cfg = ErrConfig(channels=8, blocks=(1, 1, 1), kan_layers=1, kan_groups=2, d_state=4, patch=32,
                        iters=100, log_every=1, seed=seed)
        pair = synth_degrade(random_scene(32, seed=seed), "lowlight", seed=seed)
        totals = [row["total"] for row in train(cfg, [pair]).history]
        good += all(b < a for a, b in zip(totals, totals[1:]))
    assert good >= 0.95 * len(seeds)

from pathlib import Path

import numpy as np
import pytest

from errnet.harness.cli import main
from errnet.harness.data import DataError, load_pairs, random_crop
from errnet.harness.degrade import ImagePair, random_scene, synth_degrade
from errnet.harness.experiments import fill_gain_fraction, run_swap_experiment
from errnet.harness.imageio import ImageFormatError, load_image, save_image, to_bytes
from errnet.harness.optim import AdamW, OptimizerState, adamw_step, cosine_lr
from errnet.harness.train import LOG_FIELDS, evaluate, infer, read_log, run_stages, train
from errnet.pipeline import ERR, ErrConfig, load_checkpoint, save_checkpoint
from errnet.spectral import read_curve_csv
from errnet.tensor import parameter

FIXTURES = Path(__file__).parent / "fixtures"
SMALL = dict(channels=8, blocks=(1, 1, 1), kan_layers=1, kan_groups=2, d_state=4, patch=32)


# -- optimizer -------------------------------------------------------------


def test_zero_gradient_fixed_point():
    p = parameter(np.array([1.5, -2.0]))
    state = OptimizerState(lr0=1e-2, total=10)
    adamw_step([p], [np.zeros(2)], state)
    assert np.array_equal(p.data, [1.5, -2.0])


def test_first_step_is_minus_lr():
    p = parameter(np.zeros(1))
    state = OptimizerState(lr0=1e-3, lr_min=0.0, total=10)
    lr = adamw_step([p], [np.ones(1)], state)
    assert lr == 1e-3
    assert abs(p.data[0] + 1e-3 / (1 + 1e-8)) < 1e-15


def test_cosine_schedule_endpoints():
    assert cosine_lr(0, 2000, 5e-4, 1e-7) == 5e-4
    assert abs(cosine_lr(2000, 2000, 5e-4, 1e-7) - 1e-7) < 1e-12
    assert abs(cosine_lr(1000, 2000, 5e-4, 1e-7) - (1e-7 + 0.5 * (5e-4 - 1e-7))) < 1e-15
    lrs = [cosine_lr(t, 50, 1.0, 0.0) for t in range(51)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))


def test_decoupled_weight_decay():
    p = parameter(np.array([2.0]))
    adamw_step([p], [np.zeros(1)], OptimizerState(lr0=0.1, total=10, weight_decay=0.5))
    assert np.isclose(p.data[0], 2.0 * (1 - 0.05))


def test_nonfinite_gradient_skipped():
    p = parameter(np.array([1.0]))
    opt = AdamW([p], lr=0.1, total=10)
    p.grad = np.array([np.nan])
    assert opt.step() == 0.0
    assert p.data[0] == 1.0 and opt.state.skipped == 1 and opt.state.step == 0
    p.grad = np.array([1.0])
    opt.step()
    assert p.data[0] < 1.0 and opt.state.step == 1


# -- image io --------------------------------------------------------------


def test_ppm_mapping(tmp_path):
    path = tmp_path / "a.ppm"
    px = np.array([[[0, 128, 255], [255, 0, 128]], [[128, 255, 0], [0, 0, 0]]], np.uint8)
    path.write_bytes(b"P6\n# made by hand\n2 2\n255\n" + px.tobytes())
    img = load_image(path)
    assert img.shape == (3, 2, 2)
    assert np.array_equal(img[:, 0, 0], [0, 128 / 255, 1])
    save_image(tmp_path / "b.ppm", img)
    assert (tmp_path / "b.ppm").read_bytes() == b"P6\n2 2\n255\n" + px.tobytes()


def test_png_roundtrip(tmp_path):
    img = random_scene(16, seed=2)
    save_image(tmp_path / "s.png", img)
    back = load_image(tmp_path / "s.png")
    assert np.array_equal(to_bytes(back), to_bytes(img))


def test_round_half_up_and_clamp():
    img = np.array([0.5 / 255, 1.5 / 255, -0.2, 1.3]).reshape(1, 2, 2).repeat(3, 0)
    assert to_bytes(img)[..., 0].ravel().tolist() == [1, 2, 0, 255]


@pytest.mark.parametrize("name,shape", [("checker_8x6.png", (3, 8, 6)), ("checker_gray_4x4.png", (3, 4, 4))])
def test_png_fixture_checkerboard(name, shape):
    img = load_image(FIXTURES / name)
    assert img.shape == shape
    yy, xx = np.mgrid[0 : shape[1], 0 : shape[2]]
    expected = ((yy + xx) % 2).astype(float)
    for c in range(3):
        assert np.array_equal(img[c], expected)


def test_image_errors(tmp_path):
    cases = {
        "trunc.ppm": b"P6\n4 4\n255\n" + b"\x00" * 10,
        "maxval.ppm": b"P6\n1 1\n65535\n" + b"\x00" * 6,
        "huge.ppm": b"P6\n99999 1\n255\n",
        "junk.png": b"GIF89a....",
        "badpng.png": b"\x89PNG\r\n\x1a\n" + b"\x00" * 20,
        "header.ppm": b"P6\nx y\n255\n",
    }
    for name, data in cases.items():
        (tmp_path / name).write_bytes(data)
        with pytest.raises(ImageFormatError):
            load_image(tmp_path / name)
    with pytest.raises(ImageFormatError):
        save_image(tmp_path / "x.jpg", np.zeros((3, 2, 2)))


# -- degradations ----------------------------------------------------------


def test_lowlight_closed_form():
    pair = synth_degrade(np.ones((3, 4, 4)), "lowlight", gain=0.3, gamma=2.0, noise=0.0)
    assert np.allclose(pair.degraded, 0.09, atol=1e-15)


def test_haze_unit_transmission():
    gt = random_scene(16, seed=4)
    assert np.array_equal(synth_degrade(gt, "haze", t=1.0).degraded, gt)


@pytest.mark.parametrize("kind", ["lowlight", "rain", "blur", "haze"])
def test_degrade_deterministic_and_clamped(kind):
    gt = random_scene(32, seed=5)
    a, b = synth_degrade(gt, kind, seed=9), synth_degrade(gt, kind, seed=9)
    assert a.degraded.tobytes() == b.degraded.tobytes()
    assert a.degraded.min() >= 0 and a.degraded.max() <= 1
    assert not np.array_equal(a.degraded, gt)
    with pytest.raises(ValueError):
        synth_degrade(gt, "snow")


def test_pair_shape_mismatch():
    with pytest.raises(ValueError):
        ImagePair(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))


# -- data folders ----------------------------------------------------------


def _write_dataset(root: Path, n=2, size=32, kind="lowlight"):
    (root / "degraded").mkdir(parents=True)
    (root / "gt").mkdir()
    pairs = []
    for i in range(n):
        pair = synth_degrade(random_scene(size, seed=i), kind, seed=i, pair_id=f"im{i}")
        save_image(root / "degraded" / f"im{i}.png", pair.degraded)
        save_image(root / "gt" / f"im{i}.png", pair.gt)
        pairs.append(pair)
    return pairs


def test_load_pairs(tmp_path):
    _write_dataset(tmp_path)
    pairs = load_pairs(tmp_path)
    assert [p.id for p in pairs] == ["im0", "im1"]
    assert pairs[0].degraded.shape == (3, 32, 32)


def test_load_pairs_errors(tmp_path):
    with pytest.raises(DataError, match="missing directory"):
        load_pairs(tmp_path)
    _write_dataset(tmp_path)
    (tmp_path / "gt" / "im1.png").unlink()
    with pytest.raises(DataError, match="partner"):
        load_pairs(tmp_path)
    save_image(tmp_path / "gt" / "im1.png", np.zeros((3, 16, 32)))
    with pytest.raises(DataError, match="extents differ"):
        load_pairs(tmp_path)
    (tmp_path / "gt" / "im1.png").write_bytes(b"\x89PNG\r\n\x1a\nbroken")
    with pytest.raises(DataError):
        load_pairs(tmp_path)


def test_random_crop_pads_small_images():
    rng = np.random.default_rng(0)
    pair = ImagePair(np.random.default_rng(1).random((3, 20, 40)), np.random.default_rng(2).random((3, 20, 40)))
    x, y = random_crop(pair, 32, rng)
    assert x.shape == y.shape == (3, 32, 32)
    assert np.array_equal(x[:, 20], x[:, 18]) and np.array_equal(y[:, 21], y[:, 17])  # reflected rows


# -- training, evaluation, inference ----------------------------------------


def test_train_zero_iters_is_init(tmp_path):
    cfg = ErrConfig(**SMALL, iters=0)
    pairs = [synth_degrade(random_scene(32, seed=0), "haze", seed=0, pair_id="a")]
    res = train(cfg, pairs, tmp_path)
    init = ERR(cfg)
    for name in ("best.ckpt", "last.ckpt"):
        back = load_checkpoint(tmp_path / name)
        for (_, p), (_, q) in zip(init.named_parameters(), back.named_parameters()):
            assert p.data.tobytes() == q.data.tobytes()
    assert res.best_step == 0 and res.history == []
    assert read_log(tmp_path / "train_log.csv") == []


def test_train_log_schema_and_determinism(tmp_path):
    cfg = ErrConfig(**SMALL, iters=10, log_every=1, lr=1e-3)
    pairs = [synth_degrade(random_scene(48, seed=i), "rain", seed=i, pair_id=str(i)) for i in range(2)]
    a = train(cfg, pairs, tmp_path / "a")
    b = train(cfg, pairs, tmp_path / "b")
    assert (tmp_path / "a" / "train_log.csv").read_bytes() == (tmp_path / "b" / "train_log.csv").read_bytes()
    header = (tmp_path / "a" / "train_log.csv").read_text().splitlines()[0]
    assert header == ",".join(LOG_FIELDS) == "step,lr,l1_s1,l1_s2,l1_s3,ssim_s1,ssim_s2,ssim_s3,lzf,llf,lhf,total"
    rows = read_log(tmp_path / "a" / "train_log.csv")
    assert [r["step"] for r in rows] == list(range(1, 11))
    assert rows == a.history
    for r in rows:
        parts = sum(r[k] for k in LOG_FIELDS[2:-1])
        assert abs(parts - r["total"]) < 1e-5 * max(1.0, r["total"])
    assert a.best_step >= 1 and b.best_psnr == a.best_psnr


def test_train_rejects_empty():
    with pytest.raises(ValueError):
        train(ErrConfig(**SMALL), [])


def test_run_stages_pads_and_crops():
    model = ERR(ErrConfig(**SMALL))
    img = np.random.default_rng(0).random((3, 27, 35))
    outs = run_stages(model, img)
    assert all(o.shape == img.shape for o in outs)
    assert np.allclose(outs[2], img, atol=1e-6)  # identity at init, up to float32
    with pytest.raises(ValueError):
        infer(model, img, stage=4)


def test_evaluate_table():
    model = ERR(ErrConfig(**SMALL))
    pairs = [synth_degrade(random_scene(32, seed=i), "blur", seed=i, pair_id=f"p{i}") for i in range(2)]
    rep = evaluate(model, pairs)
    assert [r["id"] for r in rep.rows] == ["p0", "p1"]
    lines = rep.format().splitlines()
    assert lines[0] == "id,psnr_s1,psnr_s2,psnr_s3,ssim_s1,ssim_s2,ssim_s3"
    assert lines[-1].startswith("mean,")
    assert abs(rep.mean["psnr_s1"] - np.mean([r["psnr_s1"] for r in rep.rows])) < 1e-12


# -- swap experiment -------------------------------------------------------


def test_swap_identity_pair_hits_cap(tmp_path):
    gt = random_scene(32, seed=1)
    rep = run_swap_experiment(ImagePair(gt.copy(), gt), (0, 1, 4), tmp_path)
    assert rep.psnr_exchanged_input == rep.psnr_exchanged_gt == 99.0
    assert read_curve_csv(tmp_path / "curve.csv") == rep.curve
    assert (tmp_path / "curve.csv").read_text().splitlines()[0] == "k,psnr"
    for name in ("exchanged_input.png", "exchanged_gt.png", "fill_k000.png", "fill_k004.png"):
        assert (tmp_path / name).exists()


def test_swap_curve_non_decreasing():
    for seed in range(5):
        pair = synth_degrade(random_scene(32, seed=seed), "rain", seed=seed)
        rep = run_swap_experiment(pair, (0, 1, 2, 4, 8, 16, 32))
        ps = [p for _, p in rep.curve]
        assert all(b >= a - 1e-9 for a, b in zip(ps, ps[1:]))
        assert rep.curve[-1][1] == 99.0


def test_fill_gain_fraction_cases():
    assert fill_gain_fraction([(0, 10.0), (4, 16.0), (8, 17.0), (16, 18.0), (32, 99.0)], 32) == pytest.approx(0.875)
    assert fill_gain_fraction([(0, 10.0), (8, 10.0), (16, 10.0)], 32) == 1.0


# -- CLI -------------------------------------------------------------------


def test_cli_exit_codes(tmp_path, capsys):
    assert main([]) == 1
    assert main(["train", "--config", "x"]) == 1
    assert main(["swap-experiment", "--input", "a", "--gt", "b", "--ks", "1,x", "--out", "o"]) == 1
    assert main(["eval", "--checkpoint", str(tmp_path / "none.ckpt"), "--data", str(tmp_path)]) == 2
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    assert main(["infer", "--checkpoint", str(bad), "--input", "a.png", "--output", "b.png"]) == 2
    (tmp_path / "cfg.txt").write_text("bogus=1\n")
    assert main(["train", "--config", str(tmp_path / "cfg.txt"), "--data", str(tmp_path), "--out", str(tmp_path)]) == 1
    (tmp_path / "cfg.txt").write_text("channels=8\n")
    assert main(["train", "--config", str(tmp_path / "cfg.txt"), "--data", str(tmp_path / "nodata"), "--out", str(tmp_path)]) == 2
    assert main(["synth", "--gt-dir", str(tmp_path / "nowhere"), "--kind", "haze", "--out", str(tmp_path)]) == 2
    assert main(["synth", "--gt-dir", str(tmp_path), "--kind", "fog", "--out", str(tmp_path)]) == 1
    capsys.readouterr()


def test_cli_end_to_end(tmp_path, capsys):
    clean = tmp_path / "clean"
    clean.mkdir()
    for i in range(2):
        save_image(clean / f"s{i}.png", random_scene(32, seed=i))
    data = tmp_path / "data"
    assert main(["synth", "--gt-dir", str(clean), "--kind", "lowlight", "--seed", "3", "--out", str(data)]) == 0
    assert len(load_pairs(data)) == 2
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("\n".join(f"{k}={','.join(map(str, v)) if isinstance(v, tuple) else v}" for k, v in SMALL.items()) + "\niters=3\nlog_every=1\n")
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--data", str(data), "--out", str(out)]) == 0
    assert len(read_log(out / "train_log.csv")) == 3
    assert main(["eval", "--checkpoint", str(out / "best.ckpt"), "--data", str(data)]) == 0
    assert "mean," in capsys.readouterr().out
    result = tmp_path / "restored.png"
    args = ["infer", "--checkpoint", str(out / "best.ckpt"), "--input", str(data / "degraded" / "s0.png")]
    assert main(args + ["--output", str(result), "--stage", "2"]) == 0
    assert load_image(result).shape == (3, 32, 32)
    swap = tmp_path / "swap"
    argv = ["swap-experiment", "--input", str(data / "degraded" / "s0.png"), "--gt", str(data / "gt" / "s0.png")]
    assert main(argv + ["--ks", "0,2,8", "--out", str(swap)]) == 0
    assert [k for k, _ in read_curve_csv(swap / "curve.csv")] == [0, 2, 8]


def test_cli_numeric_failure(tmp_path, monkeypatch, capsys):
    import errnet.harness.gradcheck as gc

    monkeypatch.setattr(gc, "run_gradcheck", lambda seed: [gc.CheckResult("x", 1.0, 1e-5)])
    assert main(["gradcheck", "--seed", "1"]) == 3
    monkeypatch.setattr(gc, "run_gradcheck", lambda seed: [gc.CheckResult("x", 0.0, 1e-5)])
    assert main(["gradcheck"]) == 0
    capsys.readouterr()


def test_checkpoint_reloads_in_infer(tmp_path):
    model = ERR(ErrConfig(**SMALL))
    save_checkpoint(tmp_path / "m.ckpt", model)
    img = random_scene(32, seed=3)
    a = infer(model, img, 3)
    b = infer(load_checkpoint(tmp_path / "m.ckpt"), img, 3)
    assert np.array_equal(a, b)

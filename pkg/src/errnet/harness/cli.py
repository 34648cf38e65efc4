"""Command-line entry point: ``errnet <subcommand>`` or ``python -m errnet``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..pipeline import CheckpointError, ErrConfig, load_checkpoint
from .data import DataError, load_pairs
from .degrade import KINDS, ImagePair, synth_degrade
from .imageio import IMAGE_SUFFIXES, ImageFormatError, load_image, save_image

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def cmd_swap(args) -> int:
    from .experiments import run_swap_experiment

    try:
        pair = ImagePair(load_image(args.input), load_image(args.gt), Path(args.input).stem)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    report = run_swap_experiment(pair, args.ks, args.out)
    print(report.format())
    return EXIT_OK


def cmd_train(args) -> int:
    from .train import train

    try:
        config = ErrConfig.load(args.config)
    except (ValueError, OSError) as exc:
        raise UsageError(f"config {args.config}: {exc}") from None
    pairs = load_pairs(args.data)
    result = train(config, pairs, args.out)
    print(f"best mean PSNR(O_s3) {result.best_psnr:.3f} dB at step {result.best_step}; "
          f"{result.skipped} skipped updates; checkpoints in {args.out}")
    return EXIT_OK


def cmd_infer(args) -> int:
    from .train import infer

    model = load_checkpoint(args.checkpoint)
    save_image(args.output, infer(model, load_image(args.input), args.stage))
    return EXIT_OK


def cmd_eval(args) -> int:
    from .train import evaluate

    model = load_checkpoint(args.checkpoint)
    print(evaluate(model, load_pairs(args.data)).format())
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import format_report, run_gradcheck

    results = run_gradcheck(args.seed)
    print(format_report(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


def cmd_synth(args) -> int:
    src = Path(args.gt_dir)
    if not src.is_dir():
        raise DataError(f"missing directory {src}")
    files = sorted(p for p in src.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise DataError(f"{src}: no images found")
    out = Path(args.out)
    (out / "degraded").mkdir(parents=True, exist_ok=True)
    (out / "gt").mkdir(parents=True, exist_ok=True)
    for i, path in enumerate(files):
        pair = synth_degrade(load_image(path), args.kind, seed=args.seed + i, pair_id=path.stem)
        save_image(out / "degraded" / f"{path.stem}.png", pair.degraded)
        save_image(out / "gt" / f"{path.stem}.png", pair.gt)
    print(f"wrote {len(files)} {args.kind} pairs to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="errnet", description="Three-stage frequency-decoupled image restoration.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("swap-experiment", help="zero-frequency exchange and progressive fill curve")
    s.add_argument("--input", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--ks", type=_int_list, default=[0, 1, 2, 4, 8, 16, 32])
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_swap)

    s = sub.add_parser("train", help="train on <data>/degraded and <data>/gt")
    s.add_argument("--config", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("infer", help="restore one image")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--stage", type=int, choices=(1, 2, 3), default=3)
    s.set_defaults(fn=cmd_infer)

    s = sub.add_parser("eval", help="per-image and mean PSNR/SSIM of every stage")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("gradcheck", help="finite-difference check of every differentiable op")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_gradcheck)

    s = sub.add_parser("synth", help="make degraded/gt pairs from clean images")
    s.add_argument("--gt-dir", required=True)
    s.add_argument("--kind", required=True, choices=KINDS)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_synth)
    return p


def main(argv=None) -> int:
    from .train import NumericalError

    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"errnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"errnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ImageFormatError, CheckpointError, FileNotFoundError) as exc:
        print(f"errnet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"errnet: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Train a linear and a nonlinear toy network identically, then split their PSNR/SSIM by band."""

import argparse
import time

from errnet.harness.experiments import linear_vs_nonlinear, synthetic_suite
from errnet.spectral import format_attribution


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kind", default="lowlight")
    ap.add_argument("--k", type=int, default=8, help="cutoff between low and high band")
    ap.add_argument("--train", type=int, default=8)
    ap.add_argument("--test", type=int, default=4)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--iters", type=int, default=300)
    ap.add_argument("--channels", type=int, default=16)
    ap.add_argument("--depth", type=int, default=3)
    args = ap.parse_args()

    t0 = time.perf_counter()
    train_pairs = synthetic_suite(args.kind, args.train, args.size, seed=1)
    test_pairs = synthetic_suite(args.kind, args.test, args.size, seed=2)
    table = linear_vs_nonlinear(train_pairs, test_pairs, args.k, args.channels, args.depth, args.iters)
    print(format_attribution(table, ("nonlin", "linear")))
    print(f"{time.perf_counter() - t0:.0f} s")


if __name__ == "__main__":
    main()

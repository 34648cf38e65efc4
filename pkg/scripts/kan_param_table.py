#!/usr/bin/env python3
"""FW-KAN vs MLP parameter counts at matched width, desk and wide presets."""

from errnet.hfr import param_count_comparison
from errnet.pipeline import ERR, ErrConfig, wide_config


def main():
    for name, cfg in (("desk", ErrConfig()), ("wide", wide_config())):
        total = ERR(cfg).num_parameters()
        kan, _ = param_count_comparison(cfg)
        print(f"{name}: C={cfg.channels}, groups={cfg.kan_groups}, model total {total:,}, FW-KAN ({cfg.kan_layers} layers) {kan:,}")
        print(f"  {'depth':>5} {'FW-KAN':>10} {'MLP':>10}")
        for depth in (6, 12, 24):
            k, m = param_count_comparison(cfg, depth)
            print(f"  {depth:5d} {k:10,} {m:10,}")


if __name__ == "__main__":
    main()

"""Train a self-guided and an unconditional model on the same data and compare.

Writes metrics.csv, final.ckpt, a samples scatter and a metric chart per run
under OUT/guided and OUT/unconditional, then prints the final scores.

    python scripts/compare_guidance.py --out runs/compare [--iters 20000] [key=value ...]
"""

import argparse
import logging
import os
import time

import numpy as np

from flowguide import io
from flowguide.config import Config, parse
from flowguide.datasets import make_dataset
from flowguide.trainer import run_training


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/compare")
    ap.add_argument("--iters", type=int, default=None)
    ap.add_argument("overrides", nargs="*", help="config entries such as sk_lambda=50")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = parse("\n".join(args.overrides), Config())
    if args.iters is not None:
        cfg = cfg.replace(total_iters=args.iters)
    data = make_dataset(cfg.dataset, cfg.n, cfg.seed, cfg.ring_radius, cfg.data_noise)

    finals = {}
    for mode in ("guided", "unconditional"):
        out = os.path.join(args.out, mode)
        t0 = time.perf_counter()
        result = run_training(cfg.replace(mode=mode), data, out_dir=out)
        io.emit_scatter_svg(result.final["samples"], np.zeros(len(result.final["samples"]), int),
                            os.path.join(out, "samples.svg"))
        io.emit_line_chart_svg(os.path.join(out, "metrics.csv"), ["loss_d", "nmi", "frechet"],
                               os.path.join(out, "metrics.svg"))
        finals[mode] = (result.final, time.perf_counter() - t0)

    for mode, (final, secs) in finals.items():
        line = f"{mode:14s} frechet {final['frechet']:.4f}"
        if final.get("histogram") is not None:
            share = final["histogram"] / final["histogram"].sum()
            line += f"  nmi {final['nmi']:.3f}  ari {final['ari']:.3f}  shares {share.min():.3f}..{share.max():.3f}"
        print(f"{line}  ({secs:.0f}s)")


if __name__ == "__main__":
    main()

"""Offline guidance: pretrain without conditions, cluster features, fine-tune.

1. train an unconditional model
2. k-means on its hidden features of the (noised) training data
3. fine-tune with the cluster ids as one-hot conditions
4. sample each cluster and report how pure each conditional sample set is

    python scripts/offline_guidance.py --out runs/offline [--iters 6000] [key=value ...]
"""

import argparse
import logging
import os

import numpy as np

from flowguide import io
from flowguide.cli import cluster_labels, nearest_mode_labels
from flowguide.config import Config, parse
from flowguide.datasets import make_dataset
from flowguide.metrics import nmi
from flowguide.sampler import generate
from flowguide.trainer import run_training, train_offline


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/offline")
    ap.add_argument("--iters", type=int, default=6000, help="iterations for each of the two stages")
    ap.add_argument("--kmeans-iters", type=int, default=100)
    ap.add_argument("overrides", nargs="*")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = parse("\n".join(args.overrides), Config()).replace(total_iters=args.iters)
    data = make_dataset(cfg.dataset, cfg.n, cfg.seed, cfg.ring_radius, cfg.data_noise)

    pre = run_training(cfg.replace(mode="unconditional"), data, out_dir=os.path.join(args.out, "pretrain"))
    labels = cluster_labels(pre.state, data, cfg.clusters, args.kmeans_iters)
    io.write_labels(os.path.join(args.out, "labels.csv"), labels)
    print(f"k-means nmi vs modes {nmi(labels, data.mode_labels):.3f}")

    fine = train_offline(pre.state.net(), cfg, data, labels, out_dir=os.path.join(args.out, "offline"))
    print(f"frechet unconditional {pre.final['frechet']:.4f}  offline {fine.final['frechet']:.4f}")

    rng = np.random.default_rng(cfg.seed)
    scfg = cfg.sampler()
    points, ids = [], []
    for k in range(cfg.clusters):
        x, _ = generate(fine.state, 256, scfg, rng, prototype=k)
        modes = nearest_mode_labels(x, data.samples, data.mode_labels)
        purity = np.bincount(modes).max() / len(modes)
        print(f"cluster {k}: {purity:.2f} of samples share one mode")
        points.append(x)
        ids.append(np.full(len(x), k))
    io.emit_scatter_svg(np.concatenate(points), np.concatenate(ids), os.path.join(args.out, "per_cluster.svg"))


if __name__ == "__main__":
    main()

"""Command-line entry point: ``flowguide {train,sample,eval,cluster,plot,dataset}``.

Exit status is 0 on success, 1 for usage errors and 2 for IO or parse errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np
from scipy.spatial import cKDTree

from . import checkpoint, io
from .checkpoint import CheckpointError
from .config import Config, ConfigError, apply_env, load
from .datasets import make_dataset
from .metrics import ari, frechet_distance, nmi
from .ot_guidance import hidden_features, kmeans
from .paths import interpolate
from .sampler import SamplerConfig, generate, query_prototype
from .trainer import run_training, train_offline

log = logging.getLogger("flowguide")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _dataset_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", choices=["ring8", "moons", "checkerboard"], default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flowguide", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("train", help="train a model and write metrics.csv + final.ckpt")
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--iters", type=int, default=None, help="override total_iters")
    _dataset_args(p)

    p = sub.add_parser("sample", help="draw samples from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", default="samples.csv", help="samples CSV; a scatter SVG is written next to it")
    p.add_argument("--n", type=int, default=2048)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--guidance", type=float, default=None)
    p.add_argument("--method", choices=["euler", "heun"], default=None)
    p.add_argument("--prototype", type=int, default=None)
    p.add_argument("--query-file", default=None, help="CSV with x,y columns; n samples per query")
    p.add_argument("--unconditional", action="store_true")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("eval", help="compare a samples CSV with a dataset")
    p.add_argument("--samples", required=True)
    p.add_argument("--config", default=None, help="config providing dataset parameters")
    p.add_argument("--out", default=None, help="optional CSV with frechet,nmi,ari")
    _dataset_args(p)

    p = sub.add_parser("cluster", help="k-means labels from a checkpoint's features")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True, help="labels CSV")
    p.add_argument("--clusters", type=int, default=None)
    p.add_argument("--kmeans-iters", type=int, default=100)
    _dataset_args(p)

    p = sub.add_parser("plot", help="render metric-log columns as an SVG line chart")
    p.add_argument("--metrics", required=True)
    p.add_argument("--columns", default="loss_d,loss_sk")
    p.add_argument("--out", required=True)

    p = sub.add_parser("dataset", help="write a dataset as a samples CSV (label column = mode)")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    _dataset_args(p)
    return parser


def _with_dataset_overrides(cfg: Config, args) -> Config:
    changes = {}
    if getattr(args, "dataset", None) is not None:
        changes["dataset"] = args.dataset
    if getattr(args, "n", None) is not None:
        changes["n"] = args.n
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    return cfg.replace(**changes)


def _load_config(path: str | None) -> Config:
    if path is None:
        return apply_env(Config())
    try:
        return load(path)
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    except ConfigError as exc:
        raise DataError(f"{path}: {exc}") from exc


def _dataset(cfg: Config):
    return make_dataset(cfg.dataset, cfg.n, cfg.seed, cfg.ring_radius, cfg.data_noise)


def _load_ckpt(path: str):
    try:
        return checkpoint.load_state(path)
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    except (CheckpointError, ConfigError, KeyError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from exc


def cmd_train(args) -> int:
    cfg = _with_dataset_overrides(_load_config(args.config), args)
    if args.iters is not None:
        cfg = cfg.replace(total_iters=args.iters)
    data = _dataset(cfg)
    if cfg.mode == "offline":
        if not cfg.labels_file or not cfg.init_ckpt:
            raise UsageError("offline mode needs labels_file and init_ckpt in the config")
        try:
            labels = io.read_labels(cfg.labels_file)
        except (OSError, ValueError) as exc:
            raise DataError(f"{cfg.labels_file}: {exc}") from exc
        if labels.shape[0] != data.samples.shape[0]:
            raise DataError(f"{cfg.labels_file}: {labels.shape[0]} labels for {data.samples.shape[0]} samples")
        pretrained = _load_ckpt(cfg.init_ckpt)
        result = train_offline(pretrained.net(), cfg, data, labels, out_dir=args.out)
    else:
        result = run_training(cfg, data, out_dir=args.out)
    last = result.log[-1] if result.log else None
    if last:
        print(f"iter {last['iter']}: loss_d={last['loss_d']:.4f} nmi={last['nmi']:.4f} frechet={last['frechet']:.4f}")
    print(os.path.join(args.out, "final.ckpt"))
    return 0


def cmd_sample(args) -> int:
    state = _load_ckpt(args.ckpt)
    base = state.cfg.sampler()
    scfg = SamplerConfig(
        steps=args.steps if args.steps is not None else base.steps,
        guidance=args.guidance if args.guidance is not None else base.guidance,
        method=args.method or base.method,
    )
    rng = np.random.default_rng(args.seed)
    if args.query_file:
        try:
            queries, _ = io.read_samples_csv(args.query_file)
        except (OSError, ValueError) as exc:
            raise DataError(f"{args.query_file}: {exc}") from exc
        chunks, ids = [], []
        for q in queries:
            idx = query_prototype(state, q, rng)
            pts, lab = generate(state, args.n, scfg, rng, prototype=idx)
            chunks.append(pts)
            ids.append(lab)
        points = np.concatenate(chunks) if chunks else np.zeros((0, 2))
        labels = np.concatenate(ids) if ids else np.zeros(0, dtype=np.int64)
    else:
        try:
            points, labels = generate(state, args.n, scfg, rng, prototype=args.prototype,
                                      unconditional=args.unconditional)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    try:
        io.write_samples_csv(args.out, points, labels)
        io.emit_scatter_svg(points, labels, os.path.splitext(args.out)[0] + ".svg")
    except OSError as exc:
        raise DataError(f"{args.out}: {exc.strerror}") from exc
    print(args.out)
    return 0


def nearest_mode_labels(points: np.ndarray, data_points: np.ndarray, data_labels: np.ndarray) -> np.ndarray:
    """Ground-truth mode of each point, taken from its nearest dataset point."""
    _, idx = cKDTree(data_points).query(points)
    return np.asarray(data_labels)[idx]


def cmd_eval(args) -> int:
    cfg = _with_dataset_overrides(_load_config(args.config), args)
    data = _dataset(cfg)
    try:
        points, labels = io.read_samples_csv(args.samples)
    except OSError as exc:
        raise DataError(f"{args.samples}: {exc.strerror}") from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    truth = nearest_mode_labels(points, data.samples, data.mode_labels)
    scores = {
        "frechet": frechet_distance(points, data.samples),
        "nmi": nmi(labels, truth),
        "ari": ari(labels, truth),
    }
    line = ",".join(f"{k}={v:.6g}" for k, v in scores.items())
    print(line)
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write("frechet,nmi,ari\n")
                fh.write(",".join(repr(float(scores[k])) for k in ("frechet", "nmi", "ari")) + "\n")
        except OSError as exc:
            raise DataError(f"{args.out}: {exc.strerror}") from exc
    return 0


def cluster_labels(state, data, k: int, iters: int) -> np.ndarray:
    """k-means over the network's raw layer features of the whole dataset."""
    cfg = state.cfg
    x = state.standardizer.forward(data.samples) if state.standardizer is not None else data.samples
    rng = np.random.default_rng([cfg.seed, 3])
    x_ts = interpolate(cfg.path_kind(), x, rng.standard_normal(x.shape), cfg.feature_t)
    feats = hidden_features(state.ema.shadow, state.spec, x_ts, cfg.feature_t, cfg.feature_layer)
    _, labels = kmeans(feats, k, iters, seed=cfg.seed)
    return labels


def cmd_cluster(args) -> int:
    state = _load_ckpt(args.ckpt)
    cfg = _with_dataset_overrides(state.cfg, args)
    k = args.clusters or cfg.clusters
    labels = cluster_labels(state, _dataset(cfg), k, args.kmeans_iters)
    try:
        io.write_labels(args.out, labels)
    except OSError as exc:
        raise DataError(f"{args.out}: {exc.strerror}") from exc
    print(args.out)
    return 0


def cmd_plot(args) -> int:
    columns = [c for c in args.columns.split(",") if c]
    try:
        io.emit_line_chart_svg(args.metrics, columns, args.out)
    except OSError as exc:
        raise DataError(f"{exc.filename or args.metrics}: {exc.strerror}") from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    print(args.out)
    return 0


def cmd_dataset(args) -> int:
    cfg = _with_dataset_overrides(_load_config(args.config), args)
    data = _dataset(cfg)
    try:
        io.write_samples_csv(args.out, data.samples, data.mode_labels)
    except OSError as exc:
        raise DataError(f"{args.out}: {exc.strerror}") from exc
    print(args.out)
    return 0


COMMANDS = {
    "train": cmd_train,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "cluster": cmd_cluster,
    "plot": cmd_plot,
    "dataset": cmd_dataset,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"flowguide: usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ConfigError) as exc:
        print(f"flowguide: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"flowguide: error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

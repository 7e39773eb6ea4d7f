"""Binary checkpoints.

Layout::

    b"FGCP" | u32 version | u32 metadata length | metadata (UTF-8 JSON) | arrays

Arrays are little-endian float32, concatenated in the order listed in the
metadata's ``arrays`` directory. Values are widened back to float64 on load.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"FGCP"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save(path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    directory = []
    blobs = []
    for name in sorted(arrays):
        arr = np.asarray(arrays[name], dtype="<f4")
        directory.append({"name": name, "shape": list(arr.shape)})
        blobs.append(arr.tobytes(order="C"))
    header = dict(meta, arrays=directory)
    text = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(text)))
        fh.write(text)
        for blob in blobs:
            fh.write(blob)


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    if len(raw) < 12:
        raise CheckpointError(f"{path}: truncated header")
    version, n_meta = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version} (expected {VERSION})")
    meta = json.loads(raw[12 : 12 + n_meta].decode("utf-8"))
    offset = 12 + n_meta
    arrays = {}
    for entry in meta.pop("arrays"):
        count = int(np.prod(entry["shape"], dtype=np.int64))
        end = offset + 4 * count
        if end > len(raw):
            raise CheckpointError(f"{path}: truncated array {entry['name']!r}")
        arr = np.frombuffer(raw[offset:end], dtype="<f4").reshape(entry["shape"])
        arrays[entry["name"]] = arr.astype(np.float64)
        offset = end
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return arrays, meta


# -- train state <-> checkpoint ------------------------------------------------

def save_state(path, state) -> None:
    from .config import render

    arrays = {f"param/{k}": v for k, v in state.params.items()}
    arrays.update({f"ema/{k}": v for k, v in state.ema.shadow.items()})
    arrays.update({f"adam_m/{k}": v for k, v in state.adam.m.items()})
    arrays.update({f"adam_v/{k}": v for k, v in state.adam.v.items()})
    if state.standardizer is not None:
        arrays["data/mean"] = state.standardizer.mean
        arrays["data/std"] = state.standardizer.std
    if state.condition_weights is not None:
        arrays["data/condition_weights"] = state.condition_weights
    meta = {
        "config": render(state.cfg),
        "iteration": state.iteration,
        "cond_dim": state.spec.cond_dim,
        "adam_step": state.adam.step,
        "adam_counts": state.adam.counts,
        "rng": state.rng.bit_generator.state,
    }
    save(path, arrays, meta)


def load_state(path):
    from .config import parse
    from .datasets import Standardizer
    from .nn import AdamState, EmaState
    from .trainer import TrainState

    arrays, meta = load(path)
    cfg = parse(meta["config"])

    def group(prefix):
        return {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}

    adam = AdamState(lr=cfg.lr, step=meta["adam_step"], m=group("adam_m/"), v=group("adam_v/"),
                     counts=dict(meta["adam_counts"]))
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng"]
    standardizer = None
    if "data/mean" in arrays:
        standardizer = Standardizer(arrays["data/mean"], arrays["data/std"])
    return TrainState(
        cfg=cfg,
        spec=cfg.net_spec(meta["cond_dim"]),
        params=group("param/"),
        ema=EmaState(group("ema/"), cfg.ema_decay),
        adam=adam,
        rng=rng,
        iteration=meta["iteration"],
        standardizer=standardizer,
        condition_weights=arrays.get("data/condition_weights"),
    )

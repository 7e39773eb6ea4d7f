"""Self-guided flow-matching training.

A step regresses the path velocity with the network conditioned on either the
zero vector (warmup), a prototype picked from the EMA network's own features,
or the learnable null embedding (dropout). Alongside, a Sinkhorn-Knopp loss
on EMA features trains the feature head and the prototypes.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .config import Config
from .datasets import Dataset, Standardizer
from .metrics import ari, assignment_histogram, frechet_distance, nmi
from .nn import (
    AdamState,
    EmaState,
    NetSpec,
    Params,
    adam_step,
    ema_update,
    init_velocity_params,
    select_conditions,
    velocity_forward,
)
from .ot_guidance import (
    assign_prototypes,
    hard_codes,
    head_forward,
    hidden_features,
    init_head,
    init_prototypes,
    normalize,
    sinkhorn,
    sk_loss,
)
from .paths import interpolate, target_velocity
from .sampler import generate

log = logging.getLogger(__name__)

NET = "net."
HEAD = "head."
PROTOS = "prototypes"
NULL = "null"




@dataclass
class TrainState:
    cfg: Config
    spec: NetSpec
    params: Params
    ema: EmaState
    adam: AdamState
    rng: np.random.Generator
    iteration: int = 0
    standardizer: Standardizer | None = None
    # sampling weights over conditions, refreshed at every evaluation
    condition_weights: np.ndarray | None = None

    def net(self) -> Params:
        return {k[len(NET):]: v for k, v in self.params.items() if k.startswith(NET)}

    def head(self) -> Params:
        return {k[len(HEAD):]: v for k, v in self.params.items() if k.startswith(HEAD)}

    @property
    def prototypes(self) -> np.ndarray | None:
        return self.params.get(PROTOS)

    @property
    def null(self) -> np.ndarray:
        return self.params[NULL]

    @property
    def n_conditions(self) -> int:
        """Number of selectable conditions: prototypes, or external codes offline."""
        return self.cfg.clusters


def sk_weight(iteration: int, total_iters: int, warmup: float) -> float:
    return min(iteration / (warmup * total_iters), 1.0)


def in_warmup(iteration: int, total_iters: int, warmup: float) -> bool:
    return iteration / total_iters < warmup


def init_state(cfg: Config, seed: int | None = None) -> TrainState:
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    cond_dim = cfg.clusters if cfg.mode == "offline" else cfg.feature_dim
    spec = cfg.net_spec(cond_dim)
    net = init_velocity_params(spec, rng)
    params = {NET + k: v for k, v in net.items()}
    params[NULL] = 0.1 * rng.standard_normal((1, cond_dim))
    if cfg.mode == "guided":
        for k, v in init_head(cfg.width, cfg.feature_dim, rng).items():
            params[HEAD + k] = v
        params[PROTOS] = init_prototypes(cfg.clusters, cfg.feature_dim, rng)
    ema = EmaState({k: v.copy() for k, v in net.items()}, cfg.ema_decay)
    return TrainState(cfg, spec, params, ema, AdamState(lr=cfg.lr), rng)


# -- one step ------------------------------------------------------------------

@dataclass
class StepDraws:
    """Everything random or stop-gradient that a step's loss depends on."""

    x_data: np.ndarray
    x_noise: np.ndarray
    t: np.ndarray
    # per-example condition index into [conditions..., null]; None = zero vector
    cond_index: np.ndarray | None = None
    sk_hidden: np.ndarray | None = None
    plan: np.ndarray | None = None
    sk_weight: float = 0.0
    branch: str = "warmup"


def _head_numpy(head: Params, hidden: np.ndarray) -> np.ndarray:
    return head_forward(head, hidden).value


def prepare_step(
    state: TrainState,
    x_batch: np.ndarray,
    labels: np.ndarray | None = None,
    drop_mask: np.ndarray | None = None,
) -> StepDraws:
    """Draw noise, times and conditions for the current iteration.

    ``drop_mask`` forces the per-example dropout outcome instead of sampling it.
    """
    cfg = state.cfg
    rng = state.rng
    path = cfg.path_kind()
    batch = x_batch.shape[0]
    x_noise = rng.standard_normal(x_batch.shape)
    t = rng.random(batch)
    draws = StepDraws(x_batch, x_noise, t)

    if cfg.mode == "unconditional":
        draws.branch = "unconditional"
        return draws

    if cfg.mode == "offline":
        if labels is None:
            raise ValueError("offline training needs cluster labels for the batch")
        labels = np.asarray(labels, dtype=np.int64)
        if labels.size and (labels.min() < 0 or labels.max() >= cfg.clusters):
            raise ValueError(f"cluster label out of range [0, {cfg.clusters})")
        drop = rng.random(batch) < cfg.p_drop if drop_mask is None else np.asarray(drop_mask, bool)
        draws.cond_index = np.where(drop, cfg.clusters, labels)
        draws.branch = "offline"
        return draws

    ema = state.ema.shadow
    head = state.head()
    M = state.prototypes
    it, total = state.iteration, cfg.total_iters
    draws.sk_weight = sk_weight(it, total, cfg.warmup)

    sk_t = rng.uniform(cfg.sk_mask_lo, cfg.sk_mask_hi)
    sk_noise = rng.standard_normal(x_batch.shape)
    draws.sk_hidden = hidden_features(ema, state.spec, interpolate(path, x_batch, sk_noise, sk_t), sk_t, cfg.feature_layer)
    Z = _head_numpy(head, draws.sk_hidden)
    draws.plan = sinkhorn(M @ Z.T, cfg.sinkhorn())

    if in_warmup(it, total, cfg.warmup):
        draws.branch = "warmup"
        return draws

    drop = rng.random(batch) < cfg.p_drop if drop_mask is None else np.asarray(drop_mask, bool)
    index = np.full(batch, cfg.clusters)
    if not drop.all():
        a_noise = rng.standard_normal(x_batch.shape)
        x_ts = interpolate(path, x_batch, a_noise, cfg.feature_t)
        Za = _head_numpy(head, hidden_features(ema, state.spec, x_ts, cfg.feature_t, cfg.feature_layer))
        index = np.where(drop, cfg.clusters, assign_prototypes(M, Za))
    draws.cond_index = index
    draws.branch = "dropout" if drop.all() else "guided"
    return draws


def loss_graph(nodes: dict, state: TrainState, draws: StepDraws) -> tuple[ad.Node, ad.Node, ad.Node | None]:
    """Build ``L_d + w * L_SK`` from parameter nodes; returns (total, L_d, L_SK)."""
    cfg, spec = state.cfg, state.spec
    path = cfg.path_kind()
    x_t = interpolate(path, draws.x_data, draws.x_noise, draws.t)
    target = target_velocity(path, draws.x_data, draws.x_noise, draws.t)
    if draws.cond_index is None:
        cond = ad.const(np.zeros((x_t.shape[0], spec.cond_dim)))
    else:
        if cfg.mode != "guided":
            codes = ad.const(np.eye(cfg.clusters))
        else:
            codes = nodes[PROTOS] if cfg.proto_cond_grad else ad.detach(nodes[PROTOS])
        cond = select_conditions(ad.concat([codes, nodes[NULL]], axis=0), draws.cond_index)
    net = {k[len(NET):]: v for k, v in nodes.items() if k.startswith(NET)}
    v, _ = velocity_forward(net, spec, x_t, draws.t, cond)
    loss_d = ad.scale(ad.mse(v, ad.const(target)), spec.data_dim)
    if draws.plan is None:
        return loss_d, loss_d, None
    head = {k[len(HEAD):]: v for k, v in nodes.items() if k.startswith(HEAD)}
    Z = head_forward(head, ad.const(draws.sk_hidden))
    loss_sk = sk_loss(draws.plan, nodes[PROTOS], Z)
    total = ad.add(loss_d, ad.scale(loss_sk, draws.sk_weight))
    return total, loss_d, loss_sk


def train_step(
    state: TrainState,
    x_batch: np.ndarray,
    labels: np.ndarray | None = None,
    drop_mask: np.ndarray | None = None,
) -> tuple[TrainState, dict]:
    cfg = state.cfg
    draws = prepare_step(state, x_batch, labels, drop_mask)
    nodes = {k: ad.param(v, k) for k, v in state.params.items()}
    total, loss_d, loss_sk = loss_graph(nodes, state, draws)
    if not np.isfinite(total.value):
        raise FloatingPointError(f"non-finite loss at iteration {state.iteration}")
    grads = ad.backward(total)
    state.params = adam_step(state.adam, state.params, grads)
    if PROTOS in state.params:
        state.params[PROTOS] = normalize(state.params[PROTOS])
    warm = in_warmup(state.iteration, cfg.total_iters, cfg.warmup)
    if cfg.mode != "guided" or warm:
        ema_update(state.ema, state.net())
    state.iteration += 1
    diag = {
        "loss_d": float(loss_d.value),
        "loss_sk": float(loss_sk.value) if loss_sk is not None else float("nan"),
        "sk_weight": draws.sk_weight,
        "branch": draws.branch,
        "cond_index": draws.cond_index,
        "grads": grads,
    }
    return state, diag


# -- evaluation ----------------------------------------------------------------

def _data_features(state: TrainState, x_std: np.ndarray, seed: int) -> np.ndarray:
    cfg = state.cfg
    rng = np.random.default_rng([seed, 7])
    x_ts = interpolate(cfg.path_kind(), x_std, rng.standard_normal(x_std.shape), cfg.feature_t)
    return _head_numpy(state.head(), hidden_features(state.ema.shadow, state.spec, x_ts, cfg.feature_t, cfg.feature_layer))


def data_codes(state: TrainState, x_std: np.ndarray, seed: int = 0) -> np.ndarray:
    """Hard cluster codes of a (standardized) dataset from a full-data Sinkhorn plan."""
    Z = _data_features(state, x_std, seed)
    return hard_codes(sinkhorn(state.prototypes @ Z.T, state.cfg.sinkhorn()))


def evaluate(state: TrainState, dataset: Dataset, labels: np.ndarray | None = None) -> dict:
    """NMI/ARI of data codes vs mode labels and Frechet distance of fresh samples.

    Samples draw their prototype ids in proportion to how often each prototype
    is the nearest one for a data point, which is the rule that picks the
    condition during training. The balanced Sinkhorn codes give the clustering
    scores and the reported histogram.
    """
    cfg = state.cfg
    x_std = state.standardizer.forward(dataset.samples)
    out = {"nmi": float("nan"), "ari": float("nan"), "histogram": None}
    if cfg.mode == "guided":
        Z = _data_features(state, x_std, cfg.seed)
        codes = hard_codes(sinkhorn(state.prototypes @ Z.T, cfg.sinkhorn()))
        out["nmi"] = nmi(codes, dataset.mode_labels)
        out["ari"] = ari(codes, dataset.mode_labels)
        out["histogram"] = assignment_histogram(codes, cfg.clusters)
        out["codes"] = codes
        nearest = assignment_histogram(assign_prototypes(state.prototypes, Z), cfg.clusters)
        state.condition_weights = nearest / nearest.sum()
    elif cfg.mode == "offline" and labels is not None:
        out["histogram"] = assignment_histogram(labels, cfg.clusters)
        state.condition_weights = out["histogram"] / out["histogram"].sum()
    rng = np.random.default_rng([cfg.seed, 11])
    samples, _ = generate(state, cfg.eval_samples, cfg.sampler(), rng)
    out["frechet"] = frechet_distance(samples, dataset.samples)
    out["samples"] = samples
    return out


# -- driver --------------------------------------------------------------------

@dataclass
class RunResult:
    state: TrainState
    log: list[dict] = field(default_factory=list)
    final: dict = field(default_factory=dict)


def run_training(
    cfg: Config,
    dataset: Dataset,
    labels: np.ndarray | None = None,
    state: TrainState | None = None,
    out_dir=None,
) -> RunResult:
    """Train for ``cfg.total_iters`` steps, logging metrics every ``eval_interval``.

    Row ``iter`` holds the losses of that step and metrics of the state after it.
    ``labels`` are the cluster ids used by offline mode. When ``out_dir`` is
    given, ``metrics.csv`` and ``final.ckpt`` are written there.
    """
    if state is None:
        state = init_state(cfg)
    state.standardizer = state.standardizer or Standardizer.fit(dataset.samples)
    x_all = state.standardizer.forward(dataset.samples)
    result = RunResult(state)
    n = x_all.shape[0]
    for it in range(cfg.total_iters):
        idx = state.rng.integers(0, n, size=cfg.batch_size)
        batch_labels = None if labels is None else np.asarray(labels)[idx]
        state, diag = train_step(state, x_all[idx], batch_labels)
        if it % cfg.eval_interval == 0 or it == cfg.total_iters - 1:
            ev = evaluate(state, dataset, labels)
            row = {
                "iter": it,
                "loss_d": diag["loss_d"],
                "loss_sk": diag["loss_sk"],
                "sk_weight": diag["sk_weight"],
                "nmi": ev["nmi"],
                "ari": ev["ari"],
                "frechet": ev["frechet"],
            }
            result.log.append(row)
            result.final = ev
            log.info("iter %d loss_d %.4f loss_sk %.4f nmi %.3f frechet %.4f",
                     it, row["loss_d"], row["loss_sk"], row["nmi"], row["frechet"])
    if out_dir is not None:
        from .checkpoint import save_state
        from .io import write_metrics_csv

        os.makedirs(out_dir, exist_ok=True)
        write_metrics_csv(os.path.join(out_dir, "metrics.csv"), result.log)
        save_state(os.path.join(out_dir, "final.ckpt"), state)
    return result


def train_offline(pretrained: Params, cfg: Config, dataset: Dataset, labels: np.ndarray, out_dir=None) -> RunResult:
    """Fine-tune a pretrained network with one-hot cluster conditions.

    Input-layer weights for the condition block are rebuilt at the new width
    and start at zero, so the initial field equals the pretrained field under
    the zero condition.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and labels.max() >= cfg.clusters:
        raise ValueError(f"label {labels.max()} out of range for {cfg.clusters} clusters")
    cfg = cfg.replace(mode="offline")
    state = init_state(cfg)
    spec = state.spec
    for k, v in pretrained.items():
        if k == "W0":
            w = np.zeros((spec.input_dim, v.shape[1]))
            keep = spec.data_dim + spec.time_dim
            w[:keep] = v[:keep]
            state.params[NET + k] = w
        else:
            state.params[NET + k] = np.array(v, dtype=np.float64)
    state.ema = EmaState({k: v.copy() for k, v in state.net().items()}, cfg.ema_decay)
    return run_training(cfg, dataset, labels=labels, state=state, out_dir=out_dir)

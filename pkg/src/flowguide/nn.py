"""Velocity-field MLP, Adam and parameter EMA."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Node

Params = dict[str, np.ndarray]


@dataclass(frozen=True)
class NetSpec:
    data_dim: int = 2
    cond_dim: int = 16
    width: int = 256
    hidden_layers: int = 4
    time_freqs: int = 16

    def __post_init__(self):
        if self.hidden_layers < 3:
            raise ValueError("need at least 3 hidden layers so an interior feature layer exists")

    @property
    def time_dim(self) -> int:
        return 2 * self.time_freqs

    @property
    def input_dim(self) -> int:
        return self.data_dim + self.time_dim + self.cond_dim


def time_frequencies(n: int) -> np.ndarray:
    return np.geomspace(0.5, 16.0, n) if n > 1 else np.array([1.0])


def time_embedding(t: np.ndarray, n_freqs: int) -> np.ndarray:
    """Fourier features ``[sin(2 pi f t), cos(2 pi f t)]`` for each frequency."""
    t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    angles = 2.0 * np.pi * t * time_frequencies(n_freqs)
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


def init_velocity_params(spec: NetSpec, rng: np.random.Generator) -> Params:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases, PyTorch-style."""
    dims = [spec.input_dim] + [spec.width] * spec.hidden_layers + [spec.data_dim]
    params: Params = {}
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        params[f"W{i}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        params[f"b{i}"] = rng.uniform(-bound, bound, size=(fan_out,))
    return params


def _as_node(x) -> Node:
    return x if isinstance(x, Node) else ad.const(x)


def velocity_forward(
    params,
    spec: NetSpec,
    x,
    t,
    cond,
    capture_layer: int | None = None,
    stop_at_capture: bool = False,
) -> tuple[Node | None, Node | None]:
    """Run the MLP ``v(x, t, c)``.

    ``params`` maps names to arrays or nodes; arrays are treated as constants.
    ``cond`` is a ``(B, cond_dim)`` array or node. ``capture_layer`` picks a
    hidden layer (1-based) whose post-activation is returned as the feature.
    With ``stop_at_capture`` the output layers are skipped and ``v`` is None.
    """
    L = spec.hidden_layers
    if capture_layer is not None and not 1 <= capture_layer <= L - 1:
        raise ValueError(f"capture_layer must be in [1, {L - 1}], got {capture_layer}")
    x = _as_node(x)
    cond = _as_node(cond)
    batch = x.shape[0]
    if cond.shape != (batch, spec.cond_dim):
        raise ad.ShapeError(f"condition: expected shape {(batch, spec.cond_dim)}, got {cond.shape}")
    temb = ad.const(time_embedding(np.broadcast_to(np.asarray(t, dtype=np.float64), (batch,)), spec.time_freqs))
    h = ad.concat([x, temb, cond], axis=1)
    feature = None
    for i in range(L):
        h = ad.silu(ad.add(ad.matmul(h, _as_node(params[f"W{i}"])), _as_node(params[f"b{i}"])))
        if capture_layer == i + 1:
            feature = h
            if stop_at_capture:
                return None, feature
    v = ad.add(ad.matmul(h, _as_node(params[f"W{L}"])), _as_node(params[f"b{L}"]))
    return v, feature


def velocity(params: Params, spec: NetSpec, x, t, cond) -> np.ndarray:
    """Plain numpy evaluation of the velocity field."""
    v, _ = velocity_forward(params, spec, x, t, cond)
    return v.value


# -- conditions ----------------------------------------------------------------

def zero_condition(batch: int, dim: int) -> np.ndarray:
    return np.zeros((batch, dim))


def onehot(labels, k: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"label out of range [0, {k})")
    out = np.zeros((labels.size, k))
    out[np.arange(labels.size), labels] = 1.0
    return out


def select_conditions(table, index: np.ndarray) -> Node:
    """Rows of ``table`` picked by ``index``; an index of -1 gives a zero row.

    Expressed as a one-hot matmul so gradients reach the selected rows.
    """
    table = _as_node(table)
    index = np.asarray(index, dtype=np.int64)
    sel = np.zeros((index.size, table.shape[0]))
    hit = index >= 0
    sel[np.nonzero(hit)[0], index[hit]] = 1.0
    return ad.matmul(ad.const(sel), table)


# -- optimisation --------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)
    # per-parameter update counts for bias correction; a parameter that first
    # receives a gradient late starts its own correction from 1
    counts: dict[str, int] = field(default_factory=dict)


def adam_step(state: AdamState, params: Params, grads: Params) -> Params:
    """One bias-corrected Adam update. Parameters without a gradient are left alone."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
    b1, b2 = state.betas
    state.step += 1
    out = dict(params)
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        n = state.counts.get(name, 0) + 1
        state.counts[name] = n
        c1 = 1.0 - b1**n
        c2 = 1.0 - b2**n
        # moments are owned by the optimiser, so update them in place
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        denom = np.sqrt(v, out=np.empty_like(v))
        denom *= 1.0 / np.sqrt(c2)
        denom += state.eps
        step = np.divide(m, denom, out=denom)
        step *= state.lr / c1
        out[name] = p - step
    return out


@dataclass
class EmaState:
    shadow: Params
    decay: float = 0.999


def ema_update(ema: EmaState, params: Params) -> EmaState:
    mu = ema.decay
    for name, p in params.items():
        s = ema.shadow[name]
        if s.shape != p.shape:
            raise ValueError(f"EMA shape mismatch for {name!r}: {s.shape} vs {p.shape}")
        ema.shadow[name] = mu * s + (1.0 - mu) * p
    return ema

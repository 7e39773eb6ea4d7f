"""Classifier-free guidance and fixed-step ODE integration from noise to data."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .nn import NetSpec, Params, velocity
from .ot_guidance import assign_prototype, head_forward, hidden_features
from .paths import interpolate, noise_scale

Field = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = 50
    guidance: float = 0.4
    method: str = "heun"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.guidance < 0:
            raise ValueError("guidance strength must be >= 0")
        if self.method not in ("euler", "heun"):
            raise ValueError(f"unknown method {self.method!r} (expected euler or heun)")


def cfg_velocity(params: Params, spec: NetSpec, x, t, cond, null_cond, g: float) -> np.ndarray:
    """``(1 + g) v(x, t, c) - g v(x, t, null)``."""
    v_c = velocity(params, spec, x, t, cond)
    if g == 0.0:
        return v_c
    v_null = velocity(params, spec, x, t, null_cond)
    return (1.0 + g) * v_c - g * v_null


def guided_field(params: Params, spec: NetSpec, cond: np.ndarray, null_cond: np.ndarray | None, g: float) -> Field:
    """Velocity callable for ``integrate``; ``null_cond=None`` means no guidance term."""
    if null_cond is None or g == 0.0:
        return lambda x, t: velocity(params, spec, x, t, cond)
    return lambda x, t: cfg_velocity(params, spec, x, t, cond, null_cond, g)


def integrate(
    field: Field,
    x_start: np.ndarray,
    steps: int = 50,
    method: str = "heun",
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Integrate ``dx/dt = field(x, t)`` from t=1 down to t=0 with equal steps.

    Returns the final state and the data estimates ``x - t * v`` recorded at the
    start of every step, followed by the final state itself.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if method not in ("euler", "heun"):
        raise ValueError(f"unknown method {method!r}")
    x = np.array(x_start, dtype=np.float64)
    dt = -1.0 / steps
    estimates = []
    for i in range(steps):
        t = 1.0 - i / steps
        t_next = 1.0 - (i + 1) / steps
        v = field(x, t)
        estimates.append(x - t * v)
        if method == "euler":
            x = x + dt * v
        else:
            x_pred = x + dt * v
            x = x + 0.5 * dt * (v + field(x_pred, t_next))
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite state at step {i}")
    estimates.append(x.copy())
    return x, estimates


# -- sampling from a trained state ---------------------------------------------

def conditions_trained(state) -> bool:
    cfg = state.cfg
    if cfg.mode == "offline":
        return True
    if cfg.mode == "unconditional":
        return False
    return state.iteration > cfg.warmup * cfg.total_iters


def generate(
    state,
    n: int,
    cfg: SamplerConfig,
    rng: np.random.Generator,
    prototype: int | None = None,
    unconditional: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` samples in data coordinates together with their condition ids.

    Condition ids are -1 for unconditional samples. Without an explicit
    ``prototype`` the ids are drawn from ``state.condition_weights`` (uniform if
    unset).
    """
    spec = state.spec
    x_start = noise_scale(state.cfg.path_kind()) * rng.standard_normal((n, spec.data_dim))
    k = state.n_conditions
    if unconditional and state.cfg.mode != "unconditional":
        ids = np.full(n, -1)
        null = np.repeat(state.null, n, axis=0)
        field = guided_field(state.net(), spec, null, None, 0.0)
    elif not conditions_trained(state):
        ids = np.full(n, -1)
        field = guided_field(state.net(), spec, np.zeros((n, spec.cond_dim)), None, 0.0)
    else:
        if prototype is not None:
            if not 0 <= prototype < k:
                raise ValueError(f"prototype {prototype} out of range [0, {k})")
            ids = np.full(n, int(prototype))
        else:
            w = state.condition_weights
            w = np.full(k, 1.0 / k) if w is None else np.asarray(w, dtype=np.float64)
            ids = rng.choice(k, size=n, p=w / w.sum())
        codes = state.prototypes if state.cfg.mode == "guided" else np.eye(k)
        cond = codes[ids]
        null = np.repeat(state.null, n, axis=0)
        field = guided_field(state.net(), spec, cond, null, cfg.guidance)
    x, _ = integrate(field, x_start, cfg.steps, cfg.method)
    if state.standardizer is not None:
        x = state.standardizer.inverse(x)
    return x, ids


def query_prototype(state, query: np.ndarray, rng: np.random.Generator) -> int:
    """Prototype whose direction best matches the query's feature at ``feature_t``."""
    cfg = state.cfg
    if cfg.mode != "guided":
        raise ValueError("querying prototypes needs a guided model")
    q = np.asarray(query, dtype=np.float64).reshape(1, -1)
    if state.standardizer is not None:
        q = state.standardizer.forward(q)
    x_ts = interpolate(cfg.path_kind(), q, rng.standard_normal(q.shape), cfg.feature_t)
    hidden = hidden_features(state.ema.shadow, state.spec, x_ts, cfg.feature_t, cfg.feature_layer)
    z = head_forward(state.head(), hidden).value[0]
    idx, _ = assign_prototype(state.prototypes, z)
    return idx


def sample_by_query(
    state,
    query: np.ndarray,
    n: int,
    cfg: SamplerConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, int]:
    """Samples conditioned on the prototype nearest to a query example."""
    idx = query_prototype(state, query, rng)
    samples, _ = generate(state, n, cfg, rng, prototype=idx)
    return samples, idx

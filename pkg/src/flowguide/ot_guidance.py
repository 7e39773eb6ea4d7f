"""Online Sinkhorn-Knopp clustering of the velocity network's own features.

Scores between prototypes and features are cosine similarities ``M @ Z.T``;
the transport plan has rows summing to 1/K and columns to 1/B.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import autodiff as ad
from .autodiff import Node
from .nn import NetSpec, Params, velocity_forward, zero_condition
from .paths import PathKind, interpolate


@dataclass(frozen=True)
class SinkhornConfig:
    lam: float = 100.0
    iters: int = 3

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("sinkhorn lambda must be positive")
        if self.iters < 1:
            raise ValueError("sinkhorn needs at least one iteration")


def normalize(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def init_prototypes(k: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Rows drawn uniformly on the unit sphere."""
    return normalize(rng.standard_normal((k, dim)))


def init_head(in_dim: int, out_dim: int, rng: np.random.Generator) -> Params:
    bound = 1.0 / np.sqrt(in_dim)
    return {
        "W": rng.uniform(-bound, bound, size=(in_dim, out_dim)),
        "b": rng.uniform(-bound, bound, size=(out_dim,)),
    }


def head_forward(head, hidden) -> Node:
    """Affine projection followed by row-wise L2 normalisation."""
    W = head["W"] if isinstance(head["W"], Node) else ad.const(head["W"])
    b = head["b"] if isinstance(head["b"], Node) else ad.const(head["b"])
    hidden = hidden if isinstance(hidden, Node) else ad.const(hidden)
    return ad.normalize_rows(ad.add(ad.matmul(hidden, W), b))


def hidden_features(ema_params: Params, spec: NetSpec, x_t: np.ndarray, t, layer: int) -> np.ndarray:
    """Post-activation of hidden layer ``layer`` with the all-zeros condition."""
    _, feat = velocity_forward(
        ema_params, spec, x_t, t, zero_condition(x_t.shape[0], spec.cond_dim),
        capture_layer=layer, stop_at_capture=True,
    )
    return feat.value


def extract_feature(
    ema_params: Params,
    spec: NetSpec,
    head,
    x_batch: np.ndarray,
    t_s: float,
    layer: int,
    path: PathKind,
    noise: np.ndarray,
) -> Node:
    """Unit-norm features of the noised batch ``x_{t_s}`` under the EMA network.

    The network activations enter as a constant, so a loss on the result only
    reaches the head parameters.
    """
    x_t = interpolate(path, x_batch, noise, t_s)
    hidden = hidden_features(ema_params, spec, x_t, t_s, layer)
    return head_forward(head, ad.const(hidden))


def sinkhorn(scores: np.ndarray, cfg: SinkhornConfig = SinkhornConfig()) -> np.ndarray:
    """Entropic transport plan for kernel ``exp(lam * scores)``, computed in log space.

    Each iteration normalises columns to 1/B and then rows to 1/K, so the row
    marginals of the returned plan hold to rounding error.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or min(scores.shape) < 1:
        raise ValueError(f"scores must be a non-empty K x B matrix, got shape {scores.shape}")
    if np.any(np.isnan(scores)) or np.any(scores == np.inf):
        raise ValueError("scores must not contain NaN or +inf")
    k, b = scores.shape
    log_p = cfg.lam * scores
    if np.any(np.all(np.isneginf(log_p), axis=1)):
        raise ValueError("a row of scores is entirely -inf")
    log_p = log_p - logsumexp(log_p)
    for _ in range(cfg.iters):
        log_p = log_p - logsumexp(log_p, axis=0, keepdims=True) - np.log(b)
        log_p = log_p - logsumexp(log_p, axis=1, keepdims=True) - np.log(k)
    return np.exp(log_p)


def sk_loss(plan: np.ndarray, prototypes, features) -> Node:
    """``<P, -M Z^T>_F`` with the plan held constant."""
    M = prototypes if isinstance(prototypes, Node) else ad.const(prototypes)
    Z = features if isinstance(features, Node) else ad.const(features)
    scores = ad.matmul(M, ad.transpose(Z))
    if scores.shape != np.shape(plan):
        raise ad.ShapeError(f"sk_loss: plan shape {np.shape(plan)} vs scores {scores.shape}")
    return ad.scale(ad.sum_(ad.mul(ad.const(plan), scores)), -1.0)


def assign_prototype(prototypes: np.ndarray, z: np.ndarray) -> tuple[int, np.ndarray]:
    """Most similar prototype row; ties go to the lowest index."""
    idx = int(np.argmax(np.asarray(prototypes) @ np.asarray(z)))
    return idx, np.asarray(prototypes)[idx]


def assign_prototypes(prototypes: np.ndarray, Z: np.ndarray) -> np.ndarray:
    return np.argmax(np.asarray(Z) @ np.asarray(prototypes).T, axis=1)


def hard_codes(plan: np.ndarray) -> np.ndarray:
    """Column-wise argmax of a plan (lowest index wins ties)."""
    return np.argmax(np.asarray(plan), axis=0)


def kmeans_objective(features: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    diff = features - centroids[labels]
    return float(np.sum(diff * diff))


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = np.sum(x * x, axis=1)[:, None] - 2.0 * x @ c.T + np.sum(c * c, axis=1)[None, :]
    return np.maximum(d, 0.0)


def kmeans(
    features: np.ndarray,
    k: int,
    iters: int = 50,
    seed: int = 0,
    history: list[float] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with farthest-point seeding.

    The first centre is a seeded random point; each further centre is the point
    farthest from the centres chosen so far. Clusters that lose all members are
    re-seeded at the point farthest from its current centre. If ``history`` is
    given, the objective after every iteration is appended to it.
    """
    x = np.asarray(features, dtype=np.float64)
    n = x.shape[0]
    if n < k:
        raise ValueError(f"kmeans needs at least k={k} points, got {n}")
    if iters < 1:
        raise ValueError("kmeans needs at least one iteration")
    rng = np.random.default_rng(seed)
    centres = [x[rng.integers(n)]]
    closest = np.sum((x - centres[0]) ** 2, axis=1)
    for _ in range(1, k):
        centres.append(x[int(np.argmax(closest))])
        closest = np.minimum(closest, np.sum((x - centres[-1]) ** 2, axis=1))
    c = np.array(centres)
    labels = np.argmin(_sq_dists(x, c), axis=1)
    for _ in range(iters):
        for j in range(k):
            members = labels == j
            if members.any():
                c[j] = x[members].mean(axis=0)
            else:
                far = np.sum((x - c[labels]) ** 2, axis=1)
                c[j] = x[int(np.argmax(far))]
        new_labels = np.argmin(_sq_dists(x, c), axis=1)
        if history is not None:
            history.append(kmeans_objective(x, c, new_labels))
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    return c, labels

"""Probability paths between data (t=0) and Gaussian noise (t=1)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SingularityError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ConstantVelocity:
    pass


@dataclass(frozen=True)
class VP:
    """Variance preserving, ``alpha_t = exp(-beta t / 2)`` for a constant rate beta."""

    beta: float = 10.0

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("VP beta must be positive")

    def alpha(self, t):
        return np.exp(-0.5 * self.beta * t)

    def dalpha(self, t):
        return -0.5 * self.beta * self.alpha(t)


@dataclass(frozen=True)
class VE:
    """Variance exploding, ``alpha_t = alpha_max**t - 1`` so alpha_0 = 0."""

    alpha_max: float = 100.0

    def __post_init__(self):
        if self.alpha_max <= 1:
            raise ValueError("VE alpha_max must exceed 1")

    def alpha(self, t):
        return self.alpha_max**t - 1.0

    def dalpha(self, t):
        return np.log(self.alpha_max) * self.alpha_max**t


PathKind = ConstantVelocity | VP | VE


def make_path(name: str, vp_beta: float = 10.0, ve_alpha_max: float = 100.0) -> PathKind:
    if name == "cv":
        return ConstantVelocity()
    if name == "vp":
        return VP(vp_beta)
    if name == "ve":
        return VE(ve_alpha_max)
    raise ValueError(f"unknown path {name!r} (expected vp, ve or cv)")


def _column_t(t, x: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0.0) or np.any(t > 1.0) or not np.all(np.isfinite(t)):
        raise ValueError("t must lie in [0, 1]")
    if t.ndim == 1:
        if t.shape[0] != x.shape[0]:
            raise ValueError(f"per-row t has length {t.shape[0]}, batch has {x.shape[0]}")
        return t.reshape(-1, *([1] * (x.ndim - 1)))
    return t


def interpolate(path: PathKind, x_data, x_noise, t) -> np.ndarray:
    """Point on the path at time ``t`` (scalar, or one value per row)."""
    x_data = np.asarray(x_data, dtype=np.float64)
    x_noise = np.asarray(x_noise, dtype=np.float64)
    if x_data.shape != x_noise.shape:
        raise ValueError(f"shape mismatch {x_data.shape} vs {x_noise.shape}")
    t = _column_t(t, x_data)
    if isinstance(path, ConstantVelocity):
        return (1.0 - t) * x_data + t * x_noise
    if isinstance(path, VP):
        a = path.alpha(t)
        return a * x_data + np.sqrt(1.0 - a * a) * x_noise
    if isinstance(path, VE):
        return x_data + path.alpha(t) * x_noise
    raise TypeError(f"unknown path {path!r}")


def target_velocity(path: PathKind, x_data, x_noise, t) -> np.ndarray:
    """Time derivative of ``interpolate`` along the pair (x_data, x_noise)."""
    x_data = np.asarray(x_data, dtype=np.float64)
    x_noise = np.asarray(x_noise, dtype=np.float64)
    if x_data.shape != x_noise.shape:
        raise ValueError(f"shape mismatch {x_data.shape} vs {x_noise.shape}")
    t = _column_t(t, x_data)
    if isinstance(path, ConstantVelocity):
        return x_noise - x_data
    if isinstance(path, VE):
        return path.dalpha(t) * x_noise
    if isinstance(path, VP):
        a = path.alpha(t)
        da = path.dalpha(t)
        sigma = np.sqrt(1.0 - a * a)
        # d/dt sqrt(1 - a^2) = beta a^2 / (2 sqrt(1 - a^2)); blows up at t = 0
        singular = np.broadcast_to(sigma == 0.0, x_data.shape) & (x_noise != 0.0)
        if np.any(singular):
            rows = np.unique(np.nonzero(singular)[0]).tolist()
            raise SingularityError(f"VP target velocity is unbounded at t=0 (rows {rows} have nonzero noise)")
        with np.errstate(divide="ignore", invalid="ignore"):
            dsigma = np.where(sigma > 0.0, 0.5 * path.beta * a * a / np.where(sigma > 0.0, sigma, 1.0), 0.0)
        return da * x_data + dsigma * x_noise
    raise TypeError(f"unknown path {path!r}")


def noise_scale(path: PathKind) -> float:
    """Standard deviation of the noise term at t=1, used to scale the sampler's start."""
    if isinstance(path, VE):
        return float(path.alpha(1.0))
    if isinstance(path, VP):
        a = path.alpha(1.0)
        return float(np.sqrt(1.0 - a * a))
    return 1.0

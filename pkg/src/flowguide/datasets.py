"""Synthetic 2D datasets with ground-truth mode labels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Dataset:
    samples: np.ndarray
    mode_labels: np.ndarray
    name: str
    seed: int

    @property
    def modes(self) -> int:
        return int(self.mode_labels.max()) + 1 if self.mode_labels.size else 0


def make_ring(modes: int, n_per_mode: int, radius: float = 2.0, noise_std: float = 0.1, seed: int = 0) -> Dataset:
    if modes < 1:
        raise ValueError("modes must be >= 1")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(modes), n_per_mode)
    angles = 2.0 * np.pi * labels / modes
    centres = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    samples = centres + noise_std * rng.standard_normal(centres.shape)
    return Dataset(samples, labels, f"ring{modes}", seed)


def make_moons(n: int, noise_std: float = 0.05, seed: int = 0) -> Dataset:
    """Two interleaved unit half-circles; the second is offset by (1, 0.5)."""
    rng = np.random.default_rng(seed)
    n_upper = n // 2
    n_lower = n - n_upper
    a = np.linspace(0.0, np.pi, n_upper)
    b = np.linspace(0.0, np.pi, n_lower)
    upper = np.stack([np.cos(a), np.sin(a)], axis=1)
    lower = np.stack([1.0 - np.cos(b), 0.5 - np.sin(b)], axis=1)
    samples = np.concatenate([upper, lower]) + noise_std * rng.standard_normal((n, 2))
    labels = np.concatenate([np.zeros(n_upper, dtype=np.int64), np.ones(n_lower, dtype=np.int64)])
    return Dataset(samples, labels, "moons", seed)


MOON_CENTRES = np.array([[0.0, 0.0], [1.0, 0.5]])

CHECKER_CELLS = [(i, j) for j in range(4) for i in range(4) if (i + j) % 2 == 0]


def checker_cell(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column and row of the unit cell on the [-2, 2)^2 board holding each point."""
    ij = np.floor(np.asarray(points) + 2.0).astype(np.int64)
    return ij[:, 0], ij[:, 1]


def make_checkerboard(n: int, seed: int = 0) -> Dataset:
    """Uniform points on the 8 even-parity cells of a 4x4 board on [-2, 2)^2."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, len(CHECKER_CELLS), size=n)
    cells = np.array(CHECKER_CELLS, dtype=np.float64)[labels]
    samples = cells - 2.0 + rng.uniform(0.0, 1.0, size=(n, 2))
    return Dataset(samples, labels.astype(np.int64), "checkerboard", seed)


def make_dataset(name: str, n: int, seed: int = 0, radius: float = 2.0, noise_std: float = 0.1) -> Dataset:
    if name.startswith("ring"):
        modes = int(name[4:] or 8)
        return make_ring(modes, n // modes, radius, noise_std, seed)
    if name == "moons":
        return make_moons(n, noise_std, seed)
    if name == "checkerboard":
        return make_checkerboard(n, seed)
    raise ValueError(f"unknown dataset {name!r} (expected ring8, moons or checkerboard)")


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        return cls(x.mean(axis=0), x.std(axis=0))

    def forward(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return z * self.std + self.mean

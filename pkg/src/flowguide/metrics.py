"""Clustering agreement and distribution fidelity scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _check_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.int64).ravel()
    b = np.asarray(b, dtype=np.int64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"labelings differ in length: {a.size} vs {b.size}")
    return a, b


def contingency(a, b) -> np.ndarray:
    a, b = _check_pair(a, b)
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1 if a.size else 0, bi.max() + 1 if b.size else 0), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi(a, b) -> float:
    """Mutual information normalised by the geometric mean of the two entropies."""
    a, b = _check_pair(a, b)
    if a.size == 0:
        raise ValueError("nmi needs at least one label")
    table = contingency(a, b)
    ha = _entropy(table.sum(axis=1))
    hb = _entropy(table.sum(axis=0))
    if ha == 0.0 and hb == 0.0:
        return 1.0
    if ha == 0.0 or hb == 0.0:
        return 0.0
    n = a.size
    nz = table > 0
    pij = table[nz] / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))[nz] / (n * n)
    mi = float(np.sum(pij * np.log(pij / outer)))
    return min(1.0, max(0.0, mi / np.sqrt(ha * hb)))


def _comb2(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    return x * (x - 1) // 2


def ari(a, b) -> float:
    """Adjusted Rand index from pair counts."""
    a, b = _check_pair(a, b)
    if a.size < 2:
        raise ValueError("ari needs at least two labels")
    table = contingency(a, b)
    sum_ij = int(_comb2(table).sum())
    sum_a = int(_comb2(table.sum(axis=1)).sum())
    sum_b = int(_comb2(table.sum(axis=0)).sum())
    total = int(_comb2(a.size))
    expected = sum_a * sum_b / total
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # both labelings trivial (all one cluster or all singletons)
        return 1.0
    return (sum_ij - expected) / (max_index - expected)


@dataclass(frozen=True)
class GaussianSummary:
    mean: np.ndarray
    cov: np.ndarray

    @classmethod
    def of(cls, samples) -> "GaussianSummary":
        x = np.asarray(samples, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < x.shape[1] + 1:
            raise ValueError(f"need at least d+1 samples of dimension d, got shape {x.shape}")
        cov = np.cov(x, rowvar=False).reshape(x.shape[1], x.shape[1])
        return cls(x.mean(axis=0), 0.5 * (cov + cov.T))


def _trace_sqrt_product(sa: np.ndarray, sb: np.ndarray, tol: float = 1e-10) -> float:
    """``tr((Sa Sb)^{1/2})`` for PSD Sa, Sb."""
    d = sa.shape[0]
    if d == 2:
        # eigenvalues of a 2x2 product of PSD matrices are real and >= 0, so
        # tr sqrt(A) = sqrt(tr A + 2 sqrt(det A))
        prod = sa @ sb
        det = float(np.linalg.det(prod))
        tr = float(np.trace(prod))
        if det < -tol or tr < -tol:
            raise ValueError(f"covariance product is not PSD (trace {tr}, det {det})")
        return float(np.sqrt(max(tr + 2.0 * np.sqrt(max(det, 0.0)), 0.0)))
    w, v = np.linalg.eigh(sa)
    if w.min() < -tol:
        raise ValueError("covariance is not PSD")
    root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    inner = root @ sb @ root
    ev = np.linalg.eigvalsh(0.5 * (inner + inner.T))
    if ev.min() < -tol:
        raise ValueError("covariance product is not PSD")
    return float(np.sum(np.sqrt(np.clip(ev, 0.0, None))))


def frechet_from_summaries(a: GaussianSummary, b: GaussianSummary) -> float:
    diff = a.mean - b.mean
    tr = np.trace(a.cov) + np.trace(b.cov) - 2.0 * _trace_sqrt_product(a.cov, b.cov)
    return float(max(diff @ diff + tr, 0.0))


def frechet_distance(sa, sb) -> float:
    """Squared 2-Wasserstein distance between Gaussian fits of two sample sets."""
    return frechet_from_summaries(GaussianSummary.of(sa), GaussianSummary.of(sb))


def assignment_histogram(labels, k: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"label out of range [0, {k})")
    return np.bincount(labels, minlength=k)

"""Unsupervised evaluation: k-means, spectral clustering, assignment-matched accuracy."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .embed import symmetric_eigendecomposition
from .errors import LengthMismatch


def _kmeans_pp_centers(X: np.ndarray, k: int, rng) -> np.ndarray:
    n = len(X)
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[int(rng.integers(n))]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[c] = X[idx]
        d2 = np.minimum(d2, ((X - centers[c]) ** 2).sum(axis=1))
    return centers


def _lloyd(X: np.ndarray, centers: np.ndarray, max_iter: int = 300):
    n, k = len(X), len(centers)
    labels = np.full(n, -1)
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
        new_labels = np.argmin(d2, axis=1)
        for c in range(k):
            members = new_labels == c
            if members.any():
                centers[c] = X[members].mean(axis=0)
            else:
                # re-seed an empty cluster to the point farthest from its center
                far = int(np.argmax(d2[np.arange(n), new_labels]))
                centers[c] = X[far]
                new_labels[far] = c
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    inertia = float(((X - centers[labels]) ** 2).sum())
    return labels, inertia


def kmeans(coords, k: int, restarts: int = 10, seed: int = 0) -> np.ndarray:
    """Lloyd iterations from k-means++ seeding; best of `restarts` by inertia."""
    X = np.asarray(coords, dtype=np.float64)
    if not 2 <= k <= len(X):
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={len(X)}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    rng = np.random.default_rng(seed)
    best_labels, best_inertia = None, np.inf
    for _ in range(restarts):
        centers = _kmeans_pp_centers(X, k, rng)
        labels, inertia = _lloyd(X, centers)
        if inertia < best_inertia:
            best_inertia, best_labels = inertia, labels
    return best_labels


def spectral_clustering(coords, k: int, seed: int = 0) -> np.ndarray:
    """Normalized spectral clustering with a Gaussian affinity at the median bandwidth."""
    X = np.asarray(coords, dtype=np.float64)
    n = len(X)
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    d2 = ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1)
    dist = np.sqrt(d2)
    nonzero = dist[np.triu_indices(n, 1)]
    nonzero = nonzero[nonzero > 0.0]
    if len(nonzero) == 0:
        return np.zeros(n, dtype=np.int64)  # all points coincide: one cluster
    sigma = float(np.median(nonzero))
    W = np.exp(-d2 / (2.0 * sigma * sigma))
    deg = W.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(deg)
    L = np.eye(n) - (inv_sqrt[:, None] * W) * inv_sqrt[None, :]
    _, vecs = symmetric_eigendecomposition(L, count=k, ascending=True)
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    rows = np.divide(vecs, norms, out=np.zeros_like(vecs), where=norms > 0)
    return kmeans(rows, k, restarts=10, seed=seed)


def assignment_accuracy(pred_labels, true_labels) -> float:
    """Accuracy after the optimal (Hungarian) matching of cluster to truth labels."""
    pred = np.asarray(pred_labels)
    truth = np.asarray(true_labels)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"labels {pred.shape} vs {truth.shape}")
    pred_ids = np.unique(pred)
    true_ids = np.unique(truth)
    table = np.zeros((len(pred_ids), len(true_ids)))
    pi = np.searchsorted(pred_ids, pred)
    ti = np.searchsorted(true_ids, truth)
    np.add.at(table, (pi, ti), 1.0)
    r, c = linear_sum_assignment(-table)
    return float(table[r, c].sum() / len(pred))

"""Neighbor embeddings from a distance matrix: MDS, Isomap, Laplacian eigenmaps, t-SNE.

All methods consume the metric DistanceMatrix directly; none of them see raw
pixels. Given identical inputs (and seed, for t-SNE) every embedding is
bit-reproducible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .distmat import DistanceMatrix
from .errors import (
    BandwidthBisectionFailure,
    ConvergenceFailure,
    DegenerateSpectrum,
    InsufficientSpectrum,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Embedding:
    coords: np.ndarray  # (n, d)
    method: str
    metric: str = ""

    def __post_init__(self):
        coords = np.ascontiguousarray(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] < 1:
            raise ValueError(f"coords must be (n, d) with d >= 1, got {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise ValueError("embedding coordinates must be finite")
        object.__setattr__(self, "coords", coords)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def d(self) -> int:
        return self.coords.shape[1]


@dataclass(frozen=True)
class NeighborGraph:
    """Symmetrized k-nearest-neighbor graph; weights are the input distances."""

    n: int
    k: int
    adjacency: tuple  # adjacency[i] = tuple of (neighbor, weight), sorted by neighbor

    def edges(self):
        """Each undirected edge once, as (i, j, weight) with i < j."""
        for i, nbrs in enumerate(self.adjacency):
            for j, w in nbrs:
                if i < j:
                    yield i, j, w

    def weight_matrix(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        for i, j, w in self.edges():
            out[i, j] = out[j, i] = w
        return out


@dataclass(frozen=True)
class SpectrumReport:
    singular_values: np.ndarray  # nonincreasing
    chosen_dimension: int
    threshold: float


def symmetric_eigendecomposition(M: np.ndarray, count: int | None = None,
                                 ascending: bool = False):
    """Eigenpairs of a symmetric matrix, sorted; wraps LAPACK with a symmetry check."""
    M = np.asarray(M, dtype=np.float64)
    scale = max(1.0, float(np.abs(M).max()))
    if M.shape[0] != M.shape[1] or np.abs(M - M.T).max() > 1e-10 * scale:
        raise ValueError("matrix must be symmetric within 1e-10")
    try:
        vals, vecs = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"eigendecomposition failed: {exc}") from exc
    if not ascending:
        vals = vals[::-1]
        vecs = vecs[:, ::-1]
    if count is not None:
        vals = vals[:count]
        vecs = vecs[:, :count]
    return vals, vecs


def embedding_dimension(data: np.ndarray, a: float) -> SpectrumReport:
    """Minimal n with (sum_{i<=n} s_i^2) / (sum_j s_j^2) >= a on centered data."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ValueError("data must be an (n, p) matrix with n >= 2")
    if not 0.0 < a < 1.0:
        raise ValueError("a must lie in (0, 1)")
    centered = data - data.mean(axis=0)
    sigma = np.linalg.svd(centered, compute_uv=False)
    total = float((sigma ** 2).sum())
    if total == 0.0:
        raise DegenerateSpectrum("all singular values are zero")
    ratios = np.cumsum(sigma ** 2) / total
    chosen = int(np.searchsorted(ratios, a, side="left")) + 1
    chosen = min(chosen, len(sigma))
    return SpectrumReport(singular_values=sigma, chosen_dimension=chosen, threshold=a)


def _mds_from_square(D: np.ndarray, d: int, method: str, metric: str) -> Embedding:
    n = D.shape[0]
    if not 1 <= d <= n - 1:
        raise ValueError(f"need 1 <= d <= n-1, got d={d} with n={n}")
    J = np.eye(n) - np.full((n, n), 1.0 / n)
    B = -0.5 * J @ (D * D) @ J
    B = (B + B.T) / 2.0
    vals, vecs = symmetric_eigendecomposition(B, ascending=False)
    top = vals[:d]
    clamped = np.maximum(top, 0.0)
    neg_mass = float(np.abs(vals[vals < 0]).sum())
    pos_mass = float(vals[vals > 0].sum())
    if neg_mass > 0 and pos_mass > 0:
        logger.debug("%s: clamped negative eigenvalue mass %.3g (%.2f%% of positive mass)",
                     method, neg_mass, 100.0 * neg_mass / pos_mass)
    coords = vecs[:, :d] * np.sqrt(clamped)[None, :]
    coords[:, clamped == 0.0] = 0.0
    return Embedding(coords=coords, method=method, metric=metric)


def classical_mds(D: DistanceMatrix, d: int) -> Embedding:
    """Classical (Torgerson) MDS of the double-centered squared-distance matrix."""
    return _mds_from_square(D.square(), d, "mds", D.metric.kind)


def knn_graph(D: DistanceMatrix, k: int) -> NeighborGraph:
    """k smallest-distance neighbors per node (ties by lower index), symmetrized
    by union, then joined by globally shortest inter-component edges until connected."""
    n = D.n
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
    square = D.square()
    nbr: list[set[int]] = [set() for _ in range(n)]
    idx = np.arange(n)
    for i in range(n):
        others = idx[idx != i]
        order = np.lexsort((others, square[i, others]))
        for j in others[order[:k]]:
            nbr[i].add(int(j))
    # symmetrize by union
    for i in range(n):
        for j in list(nbr[i]):
            nbr[j].add(i)
    # connectivity repair
    while True:
        rows, cols, vals = [], [], []
        for i in range(n):
            for j in nbr[i]:
                rows.append(i)
                cols.append(j)
                vals.append(1.0)
        ncomp, labels = connected_components(
            csr_matrix((vals, (rows, cols)), shape=(n, n)), directed=False
        )
        if ncomp == 1:
            break
        cross = np.full((n, n), np.inf)
        diff = labels[:, None] != labels[None, :]
        cross[diff] = square[diff]
        i, j = np.unravel_index(int(np.argmin(cross)), cross.shape)
        nbr[int(i)].add(int(j))
        nbr[int(j)].add(int(i))
    adjacency = tuple(
        tuple((j, float(square[i, j])) for j in sorted(nbr[i])) for i in range(n)
    )
    return NeighborGraph(n=n, k=k, adjacency=adjacency)


def _graph_geodesics(graph: NeighborGraph) -> np.ndarray:
    rows, cols, vals = [], [], []
    for i, j, w in graph.edges():
        rows += [i, j]
        cols += [j, i]
        vals += [w, w]
    # csr_matrix drops explicit zeros, which shortest_path would read as
    # "no edge"; nudge zero-weight edges to a denormal instead.
    vals = [v if v > 0.0 else 5e-324 for v in vals]
    W = csr_matrix((vals, (rows, cols)), shape=(graph.n, graph.n))
    G = shortest_path(W, method="D", directed=False)
    return G


def isomap(D: DistanceMatrix, k: int, d: int) -> Embedding:
    """Classical MDS of all-pairs shortest-path distances on the kNN graph."""
    G = _graph_geodesics(knn_graph(D, k))
    emb = _mds_from_square(G, d, "isomap", D.metric.kind)
    return emb


def laplacian_eigenmaps(D: DistanceMatrix, k: int, d: int) -> Embedding:
    """Bottom nontrivial eigenvectors of the symmetric normalized graph Laplacian.

    Edge weights are exp(-D_ij^2 / sigma^2) with sigma the median kept edge
    distance; the constant eigenvector (eigenvalue ~0) is skipped.
    """
    graph = knn_graph(D, k)
    n = graph.n
    edge_d = np.array([w for _, _, w in graph.edges()])
    sigma = float(np.median(edge_d)) if len(edge_d) else 0.0
    if sigma <= 0.0:
        sigma = 1.0
    W = np.zeros((n, n))
    for i, j, w in graph.edges():
        W[i, j] = W[j, i] = np.exp(-(w * w) / (sigma * sigma))
    deg = W.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(deg)
    L = np.eye(n) - (inv_sqrt[:, None] * W) * inv_sqrt[None, :]
    vals, vecs = symmetric_eigendecomposition(L, ascending=True)
    usable = int(np.sum(vals < 2.0 - 1e-12))
    if usable < d + 1:
        raise InsufficientSpectrum(
            f"only {usable} eigenvalues below 2-1e-12; need {d + 1}"
        )
    coords = vecs[:, 1 : d + 1]
    return Embedding(coords=coords, method="eigenmaps", metric=D.metric.kind)


# -- t-SNE ---------------------------------------------------------------------

def _conditional_probabilities(D2: np.ndarray, perplexity: float) -> np.ndarray:
    """Row-stochastic Gaussian neighbor probabilities with per-row bandwidth
    bisected so each row's perplexity matches the target within 1e-5 in log2 units."""
    n = D2.shape[0]
    target = np.log2(perplexity)
    P = np.zeros((n, n))
    ln2 = np.log(2.0)
    for i in range(n):
        di = np.delete(D2[i], i)
        beta, lo, hi = 1.0, -np.inf, np.inf
        for _ in range(64):
            w = np.exp(-di * beta)
            s = w.sum()
            if s <= 0.0:
                h = -np.inf
            else:
                p = w / s
                nz = p[p > 0]
                h = float(-(nz * np.log(nz)).sum()) / ln2
            diff = h - target
            if abs(diff) <= 1e-5:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = beta / 2.0 if lo == -np.inf else (beta + lo) / 2.0
        else:
            raise BandwidthBisectionFailure(
                f"row {i}: perplexity {2.0 ** h:.4f} vs target {perplexity} after 64 steps"
            )
        w = np.exp(-di * beta)
        row = w / w.sum()
        P[i, :i] = row[:i]
        P[i, i + 1 :] = row[i:]
    return P


def tsne(
    D: DistanceMatrix,
    perplexity: float = 30.0,
    iters: int = 1000,
    seed: int = 0,
    dim: int = 3,
    learning_rate: float = 200.0,
    early_exaggeration: float = 12.0,
    exaggeration_iters: int = 250,
    momentum_switch: int = 250,
) -> Embedding:
    """Exact t-SNE on the metric distances (Student-t kernel, KL objective).

    Momentum 0.5 until `momentum_switch`, then 0.8; early exaggeration for the
    first `exaggeration_iters` iterations; initial coordinates are a seeded
    Gaussian scaled by 1e-4.
    """
    n = D.n
    if not perplexity < (n - 1) / 3:
        raise ValueError(f"perplexity must be < (n-1)/3 = {(n - 1) / 3:.2f}")
    square = D.square()
    P_cond = _conditional_probabilities(square * square, perplexity)
    P = (P_cond + P_cond.T) / (2.0 * n)

    rng = np.random.default_rng(seed)
    Y = rng.normal(size=(n, dim)) * 1e-4
    velocity = np.zeros_like(Y)
    # adaptive per-coordinate gains, as in the reference implementation;
    # a fixed step at lr=200 diverges on small inputs
    gains = np.ones_like(Y)
    for t in range(iters):
        P_eff = P * early_exaggeration if t < exaggeration_iters else P
        sq = ((Y[:, None, :] - Y[None, :, :]) ** 2).sum(-1)
        num = 1.0 / (1.0 + sq)
        np.fill_diagonal(num, 0.0)
        Q = num / num.sum()
        PQn = (P_eff - Q) * num
        grad = 4.0 * (PQn.sum(axis=1)[:, None] * Y - PQn @ Y)
        momentum = 0.5 if t < momentum_switch else 0.8
        gains = np.where(np.sign(grad) != np.sign(velocity), gains + 0.2, gains * 0.8)
        np.maximum(gains, 0.01, out=gains)
        velocity = momentum * velocity - learning_rate * gains * grad
        Y = Y + velocity
        Y = Y - Y.mean(axis=0)
    return Embedding(coords=Y, method="tsne", metric=D.metric.kind)


def export_embedding_csv(emb: Embedding, labels, path) -> None:
    """CSV with header id,label,c0..c{d-1}."""
    labels = np.asarray(labels)
    with open(path, "w", newline="\n") as fh:
        header = ",".join(["id", "label"] + [f"c{j}" for j in range(emb.d)])
        fh.write(header + "\n")
        for i in range(emb.n):
            row = [str(i), str(int(labels[i]))] + [f"{v:.17g}" for v in emb.coords[i]]
            fh.write(",".join(row) + "\n")

"""Pairwise distance matrices: computation, binary cache, and metric-axiom checks.

Matrices are stored condensed (upper triangle, row-major): pair (i, j) with
i < j lives at k(i, j) = i*n - i*(i+1)/2 + (j - i - 1). Work is partitioned by
pair-index ranges and every pair's result is written only to its own slot, so
the output is identical for any worker count.
"""

from __future__ import annotations

import hashlib
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from . import transport
from .errors import CorruptCache, FingerprintMismatch, PairSolveFailure
from .measures import GridMeasure
from .transport import HKParams

CACHE_MAGIC = b"UOTM"
CACHE_VERSION = 1

METRIC_IDS = {"euclidean": 0, "ot": 1, "uot": 2}


@dataclass(frozen=True)
class MetricKind:
    """One of the three benchmark metrics plus its parameters.

    kind "euclidean" consumes flattened intensity vectors; "ot" (exact W2)
    consumes normalized measures; "uot" (entropic HK) consumes unnormalized
    measures and carries HKParams.
    """

    kind: str
    hk: HKParams | None = None
    normalize: bool = False

    def __post_init__(self):
        if self.kind not in METRIC_IDS:
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.kind == "uot" and self.hk is None:
            object.__setattr__(self, "hk", HKParams())
        if self.kind == "ot":
            object.__setattr__(self, "normalize", True)

    @property
    def metric_id(self) -> int:
        return METRIC_IDS[self.kind]


@dataclass(frozen=True)
class DistanceMatrix:
    n: int
    metric: MetricKind
    values: np.ndarray     # condensed, length n*(n-1)//2
    fingerprint: bytes     # 32-byte content hash of dataset + metric parameters

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.shape != (self.n * (self.n - 1) // 2,):
            raise ValueError(f"condensed length {vals.shape} does not match n={self.n}")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0.0):
            raise ValueError("distances must be finite and nonnegative")
        if len(self.fingerprint) != 32:
            raise ValueError("fingerprint must be 32 bytes")
        object.__setattr__(self, "values", vals)

    def get(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        return float(self.values[condensed_index(min(i, j), max(i, j), self.n)])

    def square(self) -> np.ndarray:
        """Expand to a full symmetric matrix with zero diagonal."""
        out = np.zeros((self.n, self.n))
        iu = np.triu_indices(self.n, 1)
        out[iu] = self.values
        out[(iu[1], iu[0])] = self.values
        return out


def condensed_index(i: int, j: int, n: int) -> int:
    """Slot of pair (i, j), i < j, in the condensed upper-triangular layout."""
    if not 0 <= i < j < n:
        raise ValueError(f"need 0 <= i < j < n, got ({i}, {j}) with n={n}")
    return i * n - i * (i + 1) // 2 + (j - i - 1)


def _hash_params(metric: MetricKind) -> bytes:
    if metric.kind == "uot":
        hk = metric.hk
        eps = float("nan") if hk.epsilon is None else hk.epsilon
        return struct.pack("<Bddqd", metric.metric_id, hk.kappa, eps, hk.max_iter, hk.tol)
    return struct.pack("<B?", metric.metric_id, metric.normalize)


def dataset_fingerprint(dataset, metric: MetricKind) -> bytes:
    """sha256 over the metric parameters and the dataset contents, in order."""
    h = hashlib.sha256()
    h.update(CACHE_MAGIC)
    h.update(_hash_params(metric))
    if isinstance(dataset, np.ndarray):
        h.update(struct.pack("<qq", *dataset.shape))
        h.update(np.ascontiguousarray(dataset, dtype=np.float64).tobytes())
    else:
        for m in dataset:
            h.update(struct.pack("<q", len(m)))
            h.update(m.coords.tobytes())
            h.update(m.weights.tobytes())
    return h.digest()


def _solve_pair(metric: MetricKind, a: GridMeasure, b: GridMeasure) -> float:
    if metric.kind == "ot":
        return transport.w2_exact(a, b, keep_plan=False).distance
    return transport.hk_distance(a, b, metric.hk).distance


def _solve_range(args) -> tuple[int, np.ndarray]:
    metric, measures, rows, cols, start = args
    out = np.empty(len(rows))
    for k in range(len(rows)):
        i, j = int(rows[k]), int(cols[k])
        try:
            out[k] = _solve_pair(metric, measures[i], measures[j])
        except Exception as exc:  # noqa: BLE001 - annotate with the pair and re-raise
            raise PairSolveFailure(i, j, exc) from exc
    return start, out


def compute_pairwise(dataset, metric: MetricKind, workers: int = 1) -> DistanceMatrix:
    """Full pairwise distances under `metric`.

    `dataset` is an (n, p) array of intensity vectors for the Euclidean metric
    and a list of GridMeasure otherwise. Identical inputs give identical bytes
    for any `workers` value.
    """
    if metric.kind == "euclidean":
        data = np.asarray(dataset, dtype=np.float64)
        n = len(data)
        if n < 2:
            raise ValueError("need at least two records")
        values = pdist(data)
        return DistanceMatrix(n, metric, values, dataset_fingerprint(data, metric))

    measures = list(dataset)
    n = len(measures)
    if n < 2:
        raise ValueError("need at least two records")
    if metric.kind == "ot":
        masses = np.array([m.total_mass for m in measures])
        if np.abs(masses - 1.0).max() > 1e-9:
            raise ValueError("OT metric requires normalized measures (total mass 1)")
    total = n * (n - 1) // 2
    rows, cols = np.triu_indices(n, 1)
    values = np.empty(total)
    if workers <= 1:
        values = _solve_range((metric, measures, rows, cols, 0))[1]
    else:
        nchunks = min(total, workers * 8)
        bounds = np.linspace(0, total, nchunks + 1, dtype=int)
        jobs = [
            (metric, measures, rows[lo:hi], cols[lo:hi], int(lo))
            for lo, hi in zip(bounds[:-1], bounds[1:])
            if hi > lo
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for start, chunk in pool.map(_solve_range, jobs):
                values[start : start + len(chunk)] = chunk
    return DistanceMatrix(n, metric, values, dataset_fingerprint(measures, metric))


# -- binary cache --------------------------------------------------------------

def save_cache(m: DistanceMatrix, path) -> None:
    """Little-endian cache: magic, version, metric id, kappa, epsilon, n, fingerprint, values."""
    kappa, eps = 0.0, 0.0
    if m.metric.kind == "uot":
        kappa = m.metric.hk.kappa
        eps = float("nan") if m.metric.hk.epsilon is None else m.metric.hk.epsilon
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<IBddI", CACHE_VERSION, m.metric.metric_id, kappa, eps, m.n))
        fh.write(m.fingerprint)
        fh.write(m.values.astype("<f8").tobytes())


def load_cache(path, expected_fingerprint: bytes | None = None,
               metric: MetricKind | None = None) -> DistanceMatrix:
    """Read a cache file, verifying magic, version, length, and (if given) fingerprint."""
    with open(path, "rb") as fh:
        data = fh.read()
    header = struct.calcsize("<IBddI")
    if len(data) < 4 + header + 32 or data[:4] != CACHE_MAGIC:
        raise CorruptCache(f"{path}: not a distance cache")
    version, metric_id, kappa, eps, n = struct.unpack_from("<IBddI", data, 4)
    if version != CACHE_VERSION:
        raise CorruptCache(f"{path}: unsupported cache version {version}")
    offset = 4 + header
    fingerprint = data[offset : offset + 32]
    count = n * (n - 1) // 2
    expected_len = offset + 32 + 8 * count
    if len(data) != expected_len:
        raise CorruptCache(f"{path}: expected {expected_len} bytes, found {len(data)}")
    if expected_fingerprint is not None and fingerprint != expected_fingerprint:
        raise FingerprintMismatch(f"{path}: cache was built from different inputs or parameters")
    values = np.frombuffer(data, dtype="<f8", count=count, offset=offset + 32).copy()
    if metric is None:
        kind = {v: k for k, v in METRIC_IDS.items()}[metric_id]
        if kind == "uot":
            metric = MetricKind("uot", hk=HKParams(kappa=kappa, epsilon=None if np.isnan(eps) else eps))
        else:
            metric = MetricKind(kind)
    return DistanceMatrix(n, metric, values, fingerprint)


# -- metric axiom report -------------------------------------------------------

@dataclass(frozen=True)
class AxiomReport:
    max_triangle_violation: float
    max_asymmetry: float  # always 0: condensed storage is symmetric by construction
    min_value: float
    triples_checked: int


def metric_axiom_report(m: DistanceMatrix, triple_samples: int | None = None,
                        seed: int = 0) -> AxiomReport:
    """Triangle-inequality violations over sampled (or all) triples.

    For a triple (i, j, k) the worst of the three role assignments
    d(a, c) - d(a, b) - d(b, c) is scored. If `triple_samples` is None or at
    least C(n, 3), every triple is checked.
    """
    if m.n < 3:
        raise ValueError("need n >= 3 for triangle checks")
    D = m.square()
    total = m.n * (m.n - 1) * (m.n - 2) // 6
    if triple_samples is None or triple_samples >= total:
        worst = -np.inf
        for i in range(m.n - 2):
            for j in range(i + 1, m.n - 1):
                dij = D[i, j]
                dik = D[i, j + 1 :]
                djk = D[j, j + 1 :]
                worst = max(
                    worst,
                    float(np.max(dik - dij - djk)),
                    float(np.max(dij - dik - djk)),
                    float(np.max(djk - dij - dik)),
                )
        checked = total
    else:
        rng = np.random.default_rng(seed)
        worst = -np.inf
        for _ in range(triple_samples):
            i, j, k = rng.choice(m.n, size=3, replace=False)
            worst = max(
                worst,
                D[i, k] - D[i, j] - D[j, k],
                D[i, j] - D[i, k] - D[k, j],
                D[j, k] - D[j, i] - D[i, k],
            )
        checked = triple_samples
    return AxiomReport(
        max_triangle_violation=float(worst),
        max_asymmetry=0.0,
        min_value=float(m.values.min()) if len(m.values) else 0.0,
        triples_checked=checked,
    )

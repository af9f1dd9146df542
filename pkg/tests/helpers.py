"""Shared test utilities: independent oracles and synthetic data generators.

The oracles here deliberately avoid the code paths they check: transport
vertices are enumerated from spanning subsets, the Dirac objective is a dense
1-D scan, t-tail probabilities come from adaptive quadrature, and cluster
matching is a factorial sweep.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.integrate import quad

from uotbench.measures import GridMeasure


# -- random measures -----------------------------------------------------------

def random_measure(rng, n_min=2, n_max=12, mass=None) -> GridMeasure:
    n = int(rng.integers(n_min, n_max + 1))
    coords = rng.random((n, 2))
    while len(np.unique(coords, axis=0)) != n:  # pragma: no cover - measure-zero event
        coords = rng.random((n, 2))
    weights = rng.uniform(0.2, 1.0, n)
    if mass is not None:
        weights = weights * (mass / weights.sum())
    return GridMeasure(coords, weights)


def random_image_measure(rng, side=14, mass=None, density=0.5) -> GridMeasure:
    """A measure supported on a random subset of a side x side pixel grid."""
    img = rng.random((side, side)) * (rng.random((side, side)) < density)
    img.flat[int(rng.integers(side * side))] = max(img.max(), 0.5)  # keep it nonempty
    xs = (np.arange(side) + 0.5) / side
    xx, yy = np.meshgrid(xs, xs)
    keep = img.ravel() > 0
    coords = np.stack([xx.ravel()[keep], yy.ravel()[keep]], axis=1)
    weights = img.ravel()[keep]
    if mass is not None:
        weights = weights * (mass / weights.sum())
    return GridMeasure(coords, weights)


# -- exact-W2 oracle: enumerate transportation-polytope extreme points -----------

def w2_vertex_enumeration(a, b, C) -> float:
    """Minimum LP cost over all basic feasible solutions of the transportation
    polytope (extreme points = spanning trees of K_{m,n} with nonnegative flows)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64) * (a.sum() / np.asarray(b, dtype=float).sum())
    m, n = len(a), len(b)
    edges = [(i, j) for i in range(m) for j in range(n)]
    best = np.inf
    for subset in itertools.combinations(edges, m + n - 1):
        # spanning check via union-find over the bipartite nodes
        parent = list(range(m + n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        acyclic = True
        for i, j in subset:
            ri, rj = find(i), find(m + j)
            if ri == rj:
                acyclic = False
                break
            parent[ri] = rj
        if not acyclic or len({find(x) for x in range(m + n)}) != 1:
            continue
        # unique flows on a tree: peel leaves
        flows = {}
        remaining = set(subset)
        need_row = a.copy()
        need_col = b.copy()
        degree_row = np.zeros(m, dtype=int)
        degree_col = np.zeros(n, dtype=int)
        for i, j in subset:
            degree_row[i] += 1
            degree_col[j] += 1
        while remaining:
            for (i, j) in list(remaining):
                if degree_row[i] == 1:
                    f = need_row[i]
                elif degree_col[j] == 1:
                    f = need_col[j]
                else:
                    continue
                flows[(i, j)] = f
                need_row[i] -= f
                need_col[j] -= f
                degree_row[i] -= 1
                degree_col[j] -= 1
                remaining.remove((i, j))
        if min(flows.values()) < -1e-12:
            continue
        cost = sum(max(f, 0.0) * C[i, j] for (i, j), f in flows.items())
        best = min(best, cost)
    return best


# -- Dirac HK oracle: dense scan of the one-scalar objective ---------------------

def hk_dirac_bruteforce(a: float, b: float, d: float, kappa: float,
                        grid: int = 1_000_000) -> float:
    """min over t >= 0 of t*c + KL(t|a) + KL(t|b) via a dense grid scan."""
    if d / kappa >= np.pi / 2:
        return a + b  # only t = 0 has finite objective
    c = -2.0 * np.log(np.cos(d / kappa))
    t_hi = max(a, b) * 2.0
    ts = np.linspace(0.0, t_hi, grid)[1:]  # t = 0 handled separately (value a + b)
    vals = ts * c + (ts * np.log(ts / a) - ts + a) + (ts * np.log(ts / b) - ts + b)
    return float(min(a + b, vals.min()))


# -- Student-t tail probability via adaptive quadrature --------------------------

def t_tail_quadrature(t: float, df: float) -> float:
    """P(T > t) for Student's t by integrating the density."""
    from math import lgamma

    norm = np.exp(lgamma((df + 1) / 2) - lgamma(df / 2)) / np.sqrt(df * np.pi)

    def density(x):
        return norm * (1.0 + x * x / df) ** (-(df + 1) / 2)

    if t >= 0:
        val, _ = quad(density, t, np.inf, epsabs=1e-12, epsrel=1e-12)
        return val
    val, _ = quad(density, -np.inf, t, epsabs=1e-12, epsrel=1e-12)
    return 1.0 - val


# -- assignment accuracy oracle: all k! relabelings -------------------------------

def assignment_bruteforce(pred, truth) -> float:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    pred_ids = list(np.unique(pred))
    true_ids = list(np.unique(truth))
    k = max(len(pred_ids), len(true_ids))
    padded_true = true_ids + [f"pad{i}" for i in range(k - len(true_ids))]
    best = 0
    for perm in itertools.permutations(padded_true, len(pred_ids)):
        mapping = dict(zip(pred_ids, perm))
        best = max(best, sum(mapping[p] == t for p, t in zip(pred, truth)))
    return best / len(pred)


# -- deterministic surrogate digit dataset ---------------------------------------

def render_digit(digit: int, rng, side: int = 28) -> np.ndarray:
    """A thick-stroke glyph (0, 1, or 2) with random pose, on [0,1] intensities."""
    hi = side * 4
    img = np.zeros((hi, hi))
    cx = hi / 2 + rng.uniform(-6, 6)
    cy = hi / 2 + rng.uniform(-6, 6)
    scale = hi / 2 * rng.uniform(0.55, 0.75)
    thick = rng.uniform(0.16, 0.26) * scale
    ang0 = rng.uniform(-0.25, 0.25)
    yy, xx = np.mgrid[0:hi, 0:hi]

    def stamp(pts):
        for px, py in pts:
            img[(xx - px) ** 2 + (yy - py) ** 2 <= thick ** 2] = 1.0

    t = np.linspace(0, 2 * np.pi, 160)
    if digit == 0:
        rx = scale * rng.uniform(0.55, 0.7)
        ry = scale * rng.uniform(0.85, 1.0)
        stamp(np.stack([cx + rx * np.cos(t + ang0), cy + ry * np.sin(t + ang0)], axis=1))
    elif digit == 1:
        length = scale * rng.uniform(0.9, 1.05)
        s = np.linspace(-length, length, 120)
        slant = rng.uniform(-0.12, 0.12)
        stamp(np.stack([cx + slant * s, cy + s], axis=1))
    elif digit == 2:
        r = scale * rng.uniform(0.5, 0.62)
        arc = np.linspace(-np.pi * 0.9, np.pi * 0.25, 90)
        top = np.stack([cx + r * np.cos(arc), (cy - scale * 0.38) + r * 0.8 * np.sin(arc)], axis=1)
        diag = np.stack([np.linspace(top[-1, 0], cx - r, 60),
                         np.linspace(top[-1, 1], cy + scale, 60)], axis=1)
        base = np.stack([np.linspace(cx - r, cx + r * 1.05, 50),
                         np.full(50, cy + scale)], axis=1)
        stamp(np.concatenate([top, diag, base]))
    else:
        raise ValueError("only digits 0, 1, 2 are supported")
    img = img.reshape(side, 4, side, 4).mean(axis=(1, 3))
    return np.clip(img, 0.0, 1.0)


def mean_pool(img: np.ndarray, factor: int) -> np.ndarray:
    h, w = img.shape
    return img.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))


def make_digit_dataset(n_per_class: int, seed: int = 20240809, side: int = 28,
                       pool: int = 1):
    """(images, labels) for classes {0, 1, 2}; deterministic in seed."""
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for digit in (0, 1, 2):
        for _ in range(n_per_class):
            img = render_digit(digit, rng, side)
            if pool > 1:
                img = mean_pool(img, pool)
            images.append(img)
            labels.append(digit)
    return np.array(images), np.array(labels)

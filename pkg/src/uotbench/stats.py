"""Replicate aggregation and the 6-test one-sided comparison protocol.

Each cell of the benchmark compares three metrics (euclidean, ot, uot) via two
one-sided Welch t-tests per ordered pair at a fixed significance level. A
metric that beats both others is a strict winner (rendered bold); the
best-mean metric that beats exactly one other is a bar winner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingMetric

METRIC_ORDER = ("euclidean", "ot", "uot")


@dataclass(frozen=True)
class TaskResult:
    """Accuracy samples over replicates for one (dataset, embedding, algorithm, metric)."""

    dataset: str
    embedding: str
    algorithm: str
    metric: str
    accuracies: np.ndarray

    def __post_init__(self):
        acc = np.ascontiguousarray(self.accuracies, dtype=np.float64)
        if acc.ndim != 1 or len(acc) < 2:
            raise ValueError("need at least two replicate accuracies")
        if not np.all(np.isfinite(acc)) or acc.min() < 0.0 or acc.max() > 1.0:
            raise ValueError("accuracies must lie in [0, 1]")
        object.__setattr__(self, "accuracies", acc)

    @property
    def mean(self) -> float:
        return float(self.accuracies.mean())

    @property
    def std(self) -> float:
        return float(self.accuracies.std(ddof=1))


# -- Student-t CDF via the regularized incomplete beta function ----------------

def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    max_iter = 300
    eps = 3e-16
    fpmin = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise RuntimeError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def _reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    front = math.exp(
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_cdf(t: float, df: float) -> float:
    """CDF of Student's t with `df` degrees of freedom, absolute error <= 1e-10."""
    if df <= 0.0:
        raise ValueError("df must be > 0")
    if math.isnan(t):
        return math.nan
    if t == 0.0:
        return 0.5
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    tail = 0.5 * _reg_inc_beta(df / 2.0, 0.5, df / (df + t * t))
    return 1.0 - tail if t > 0 else tail


def welch_one_sided(a, b) -> tuple[float, float, float]:
    """Welch's t-test of H1: mean(a) > mean(b); returns (t, df, p).

    Zero variance on both sides gives p = 0.5 for equal means and p in {0, 1}
    otherwise (the infinite-t convention).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("need at least two samples per group")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("samples must be finite")
    na, nb = len(a), len(b)
    va = a.var(ddof=1) / na
    vb = b.var(ddof=1) / nb
    diff = a.mean() - b.mean()
    if va + vb == 0.0:
        df = float(na + nb - 2)
        if diff == 0.0:
            return 0.0, df, 0.5
        return math.copysign(math.inf, diff), df, 0.0 if diff > 0 else 1.0
    t = diff / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va ** 2 / (na - 1) + vb ** 2 / (nb - 1))
    return float(t), float(df), 1.0 - student_t_cdf(t, df)


@dataclass(frozen=True)
class Verdict:
    """Outcome of the 6-test matrix for one cell.

    outcome is "strict" (winner beats both others), "bar" (best-mean metric
    beats exactly one other; `beaten` names it), or "none".
    """

    p_values: dict  # {(A, B): p for H1 mean(A) > mean(B)}, 6 ordered pairs
    means: dict     # {metric: mean accuracy}
    alpha: float
    outcome: str
    winner: str | None = None
    beaten: str | None = None
    extras: dict = field(default_factory=dict)


def verdict(results: dict, alpha: float = 0.05) -> Verdict:
    """Run the 6 ordered-pair tests over {euclidean, ot, uot} and classify the cell."""
    missing = [m for m in METRIC_ORDER if m not in results]
    if missing or len(results) != 3:
        raise MissingMetric(f"need results for exactly {METRIC_ORDER}, missing {missing}")
    counts = {len(results[m].accuracies) for m in METRIC_ORDER}
    if len(counts) != 1:
        raise ValueError("replicate counts differ across metrics")
    p_values = {}
    for m1 in METRIC_ORDER:
        for m2 in METRIC_ORDER:
            if m1 != m2:
                _, _, p = welch_one_sided(results[m1].accuracies, results[m2].accuracies)
                p_values[(m1, m2)] = p
    means = {m: results[m].mean for m in METRIC_ORDER}

    def beats(m1, m2):
        return p_values[(m1, m2)] < alpha

    for m in METRIC_ORDER:
        others = [o for o in METRIC_ORDER if o != m]
        if all(beats(m, o) for o in others):
            return Verdict(p_values=p_values, means=means, alpha=alpha,
                           outcome="strict", winner=m)
    best = max(METRIC_ORDER, key=lambda m: (means[m], -METRIC_ORDER.index(m)))
    beaten = [o for o in METRIC_ORDER if o != best and beats(best, o)]
    if len(beaten) == 1:
        return Verdict(p_values=p_values, means=means, alpha=alpha,
                       outcome="bar", winner=best, beaten=beaten[0])
    return Verdict(p_values=p_values, means=means, alpha=alpha, outcome="none")

"""Supervised evaluation on embedded coordinates: split, train, predict, score.

Every routine is deterministic given (data, hyperparameters, seed); nothing
here touches global random state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ClassTooSmall, LengthMismatch, SingularCovariance


@dataclass(frozen=True)
class TrainTestSplit:
    train_indices: np.ndarray
    test_indices: np.ndarray
    seed: int


def split_80_20(n: int, labels, seed: int) -> TrainTestSplit:
    """Stratified 80/20 split: per class round(0.2 * count) test items, at least one."""
    labels = np.asarray(labels)
    if len(labels) != n:
        raise LengthMismatch(f"labels length {len(labels)} != n={n}")
    if n < 5:
        raise ValueError("need n >= 5 to split 80/20")
    rng = np.random.default_rng(seed)
    test_parts = []
    train_parts = []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if len(members) < 2:
            raise ClassTooSmall(f"class {cls} has {len(members)} member(s); need >= 2")
        n_test = max(1, int(np.floor(0.2 * len(members) + 0.5)))
        n_test = min(n_test, len(members) - 1)
        perm = rng.permutation(len(members))
        test_parts.append(members[perm[:n_test]])
        train_parts.append(members[perm[n_test:]])
    return TrainTestSplit(
        train_indices=np.sort(np.concatenate(train_parts)),
        test_indices=np.sort(np.concatenate(test_parts)),
        seed=seed,
    )


def knn_predict(train_coords, train_labels, test_coords, k: int) -> np.ndarray:
    """Majority vote over the k nearest training points (Euclidean).

    Distance ties break toward the lower train index; vote ties break toward
    the label of the nearest neighbor among the tied classes.
    """
    train_coords = np.asarray(train_coords, dtype=np.float64)
    test_coords = np.asarray(test_coords, dtype=np.float64)
    train_labels = np.asarray(train_labels)
    if k > len(train_coords):
        raise ValueError(f"k={k} exceeds training size {len(train_coords)}")
    d2 = ((test_coords[:, None, :] - train_coords[None, :, :]) ** 2).sum(-1)
    order = np.lexsort((np.broadcast_to(np.arange(len(train_coords)), d2.shape), d2), axis=1)
    preds = np.empty(len(test_coords), dtype=train_labels.dtype)
    for t in range(len(test_coords)):
        nbr_labels = train_labels[order[t, :k]]
        classes, counts = np.unique(nbr_labels, return_counts=True)
        tied = classes[counts == counts.max()]
        if len(tied) == 1:
            preds[t] = tied[0]
        else:
            for lab in nbr_labels:  # nearest-first
                if lab in tied:
                    preds[t] = lab
                    break
    return preds


@dataclass(frozen=True)
class LdaModel:
    classes: np.ndarray
    means: np.ndarray       # (C, d)
    precision: np.ndarray   # (d, d), inverse of ridged pooled covariance
    log_priors: np.ndarray  # (C,)


def lda_fit(train_coords, train_labels, ridge: float = 1e-3) -> LdaModel:
    """Gaussian discriminant with pooled within-class covariance + scaled ridge."""
    X = np.asarray(train_coords, dtype=np.float64)
    y = np.asarray(train_labels)
    if ridge < 0.0:
        raise ValueError("ridge must be >= 0")
    classes = np.unique(y)
    if len(classes) < 2:
        raise ValueError("LDA needs at least two classes")
    n, d = X.shape
    means = np.vstack([X[y == c].mean(axis=0) for c in classes])
    scatter = np.zeros((d, d))
    for c, m in zip(classes, means):
        Z = X[y == c] - m
        scatter += Z.T @ Z
    cov = scatter / max(n - len(classes), 1)
    cov = cov + ridge * (np.trace(cov) / d) * np.eye(d)
    try:
        precision = np.linalg.inv(cov)
        if not np.all(np.isfinite(precision)) or np.linalg.cond(cov) > 1e12:
            raise np.linalg.LinAlgError("ill-conditioned covariance")
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(f"pooled covariance is singular: {exc}") from exc
    priors = np.array([(y == c).mean() for c in classes])
    return LdaModel(classes=classes, means=means, precision=precision,
                    log_priors=np.log(priors))


def lda_predict(model: LdaModel, coords) -> np.ndarray:
    X = np.asarray(coords, dtype=np.float64)
    pm = model.means @ model.precision  # (C, d)
    scores = X @ pm.T - 0.5 * (model.means * pm).sum(axis=1)[None, :] + model.log_priors[None, :]
    return model.classes[np.argmax(scores, axis=1)]


@dataclass(frozen=True)
class MlrModel:
    classes: np.ndarray
    weights: np.ndarray  # (d, C)
    bias: np.ndarray     # (C,)
    converged: bool
    iterations: int
    objectives: np.ndarray = field(repr=False, default=None)


def _softmax(scores):
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _mlr_objective(X, onehot, W, b, l2):
    scores = X @ W + b
    shifted = scores - scores.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1)) + scores.max(axis=1)
    ll = (scores[np.arange(len(X)), onehot.argmax(axis=1)] - log_z).mean()
    return -ll + 0.5 * l2 * float((W * W).sum())


def mlr_fit(train_coords, train_labels, l2: float = 1e-4, iters: int = 500) -> MlrModel:
    """Softmax regression by full-batch descent with step halving on non-decrease.

    Deterministic: zero initialization, fixed initial step. The intercept is
    not penalized. Converged when the gradient norm drops to 1e-6.
    """
    if l2 <= 0.0:
        raise ValueError("l2 must be > 0")
    X = np.asarray(train_coords, dtype=np.float64)
    y = np.asarray(train_labels)
    classes = np.unique(y)
    n, d = X.shape
    onehot = (y[:, None] == classes[None, :]).astype(np.float64)
    W = np.zeros((d, len(classes)))
    b = np.zeros(len(classes))
    step = 1.0
    objectives = [_mlr_objective(X, onehot, W, b, l2)]
    converged = False
    used = 0
    for used in range(1, iters + 1):
        resid = _softmax(X @ W + b) - onehot
        grad_w = X.T @ resid / n + l2 * W
        grad_b = resid.mean(axis=0)
        gnorm = np.sqrt(float((grad_w * grad_w).sum() + (grad_b * grad_b).sum()))
        if gnorm <= 1e-6:
            converged = True
            break
        while True:
            W_new = W - step * grad_w
            b_new = b - step * grad_b
            obj_new = _mlr_objective(X, onehot, W_new, b_new, l2)
            if obj_new < objectives[-1]:
                break
            if step < 1e-16:  # cannot make progress at machine precision
                return MlrModel(classes=classes, weights=W, bias=b, converged=False,
                                iterations=used, objectives=np.array(objectives))
            step *= 0.5
        W, b = W_new, b_new
        objectives.append(obj_new)
    return MlrModel(classes=classes, weights=W, bias=b, converged=converged,
                    iterations=used, objectives=np.array(objectives))


def mlr_predict(model: MlrModel, coords) -> np.ndarray:
    scores = np.asarray(coords, dtype=np.float64) @ model.weights + model.bias
    return model.classes[np.argmax(scores, axis=1)]


@dataclass(frozen=True)
class SvmModel:
    classes: np.ndarray
    weights: np.ndarray  # (C, d+1): one averaged hyperplane per class, last entry is bias


def linear_svm_fit(train_coords, train_labels, l2: float = 1e-4,
                   iters: int = 20000, seed: int = 0) -> SvmModel:
    """One-vs-rest hinge loss by Pegasos-style stochastic subgradient descent.

    Step 1/(l2*t); the returned hyperplane is the average of the iterates over
    the final half of the run. Inputs are augmented with a constant feature.
    """
    if l2 <= 0.0:
        raise ValueError("l2 must be > 0")
    X = np.asarray(train_coords, dtype=np.float64)
    y = np.asarray(train_labels)
    classes = np.unique(y)
    n = len(X)
    Xa = np.hstack([X, np.ones((n, 1))])
    rng = np.random.default_rng(seed)
    planes = np.zeros((len(classes), Xa.shape[1]))
    for ci, c in enumerate(classes):
        sign = np.where(y == c, 1.0, -1.0)
        w = np.zeros(Xa.shape[1])
        w_sum = np.zeros_like(w)
        averaged = 0
        for t in range(1, iters + 1):
            i = int(rng.integers(n))
            eta = 1.0 / (l2 * t)
            margin = sign[i] * float(Xa[i] @ w)
            w = (1.0 - eta * l2) * w
            if margin < 1.0:
                w = w + eta * sign[i] * Xa[i]
            if t > iters // 2:
                w_sum += w
                averaged += 1
        planes[ci] = w_sum / max(averaged, 1)
    return SvmModel(classes=classes, weights=planes)


def svm_predict(model: SvmModel, coords) -> np.ndarray:
    X = np.asarray(coords, dtype=np.float64)
    Xa = np.hstack([X, np.ones((len(X), 1))])
    scores = Xa @ model.weights.T
    return model.classes[np.argmax(scores, axis=1)]


def accuracy(pred, truth) -> float:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"predictions {pred.shape} vs truth {truth.shape}")
    return float((pred == truth).mean())

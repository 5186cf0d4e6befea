"""Feature ranking and the diagonal Gaussian classifier."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VAR_FLOOR = 1e-9


def fisher_scores(features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-feature (mu1 - mu2)^2 / (var1 + var2) between the two classes.
    Zero pooled variance scores 0 rather than dividing by it."""
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    classes = np.unique(y)
    if len(classes) != 2:
        raise ValueError("need exactly two classes")
    x0, x1 = x[y == classes[0]], x[y == classes[1]]
    if len(x0) < 2 or len(x1) < 2:
        raise ValueError("need at least two samples per class")
    num = (x0.mean(axis=0) - x1.mean(axis=0)) ** 2
    den = x0.var(axis=0, ddof=1) + x1.var(axis=0, ddof=1)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def select_top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k best scores, ties broken by lower index."""
    scores = np.asarray(scores, dtype=float)
    if not 0 < k <= len(scores):
        raise ValueError("k out of range")
    order = np.lexsort((np.arange(len(scores)), -scores))
    return order[:k]


@dataclass
class GaussianModel:
    means: np.ndarray       # (2, k)
    variances: np.ndarray   # (2, k), strictly positive
    priors: np.ndarray      # (2,), sums to 1

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float)
        self.variances = np.asarray(self.variances, dtype=float)
        self.priors = np.asarray(self.priors, dtype=float)
        if self.means.shape != self.variances.shape or self.means.ndim != 2 \
                or self.means.shape[0] != 2:
            raise ValueError("means/variances must be (2, k)")
        if np.any(self.variances <= 0):
            raise ValueError("variances must be strictly positive")
        if self.priors.shape != (2,) or abs(self.priors.sum() - 1.0) > 1e-9 \
                or np.any(self.priors < 0):
            raise ValueError("priors must be a 2-class distribution")

    @property
    def n_features(self) -> int:
        return self.means.shape[1]


def train_gaussian(features: np.ndarray, labels: np.ndarray,
                   var_floor: float = VAR_FLOOR) -> GaussianModel:
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    classes = np.unique(y)
    if len(classes) != 2:
        raise ValueError("need exactly two classes")
    means, variances, counts = [], [], []
    for c in classes:
        xc = x[y == c]
        means.append(xc.mean(axis=0))
        variances.append(np.maximum(xc.var(axis=0, ddof=1), var_floor))
        counts.append(len(xc))
    priors = np.asarray(counts, dtype=float) / len(y)
    return GaussianModel(means=np.stack(means), variances=np.stack(variances),
                         priors=priors)


def classify(model: GaussianModel, fv: np.ndarray) -> np.ndarray:
    """Posterior over the two classes for one feature vector."""
    fv = np.asarray(fv, dtype=float)
    if fv.shape != (model.n_features,):
        raise ValueError("feature vector does not match the model layout")
    d = fv[None, :] - model.means
    loglik = -0.5 * np.sum(d * d / model.variances + np.log(2 * np.pi * model.variances),
                           axis=1)
    logp = loglik + np.log(model.priors)
    logp -= logp.max()
    p = np.exp(logp)
    return p / p.sum()

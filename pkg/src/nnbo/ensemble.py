"""K independently initialized neural GPs fused by moment matching."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .neural import NeuralConfig, NeuralSurrogate, Prediction, train_stack

DEFAULT_K = 5


def member_seed(seed: int, k: int) -> int:
    return seed ^ k


@dataclass(frozen=True)
class EnsembleModel:
    members: tuple[NeuralSurrogate, ...]

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if len(self.members) < 1:
            raise ValueError("an ensemble needs at least one member")

    @property
    def K(self) -> int:
        return len(self.members)

    def member_predictions(self, Xq) -> tuple[np.ndarray, np.ndarray]:
        """(K, n) means and variances, in member order."""
        preds = [m.predict(Xq) for m in self.members]
        return np.array([p[0] for p in preds]), np.array([p[1] for p in preds])

    def predict(self, Xq) -> tuple[np.ndarray, np.ndarray]:
        return fuse_moments(*self.member_predictions(Xq))


def _neumaier_sum(rows: np.ndarray) -> np.ndarray:
    """Compensated sum over axis 0, accumulated in index order."""
    total = np.zeros(rows.shape[1:])
    comp = np.zeros(rows.shape[1:])
    for r in rows:
        t = total + r
        big = np.abs(total) >= np.abs(r)
        comp += np.where(big, (total - t) + r, (r - t) + total)
        total = t
    return total + comp


def fuse_moments(means: np.ndarray, variances: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First two moments of the uniform mixture of K Gaussians.

    mean = avg(mu_k); var = avg(mu_k^2 + var_k) - mean^2, evaluated as
    avg(var_k) + avg((mu_k - mean)^2) so the spread term cannot go negative.
    """
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    K = means.shape[0]
    if K == 1:
        return means[0].copy(), variances[0].copy()
    mu = _neumaier_sum(means) / K
    spread = _neumaier_sum((means - mu) ** 2) / K
    return mu, _neumaier_sum(variances) / K + spread


def fit_ensemble(X, y, K: int = DEFAULT_K, config: NeuralConfig | None = None, seed: int = 0) -> EnsembleModel:
    if K < 1:
        raise ValueError("K must be >= 1")
    y = np.asarray(y, dtype=float)
    seeds = [member_seed(seed, k) for k in range(K)]
    return EnsembleModel(train_stack(X, np.tile(y, (K, 1)), config or NeuralConfig(), seeds))


def fit_ensembles(X, Y, K: int, config: NeuralConfig, seeds) -> list[EnsembleModel]:
    """One ensemble per row of Y, all members trained in a single stack."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if K < 1:
        raise ValueError("K must be >= 1")
    rows = np.repeat(Y, K, axis=0)
    all_seeds = [member_seed(s, k) for s in seeds for k in range(K)]
    members = train_stack(X, rows, config, all_seeds)
    return [EnsembleModel(members[i * K : (i + 1) * K]) for i in range(len(Y))]


def ensemble_predict(e: EnsembleModel, x) -> Prediction:
    mu, var = e.predict(np.asarray(x, dtype=float)[None, :])
    return Prediction(float(mu[0]), float(var[0]))

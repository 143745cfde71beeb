"""Classic GP regression: ARD squared-exponential kernel with constant mean.

Serves as the comparison surrogate and as the function-space reference the
neural-feature GP is checked against.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

log = logging.getLogger(__name__)

_LOG2PI = np.log(2.0 * np.pi)
JITTER_START = 1e-10
JITTER_MAX = 1e-4


class CholeskyError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class KernelHyperparams:
    amplitude: float
    lengthscales: np.ndarray
    noise: float
    mean: float = 0.0

    def __post_init__(self):
        ls = np.asarray(self.lengthscales, dtype=float).reshape(-1)
        object.__setattr__(self, "lengthscales", ls)
        for name, v in (("amplitude", self.amplitude), ("noise", self.noise)):
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if not np.all(np.isfinite(ls) & (ls > 0)):
            raise ValueError("lengthscales must be positive and finite")
        if not np.isfinite(self.mean):
            raise ValueError("mean must be finite")

    @property
    def dim(self) -> int:
        return self.lengthscales.size

    def to_vector(self) -> np.ndarray:
        """[log amplitude, log lengthscales..., log noise, mean]"""
        return np.concatenate(
            [[np.log(self.amplitude)], np.log(self.lengthscales), [np.log(self.noise), self.mean]]
        )

    @classmethod
    def from_vector(cls, v) -> "KernelHyperparams":
        v = np.asarray(v, dtype=float)
        return cls(float(np.exp(v[0])), np.exp(v[1:-2]), float(np.exp(v[-2])), float(v[-1]))


def ard_kernel(h: KernelHyperparams, X1, X2) -> np.ndarray:
    """Kernel matrix between row sets X1 (n1, d) and X2 (n2, d)."""
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    if X1.shape[1] != h.dim or X2.shape[1] != h.dim:
        raise ValueError("input dimension does not match lengthscale count")
    A = X1 / h.lengthscales
    B = X2 / h.lengthscales
    sq = np.sum(A**2, 1)[:, None] + np.sum(B**2, 1)[None, :] - 2.0 * A @ B.T
    return h.amplitude**2 * np.exp(-0.5 * np.maximum(sq, 0.0))


def kernel_eval(h: KernelHyperparams, x1, x2) -> float:
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != (h.dim,) or x2.shape != (h.dim,):
        raise ValueError("input dimension does not match lengthscale count")
    r2 = np.sum(((x1 - x2) / h.lengthscales) ** 2)
    return float(h.amplitude**2 * np.exp(-0.5 * r2))


def jittered_cholesky(K: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of K, escalating diagonal jitter on failure.

    Returns (L, jitter actually added).
    """
    try:
        return np.linalg.cholesky(K), 0.0
    except np.linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(K)))
    if not np.isfinite(scale) or scale <= 0:
        scale = 1.0
    jitter = JITTER_START
    while jitter <= JITTER_MAX * (1 + 1e-12):
        try:
            return np.linalg.cholesky(K + jitter * scale * np.eye(len(K))), jitter * scale
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise CholeskyError("covariance not positive definite after maximum jitter")


def gaussian_log_likelihood(K_theta: np.ndarray, resid: np.ndarray) -> float:
    """log N(resid | 0, K_theta) through a (jittered) Cholesky factor."""
    L, _ = jittered_cholesky(K_theta)
    a = solve_triangular(L, resid, lower=True)
    return float(-0.5 * (a @ a) - np.sum(np.log(np.diag(L))) - 0.5 * len(resid) * _LOG2PI)


def gp_log_likelihood(h: KernelHyperparams, X, y) -> float:
    """Marginal log-likelihood of y under the GP with hyperparameters h."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    K = ard_kernel(h, X, X) + h.noise**2 * np.eye(len(y))
    return gaussian_log_likelihood(K, y - h.mean)


def gp_log_likelihood_and_grad(v: np.ndarray, X: np.ndarray, y: np.ndarray):
    """Log-likelihood and its gradient w.r.t. the log-space vector of
    ``KernelHyperparams.to_vector``."""
    h = KernelHyperparams.from_vector(v)
    n = len(y)
    Kf = ard_kernel(h, X, X)
    L, _ = jittered_cholesky(Kf + h.noise**2 * np.eye(n))
    r = y - h.mean
    alpha = cho_solve((L, True), r)
    ll = -0.5 * r @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * _LOG2PI
    Kinv = cho_solve((L, True), np.eye(n))
    W = np.outer(alpha, alpha) - Kinv
    WK = W * Kf
    g = np.empty_like(v)
    g[0] = np.sum(WK)
    for i, l in enumerate(h.lengthscales):
        D = (X[:, i : i + 1] - X[:, i : i + 1].T) ** 2
        g[1 + i] = 0.5 * np.sum(WK * D) / l**2
    g[-2] = h.noise**2 * np.trace(W)
    g[-1] = np.sum(alpha)
    return float(ll), g


@dataclass(frozen=True)
class GPModel:
    """A GP conditioned on data; caches the factor of K + noise^2 I."""

    hyperparams: KernelHyperparams
    X: np.ndarray
    y: np.ndarray
    y_mean: float = 0.0
    y_std: float = 1.0
    chol: np.ndarray = field(init=False, repr=False)
    alpha: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        h = self.hyperparams
        K = ard_kernel(h, X, X) + h.noise**2 * np.eye(len(y))
        L, _ = jittered_cholesky(K)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "chol", L)
        object.__setattr__(self, "alpha", cho_solve((L, True), y - h.mean))

    def predict(self, Xq) -> tuple[np.ndarray, np.ndarray]:
        """Posterior predictive mean and variance (original target units)."""
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        h = self.hyperparams
        if Xq.shape[1] != h.dim:
            raise ValueError("query dimension mismatch")
        ks = ard_kernel(h, Xq, self.X)
        mu = h.mean + ks @ self.alpha
        v = solve_triangular(self.chol, ks.T, lower=True)
        explained = h.amplitude**2 - np.sum(v**2, 0)
        if np.any(explained < -1e-8 * h.amplitude**2):
            log.warning("negative posterior variance from round-off clamped to zero")
        var = h.noise**2 + np.maximum(explained, 0.0)
        return self.y_mean + self.y_std * mu, self.y_std**2 * var


def gp_predict(m: GPModel, x) -> tuple[float, float]:
    mu, var = m.predict(np.asarray(x, dtype=float)[None, :])
    return float(mu[0]), float(var[0])


def posterior_from_gram(K: np.ndarray, k_star: np.ndarray, k_ss: np.ndarray, y, noise_var: float):
    """Zero-mean GP posterior from explicit Gram blocks (dense, no caching).

    K is (N, N) train-train, k_star (n, N) query-train, k_ss (n,) query
    self-covariances.  Used as a function-space reference.
    """
    y = np.asarray(y, dtype=float)
    Kn = K + noise_var * np.eye(len(K))
    L, _ = jittered_cholesky(Kn)
    mu = k_star @ cho_solve((L, True), y)
    v = solve_triangular(L, k_star.T, lower=True)
    return mu, noise_var + k_ss - np.sum(v**2, 0)


@dataclass
class GPFitConfig:
    restarts: int = 10
    steps: int = 200
    learning_rate: float = 0.05
    min_noise: float = 1e-6


def _initial_points(d: int, cfg: GPFitConfig, rng: np.random.Generator) -> list[np.ndarray]:
    inits = [np.concatenate([[0.0], np.full(d, np.log(0.3)), [np.log(0.1), 0.0]])]
    for _ in range(cfg.restarts - 1):
        inits.append(
            np.concatenate(
                [
                    [rng.uniform(np.log(0.5), np.log(2.0))],
                    rng.uniform(np.log(0.05), np.log(2.0), d),
                    [rng.uniform(np.log(1e-3), np.log(0.3))],
                    [rng.uniform(-0.5, 0.5)],
                ]
            )
        )
    return inits


def gp_fit(X, y, seed: int = 0, config: GPFitConfig | None = None) -> GPModel:
    """Fit hyperparameters by multistart Adam ascent on the marginal likelihood.

    Targets are standardized first. The best iterate seen across all starts
    (initial points included) is kept, so the result never scores below any
    initialization.
    """
    cfg = config or GPFitConfig()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if len(y) < 2:
        raise ValueError("gp_fit needs at least 2 observations")
    y_mean = float(np.mean(y))
    y_std = float(np.std(y))
    if not y_std > 0:
        y_std = 1.0
    ys = (y - y_mean) / y_std
    rng = np.random.default_rng(seed)
    lo_noise = np.log(cfg.min_noise)

    best_v, best_ll = None, -np.inf
    inits = _initial_points(X.shape[1], cfg, rng)
    for v0 in inits:
        v = v0.copy()
        m = np.zeros_like(v)
        s = np.zeros_like(v)
        for t in range(cfg.steps + 1):
            try:
                ll, g = gp_log_likelihood_and_grad(v, X, ys)
            except CholeskyError:
                break
            if ll > best_ll:
                best_ll, best_v = ll, v.copy()
            if t == cfg.steps:
                break
            m = 0.9 * m + 0.1 * g
            s = 0.999 * s + 0.001 * g**2
            mhat = m / (1 - 0.9 ** (t + 1))
            shat = s / (1 - 0.999 ** (t + 1))
            v = v + cfg.learning_rate * mhat / (np.sqrt(shat) + 1e-8)
            v[-2] = max(v[-2], lo_noise)
            v[:-1] = np.clip(v[:-1], -12.0, 12.0)
    if best_v is None:
        raise CholeskyError("every likelihood evaluation failed to factorize")
    return GPModel(KernelHyperparams.from_vector(best_v), X, ys, y_mean, y_std)

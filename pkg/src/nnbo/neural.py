"""GP regression on features learned by a small ReLU network.

The feature map is a fully-connected network (input -> hidden -> hidden ->
output, ReLU on the two hidden layers, linear output) with a constant 1
appended, so ``M`` counts the constant.  A Gaussian prior
``w ~ N(0, sigma_p^2 / M * I)`` over output weights gives Bayesian linear
regression whose implied kernel is ``phi(x1) . phi(x2) * sigma_p^2 / M``.

With ``A = Phi^T Phi + (M sigma_n^2 / sigma_p^2) I`` (an M x M matrix), the
posterior is

    mean(x) = phi(x)^T A^-1 Phi^T y
    var(x)  = sigma_n^2 (1 + phi(x)^T A^-1 phi(x))

so fitting costs O(N M^2 + M^3) per likelihood evaluation and prediction
O(M^2) once the factor of A is cached.

Internally all training runs on stacks of independent models (leading batch
axis) sharing one design matrix; that is how ensemble members and the
per-metric models of one BO iteration are trained together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

_LOG2PI = math.log(2.0 * math.pi)
_WEIGHT_KEYS = ("w1", "b1", "w2", "b2", "w3", "b3")


class TrainingError(FloatingPointError):
    """Raised when the likelihood becomes non-finite during fitting."""


@dataclass
class NeuralConfig:
    hidden1: int = 32
    hidden2: int = 32
    n_features: int = 16  # includes the appended constant feature
    steps: int = 2000
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    min_noise: float = 1e-3  # floor on sigma_n, in standardized target units
    max_noise: float = 10.0

    def __post_init__(self):
        if min(self.hidden1, self.hidden2) < 1 or self.n_features < 2:
            raise ValueError("layer widths must be >= 1 and n_features >= 2")
        if self.steps < 0 or not self.learning_rate > 0:
            raise ValueError("steps must be >= 0 and learning_rate > 0")
        if not 0 < self.min_noise < self.max_noise:
            raise ValueError("need 0 < min_noise < max_noise")


@dataclass(frozen=True)
class NetworkWeights:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def __post_init__(self):
        d, h1 = self.w1.shape
        if self.b1.shape != (h1,) or self.w2.shape[0] != h1:
            raise ValueError("layer 1/2 shapes do not chain")
        h2 = self.w2.shape[1]
        if self.b2.shape != (h2,) or self.w3.shape[0] != h2:
            raise ValueError("layer 2/3 shapes do not chain")
        if self.b3.shape != (self.w3.shape[1],):
            raise ValueError("output bias shape mismatch")
        for k in _WEIGHT_KEYS:
            if not np.all(np.isfinite(getattr(self, k))):
                raise ValueError(f"non-finite entries in {k}")

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def n_features(self) -> int:
        return self.w3.shape[1] + 1

    @property
    def size(self) -> int:
        return sum(getattr(self, k).size for k in _WEIGHT_KEYS)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([getattr(self, k).ravel() for k in _WEIGHT_KEYS])

    def with_vector(self, v) -> "NetworkWeights":
        v = np.asarray(v, dtype=float)
        out, i = {}, 0
        for k in _WEIGHT_KEYS:
            a = getattr(self, k)
            out[k] = v[i : i + a.size].reshape(a.shape).copy()
            i += a.size
        if i != v.size:
            raise ValueError("weight vector has the wrong length")
        return NetworkWeights(**out)

    @classmethod
    def zeros(cls, d: int, h1: int, h2: int, m: int) -> "NetworkWeights":
        return cls(
            np.zeros((d, h1)), np.zeros(h1), np.zeros((h1, h2)), np.zeros(h2),
            np.zeros((h2, m - 1)), np.zeros(m - 1),
        )


@dataclass(frozen=True)
class NeuralParams:
    """The trainable vector theta = [sigma_n, sigma_p, network weights]."""

    sigma_n: float
    sigma_p: float
    weights: NetworkWeights

    def __post_init__(self):
        for name in ("sigma_n", "sigma_p"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite")

    @property
    def n_features(self) -> int:
        return self.weights.n_features

    def to_vector(self) -> np.ndarray:
        """[log sigma_n, log sigma_p, eta...]"""
        return np.concatenate([[math.log(self.sigma_n), math.log(self.sigma_p)], self.weights.to_vector()])

    def with_vector(self, v) -> "NeuralParams":
        v = np.asarray(v, dtype=float)
        return NeuralParams(float(np.exp(v[0])), float(np.exp(v[1])), self.weights.with_vector(v[2:]))


@dataclass(frozen=True)
class Prediction:
    mean: float
    variance: float


# -- batched core ---------------------------------------------------------

def _stack(params: list[NeuralParams]) -> dict[str, np.ndarray]:
    out = {
        "log_sn": np.array([math.log(p.sigma_n) for p in params]),
        "log_sp": np.array([math.log(p.sigma_p) for p in params]),
    }
    for k in _WEIGHT_KEYS:
        out[k] = np.stack([getattr(p.weights, k) for p in params])
    return out


def _unstack(P: dict[str, np.ndarray], b: int) -> NeuralParams:
    w = NetworkWeights(**{k: P[k][b].copy() for k in _WEIGHT_KEYS})
    return NeuralParams(float(np.exp(P["log_sn"][b])), float(np.exp(P["log_sp"][b])), w)


def _flat_views(P: dict[str, np.ndarray]):
    """Copy a stacked parameter dict into one buffer; return (buffer, views)."""
    flat = np.concatenate([a.ravel() for a in P.values()])
    views, i = {}, 0
    for k, a in P.items():
        views[k] = flat[i : i + a.size].reshape(a.shape)
        i += a.size
    return flat, views


def _forward(P, X):
    """Batched feature map. X (N, d) -> features (B, N, M) plus activations."""
    Z1 = np.matmul(X, P["w1"]) + P["b1"][:, None, :]
    A1 = np.maximum(Z1, 0.0)
    Z2 = np.matmul(A1, P["w2"]) + P["b2"][:, None, :]
    A2 = np.maximum(Z2, 0.0)
    O = np.matmul(A2, P["w3"]) + P["b3"][:, None, :]
    F = np.concatenate([O, np.ones(O.shape[:2] + (1,))], axis=2)
    return F, (Z1, A1, Z2, A2)


def _loglik_batch(P, X, Y, with_grad=True):
    """Log marginal likelihood of each stacked model; optionally its gradient.

    Y has shape (B, N).  Returns (ll (B,), grads dict or None).
    """
    F, (Z1, A1, Z2, A2) = _forward(P, X)
    B, N, M = F.shape
    sn2 = np.exp(2.0 * P["log_sn"])
    ridge = M * np.exp(2.0 * (P["log_sn"] - P["log_sp"]))
    eye = np.eye(M)
    Amat = np.matmul(F.transpose(0, 2, 1), F) + ridge[:, None, None] * eye
    L = np.linalg.cholesky(Amat)
    Linv = np.linalg.inv(L)
    Ainv = np.matmul(Linv.transpose(0, 2, 1), Linv)
    b = np.einsum("bnm,bn->bm", F, Y)
    alpha = np.einsum("bij,bj->bi", Ainv, b)
    q = np.einsum("bm,bm->b", b, alpha)
    yy = np.einsum("bn,bn->b", Y, Y)
    logdet = 2.0 * np.sum(np.log(np.diagonal(L, axis1=1, axis2=2)), axis=1)
    ll = (
        -(yy - q) / (2.0 * sn2)
        - 0.5 * logdet
        + 0.5 * M * np.log(ridge)
        - 0.5 * N * (_LOG2PI + np.log(sn2))
    )
    if not with_grad:
        return ll, None

    resid = Y - np.einsum("bnm,bm->bn", F, alpha)
    dF = resid[:, :, None] * alpha[:, None, :] / sn2[:, None, None] - np.matmul(F, Ainv)
    d_ridge = (
        -np.einsum("bm,bm->b", alpha, alpha) / (2.0 * sn2)
        - 0.5 * np.trace(Ainv, axis1=1, axis2=2)
        + 0.5 * M / ridge
    )
    g = {
        "log_sn": (yy - q) / sn2 - N + 2.0 * ridge * d_ridge,
        "log_sp": -2.0 * ridge * d_ridge,
    }
    dO = dF[:, :, : M - 1]
    g["w3"] = np.matmul(A2.transpose(0, 2, 1), dO)
    g["b3"] = dO.sum(axis=1)
    dZ2 = np.matmul(dO, P["w3"].transpose(0, 2, 1)) * (Z2 > 0)
    g["w2"] = np.matmul(A1.transpose(0, 2, 1), dZ2)
    g["b2"] = dZ2.sum(axis=1)
    dZ1 = np.matmul(dZ2, P["w2"].transpose(0, 2, 1)) * (Z1 > 0)
    g["w1"] = np.matmul(X.T, dZ1)
    g["b1"] = dZ1.sum(axis=1)
    return ll, g


def init_params(d: int, config: NeuralConfig, rng: np.random.Generator, target_std: float = 1.0) -> NeuralParams:
    """Random theta: log-uniform noise/prior scales, fan-in scaled uniform weights."""
    h1, h2, m = config.hidden1, config.hidden2, config.n_features
    log_sn = rng.uniform(math.log(1e-2), math.log(1e-1)) + math.log(target_std)
    log_sp = rng.uniform(math.log(0.5), math.log(2.0))

    def layer(fan_in, fan_out, gain):
        lim = math.sqrt(gain / fan_in)
        w = rng.uniform(-lim, lim, (fan_in, fan_out))
        bias = rng.uniform(-1.0 / math.sqrt(fan_in), 1.0 / math.sqrt(fan_in), fan_out)
        return w, bias

    w1, b1 = layer(d, h1, 6.0)
    w2, b2 = layer(h1, h2, 6.0)
    w3, b3 = layer(h2, m - 1, 3.0)
    return NeuralParams(math.exp(log_sn), math.exp(log_sp), NetworkWeights(w1, b1, w2, b2, w3, b3))


def _standardize(y: np.ndarray) -> tuple[np.ndarray, float, float]:
    if y.size == 0:
        return y, 0.0, 1.0
    mean = float(np.mean(y))
    std = float(np.std(y))
    if not std > 1e-12 * max(1.0, abs(mean)):
        std = 1.0
    return (y - mean) / std, mean, std


def train_stack(X, Y, config: NeuralConfig, seeds) -> list["NeuralSurrogate"]:
    """Fit one surrogate per row of Y (all on the same inputs X).

    Row b is initialized from ``seeds[b]`` and standardized on its own.
    Adam ascent on the log marginal likelihood, full batch.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    B, N = Y.shape
    if len(seeds) != B:
        raise ValueError("need one seed per target row")
    if N < 1 or X.shape[0] != N:
        raise ValueError("need N >= 1 rows matching the targets")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise TrainingError("training inputs and targets must be finite")
    Ys, means, stds = [], [], []
    for row in Y:
        ys, mu, sd = _standardize(row)
        Ys.append(ys)
        means.append(mu)
        stds.append(sd)
    Ys = np.array(Ys)
    d = X.shape[1]
    inits = [init_params(d, config, np.random.default_rng(s)) for s in seeds]
    flat, P = _flat_views(_stack(inits))

    lo, hi = math.log(config.min_noise), math.log(config.max_noise)
    np.clip(P["log_sn"], lo, hi, out=P["log_sn"])
    m = np.zeros_like(flat)
    v = np.zeros_like(flat)
    b1, b2, lr = config.beta1, config.beta2, config.learning_rate

    ll0, _ = _loglik_batch(P, X, Ys, with_grad=False)
    for t in range(1, config.steps + 1):
        ll, g = _loglik_batch(P, X, Ys)
        if not np.all(np.isfinite(ll)):
            bad = int(np.flatnonzero(~np.isfinite(ll))[0])
            raise TrainingError(
                f"non-finite log-likelihood at step {t} (model {bad}, seed {seeds[bad]}, "
                f"sigma_n={np.exp(P['log_sn'][bad]):.3g}, sigma_p={np.exp(P['log_sp'][bad]):.3g})"
            )
        gf = np.concatenate([g[k].ravel() for k in P])
        m *= b1
        m += (1.0 - b1) * gf
        v *= b2
        v += (1.0 - b2) * gf * gf
        flat += (lr / (1.0 - b1**t)) * m / (np.sqrt(v / (1.0 - b2**t)) + 1e-8)
        np.clip(P["log_sn"], lo, hi, out=P["log_sn"])
    ll_final, _ = _loglik_batch(P, X, Ys, with_grad=False)
    if not np.all(np.isfinite(ll_final)):
        raise TrainingError("non-finite log-likelihood after the final step")

    return [
        NeuralSurrogate(
            _unstack(P, b), X, Ys[b], means[b], stds[b],
            initial_log_likelihood=float(ll0[b]), log_likelihood=float(ll_final[b]),
        )
        for b in range(B)
    ]


# -- public single-model API ---------------------------------------------

def forward_features(w: NetworkWeights, x) -> np.ndarray:
    """phi(x) for one point (d,) -> (M,), or a batch (n, d) -> (n, M)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != w.input_dim:
        raise ValueError(f"expected input dimension {w.input_dim}, got {x.shape[-1]}")
    a1 = np.maximum(x @ w.w1 + w.b1, 0.0)
    a2 = np.maximum(a1 @ w.w2 + w.b2, 0.0)
    out = a2 @ w.w3 + w.b3
    return np.concatenate([out, np.ones(out.shape[:-1] + (1,))], axis=-1)


def implied_kernel(params: NeuralParams, x1, x2) -> float:
    f1 = forward_features(params.weights, x1)
    f2 = forward_features(params.weights, x2)
    return float(f1 @ f2 * params.sigma_p**2 / params.n_features)


def implied_gram(params: NeuralParams, X1, X2) -> np.ndarray:
    F1 = forward_features(params.weights, np.atleast_2d(X1))
    F2 = forward_features(params.weights, np.atleast_2d(X2))
    return F1 @ F2.T * (params.sigma_p**2 / params.n_features)


def nn_log_likelihood(params: NeuralParams, X, y) -> float:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(1, -1)
    ll, _ = _loglik_batch(_stack([params]), X, y, with_grad=False)
    return float(ll[0])


def nn_likelihood_grad(params: NeuralParams, X, y) -> np.ndarray:
    """Gradient of the log-likelihood over [log sigma_n, log sigma_p, eta]."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(1, -1)
    _, g = _loglik_batch(_stack([params]), X, y)
    parts = [g["log_sn"], g["log_sp"]] + [g[k][0].ravel() for k in _WEIGHT_KEYS]
    return np.concatenate(parts)


@dataclass(frozen=True)
class NeuralSurrogate:
    """Conditioned neural-feature GP.

    ``y`` holds the standardized targets; ``y_mean``/``y_std`` map predictions
    back to the original units.  With ``y_mean=0, y_std=1`` the surrogate is
    exactly the raw weight-space model.
    """

    params: NeuralParams
    X: np.ndarray
    y: np.ndarray
    y_mean: float = 0.0
    y_std: float = 1.0
    initial_log_likelihood: float | None = None
    log_likelihood: float | None = None
    features: np.ndarray = field(init=False, repr=False)
    chol: np.ndarray = field(init=False, repr=False)
    alpha: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        d = self.params.weights.input_dim
        X = np.asarray(self.X, dtype=float).reshape(-1, d)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if len(y) != len(X):
            raise ValueError("X and y lengths differ")
        F = forward_features(self.params.weights, X)
        M = self.params.n_features
        ridge = M * self.params.sigma_n**2 / self.params.sigma_p**2
        L = np.linalg.cholesky(F.T @ F + ridge * np.eye(M))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "features", F)
        object.__setattr__(self, "chol", L)
        object.__setattr__(self, "alpha", cho_solve((L, True), F.T @ y))

    @property
    def n_train(self) -> int:
        return len(self.y)

    def predict_standardized(self, Xq) -> tuple[np.ndarray, np.ndarray]:
        Fq = forward_features(self.params.weights, np.atleast_2d(Xq))
        mu = Fq @ self.alpha
        v = solve_triangular(self.chol, Fq.T, lower=True)
        sn2 = self.params.sigma_n**2
        return mu, sn2 * (1.0 + np.sum(v * v, axis=0))

    def predict(self, Xq) -> tuple[np.ndarray, np.ndarray]:
        """Mean and variance at each row of Xq, in original target units."""
        mu, var = self.predict_standardized(Xq)
        return self.y_mean + self.y_std * mu, self.y_std**2 * var

    def to_text(self) -> str:
        return dumps_surrogate(self)


def nn_predict(s: NeuralSurrogate, x) -> Prediction:
    mu, var = s.predict(np.asarray(x, dtype=float)[None, :])
    return Prediction(float(mu[0]), float(var[0]))


def nn_fit(X, y, config: NeuralConfig | None = None, seed: int = 0) -> NeuralSurrogate:
    return train_stack(X, np.asarray(y, dtype=float)[None, :], config or NeuralConfig(), [seed])[0]


# -- text serialization ---------------------------------------------------

_MAGIC = "nnbo-neural-surrogate 1"


def _fmt(a) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(a))


def dumps_surrogate(s: NeuralSurrogate) -> str:
    """Plain-text dump: scalars, then each array as a shape line plus a
    row-major value line."""
    lines = [
        _MAGIC,
        f"sigma_n {s.params.sigma_n!r}",
        f"sigma_p {s.params.sigma_p!r}",
        f"y_mean {s.y_mean!r}",
        f"y_std {s.y_std!r}",
    ]
    arrays = [(k, getattr(s.params.weights, k)) for k in _WEIGHT_KEYS]
    arrays += [("train_x", s.X), ("train_y", s.y)]
    for name, a in arrays:
        lines.append(f"{name} " + " ".join(str(n) for n in a.shape))
        lines.append(_fmt(a))
    return "\n".join(lines) + "\n"


def loads_surrogate(text: str) -> NeuralSurrogate:
    lines = text.splitlines()
    if not lines or lines[0].strip() != _MAGIC:
        raise ValueError("not a serialized neural surrogate")
    scalars = {}
    for ln in lines[1:5]:
        k, v = ln.split()
        scalars[k] = float(v)
    arrays = {}
    i = 5
    while i < len(lines):
        head = lines[i].split()
        if not head:
            i += 1
            continue
        name, shape = head[0], tuple(int(n) for n in head[1:])
        body = lines[i + 1].split() if i + 1 < len(lines) else []
        arrays[name] = np.array([float(v) for v in body]).reshape(shape)
        i += 2
    w = NetworkWeights(**{k: arrays[k] for k in _WEIGHT_KEYS})
    p = NeuralParams(scalars["sigma_n"], scalars["sigma_p"], w)
    return NeuralSurrogate(p, arrays["train_x"], arrays["train_y"], scalars["y_mean"], scalars["y_std"])

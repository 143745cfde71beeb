"""Expected improvement, feasibility probability and their weighted product.

Everything here minimizes; constraints are feasible when g(x) < 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
from scipy.special import erfcx, log_ndtr, ndtr
from scipy.stats import qmc

from .space import DesignSpace

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_SQRT_HALF_PI = math.sqrt(math.pi / 2.0)
_LOG_INV_SQRT_2PI = math.log(_INV_SQRT_2PI)


class Surrogate(Protocol):
    def predict(self, Xq) -> tuple[np.ndarray, np.ndarray]: ...


def _check_finite(*vals):
    for v in vals:
        if not np.all(np.isfinite(v)):
            raise ValueError("acquisition inputs must be finite")


def expected_improvement(mu, sigma, tau):
    """EI of a Gaussian N(mu, sigma^2) below tau. Scalars or arrays."""
    mu, sigma, tau = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (mu, sigma, tau)))
    _check_finite(mu, sigma, tau)
    if np.any(sigma < 0):
        raise ValueError("sigma must be nonnegative")
    pos = sigma > 0
    safe = np.where(pos, sigma, 1.0)
    lam = (tau - mu) / safe
    ei = safe * (lam * ndtr(lam) + _INV_SQRT_2PI * np.exp(-0.5 * lam * lam))
    ei = np.where(pos, np.maximum(ei, 0.0), np.maximum(tau - mu, 0.0))
    return float(ei) if ei.ndim == 0 else ei


def log_expected_improvement(mu, sigma, tau):
    """log EI, accurate far into the tail where EI underflows."""
    mu, sigma, tau = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (mu, sigma, tau)))
    out = np.full(mu.shape, -np.inf)
    pos = sigma > 0
    zero = ~pos & (tau > mu)
    out[zero] = np.log(tau[zero] - mu[zero])
    lam = (tau[pos] - mu[pos]) / sigma[pos]
    logh = np.empty_like(lam)
    mid = lam > -1.0
    lm = lam[mid]
    logh[mid] = np.log(lm * ndtr(lm) + _INV_SQRT_2PI * np.exp(-0.5 * lm * lm))
    lt = lam[~mid]
    # h(l) = pdf(l) * (1 + l * cdf(l)/pdf(l)), with cdf/pdf through erfcx
    logh[~mid] = _LOG_INV_SQRT_2PI - 0.5 * lt * lt + np.log1p(lt * _SQRT_HALF_PI * erfcx(-lt / math.sqrt(2.0)))
    out[pos] = np.log(sigma[pos]) + logh
    return out


def prob_feasible(mu, sigma):
    """P(g < 0) for g ~ N(mu, sigma^2)."""
    mu, sigma = np.broadcast_arrays(np.asarray(mu, dtype=float), np.asarray(sigma, dtype=float))
    _check_finite(mu, sigma)
    if np.any(sigma < 0):
        raise ValueError("sigma must be nonnegative")
    pos = sigma > 0
    pf = np.where(pos, ndtr(-mu / np.where(pos, sigma, 1.0)), (mu < 0).astype(float))
    return float(pf) if pf.ndim == 0 else pf


def log_prob_feasible(mu, sigma):
    mu, sigma = np.broadcast_arrays(np.asarray(mu, dtype=float), np.asarray(sigma, dtype=float))
    pos = sigma > 0
    return np.where(pos, log_ndtr(-mu / np.where(pos, sigma, 1.0)), np.where(mu < 0, 0.0, -np.inf))


@dataclass
class AcquisitionContext:
    """Incumbent plus fitted models. tau is None until something feasible is seen."""

    objective_model: Surrogate
    constraint_models: Sequence[Surrogate] = field(default_factory=list)
    tau: float | None = None

    def __post_init__(self):
        if self.tau is not None and not math.isfinite(self.tau):
            raise ValueError("tau must be finite")

    @property
    def feasible_seen(self) -> bool:
        return self.tau is not None


def acquisition_terms(ctx: AcquisitionContext, U) -> dict[str, np.ndarray]:
    """log wEI plus its pieces at each row of U (normalized designs)."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    mu, var = ctx.objective_model.predict(U)
    sigma = np.sqrt(np.maximum(var, 0.0))
    log_pf = np.zeros(len(U))
    for cm in ctx.constraint_models:
        cmu, cvar = cm.predict(U)
        log_pf = log_pf + log_prob_feasible(cmu, np.sqrt(np.maximum(cvar, 0.0)))
    if ctx.feasible_seen:
        log_w = log_expected_improvement(mu, sigma, ctx.tau) + log_pf
    else:
        log_w = log_pf.copy()
    return {"log_wei": log_w, "log_pf": log_pf, "sigma": sigma, "mu": mu}


def weighted_ei(ctx: AcquisitionContext, x) -> float:
    """wEI at one normalized design: EI * prod PF_i, or prod PF_i while no
    feasible observation exists."""
    return float(np.exp(acquisition_terms(ctx, np.asarray(x, dtype=float)[None, :])["log_wei"][0]))


@dataclass
class MaximizerConfig:
    pool: int | None = None  # default 2000 * d
    top: int = 10
    rounds: int = 20
    initial_step: float = 0.1
    local: int | None = None  # extra pool points around each anchor; default 20 * d
    local_scale: float = 0.05


@dataclass(frozen=True)
class Proposal:
    u: np.ndarray
    log_wei: float
    fallback: bool = False

    @property
    def wei(self) -> float:
        return float(np.exp(self.log_wei))


def _argmax(values: np.ndarray) -> int:
    # np.argmax already returns the lowest index among ties
    return int(np.argmax(values))


def maximize_acquisition(
    ctx: AcquisitionContext,
    space: DesignSpace,
    budget: int | None = None,
    seed: int = 0,
    config: MaximizerConfig | None = None,
    anchors=None,
) -> Proposal:
    """Quasi-random pool of ``budget`` points (default 2000 * d), then bounded
    coordinate pattern search on the best ``top`` pool points.

    ``anchors`` (e.g. the incumbent) add themselves plus ``config.local``
    Gaussian perturbations each (default 20 * d) to the pool.

    Works on log wEI throughout; the returned point lies in the unit cube.
    """
    cfg = config or MaximizerConfig()
    dim = space.dim
    if budget is None:
        budget = cfg.pool if cfg.pool is not None else 2000 * dim
    if budget < 1:
        raise ValueError("acquisition budget must be >= 1")
    pool = qmc.Halton(d=dim, scramble=True, seed=seed).random(budget)
    if anchors is not None and len(anchors):
        A = np.atleast_2d(np.asarray(anchors, dtype=float))
        rng = np.random.default_rng(seed)
        n_local = cfg.local if cfg.local is not None else 20 * dim
        near = A[:, None, :] + cfg.local_scale * rng.standard_normal((len(A), n_local, dim))
        pool = np.vstack([pool, A, np.clip(near.reshape(-1, dim), 0.0, 1.0)])
        budget = len(pool)
    terms = acquisition_terms(ctx, pool)
    vals = terms["log_wei"]

    if not np.any(np.isfinite(vals)):
        # nothing scores above zero: most-feasible point, ties to widest objective spread
        order = np.lexsort((-terms["sigma"], -terms["log_pf"]))
        i = int(order[0])
        return Proposal(pool[i].copy(), float(vals[i]), fallback=True)

    n_top = min(cfg.top, budget)
    top = np.argsort(-vals, kind="stable")[:n_top]
    X = pool[top].copy()
    best = vals[top].copy()
    step = np.full(n_top, cfg.initial_step)
    eye = np.eye(dim)
    for _ in range(cfg.rounds):
        # (n_top, 2d, dim) neighbours
        moves = np.concatenate([eye, -eye])[None, :, :] * step[:, None, None]
        cand = np.clip(X[:, None, :] + moves, 0.0, 1.0)
        cv = acquisition_terms(ctx, cand.reshape(-1, dim))["log_wei"].reshape(n_top, 2 * dim)
        j = np.argmax(cv, axis=1)
        cbest = cv[np.arange(n_top), j]
        improved = cbest > best
        X[improved] = cand[improved, j[improved]]
        best[improved] = cbest[improved]
        step[~improved] *= 0.5
    i = _argmax(best)
    return Proposal(X[i].copy(), float(best[i]))

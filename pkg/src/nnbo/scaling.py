"""Wall-time of one likelihood+gradient evaluation versus training-set size."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .gp import KernelHyperparams, gp_log_likelihood_and_grad
from .neural import NeuralConfig, init_params, nn_likelihood_grad
from .space import lhs_unit


@dataclass(frozen=True)
class Timing:
    model: str
    n: int
    seconds: float


def _best_time(fn: Callable[[], object], repeats: int, min_time: float) -> float:
    """Smallest mean time over ``repeats`` batches, each lasting >= min_time."""
    fn()
    loops = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(loops):
            fn()
        if time.perf_counter() - t0 >= min_time:
            break
        loops *= 2
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(loops):
            fn()
        best = min(best, (time.perf_counter() - t0) / loops)
    return best


def bench_scaling(
    sizes: Sequence[int],
    evaluate: Callable[[np.ndarray], float],
    dim: int,
    config: NeuralConfig | None = None,
    include_gp: bool = True,
    repeats: int = 5,
    min_time: float = 0.05,
    seed: int = 0,
) -> list[Timing]:
    """Time neural-feature (fixed M) and classic GP likelihood+gradient at each N.

    ``evaluate`` maps a unit-cube design to a scalar target; inputs are LHS.
    """
    cfg = config or NeuralConfig()
    rng = np.random.default_rng(seed)
    params = init_params(dim, cfg, rng)
    hyp = KernelHyperparams(1.0, np.full(dim, 0.5), 0.1).to_vector()
    out = []
    for n in sizes:
        X = lhs_unit(int(n), dim, seed)
        y = np.array([evaluate(x) for x in X])
        y = (y - y.mean()) / (y.std() or 1.0)

        # one pass evaluates the likelihood and backpropagates its gradient
        out.append(Timing("neural", int(n), _best_time(lambda: nn_likelihood_grad(params, X, y), repeats, min_time)))
        if include_gp:
            out.append(Timing("gp", int(n), _best_time(lambda: gp_log_likelihood_and_grad(hyp, X, y), repeats, min_time)))
    return out


def doubling_ratios(timings: Sequence[Timing], model: str) -> dict[int, float]:
    """t(N) / t(N/2) keyed by N, for sizes whose half was also timed."""
    t = {r.n: r.seconds for r in timings if r.model == model}
    return {n: t[n] / t[n // 2] for n in sorted(t) if n % 2 == 0 and n // 2 in t}

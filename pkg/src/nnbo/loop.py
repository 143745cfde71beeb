"""Constrained single-objective BO campaign.

Initial Latin hypercube, then per iteration: fit one surrogate per metric
(objective and each constraint, independently), maximize weighted EI,
evaluate exactly one design, append it.  Stops when the evaluation budget
is spent.

Seed derivation: every random stream starts from ``seed ^ TAG`` for a fixed
per-purpose tag, expanded with the iteration index through a SeedSequence;
ensemble member k then uses ``base ^ k``.  No global RNG is touched.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .acquisition import AcquisitionContext, MaximizerConfig, maximize_acquisition
from .ensemble import DEFAULT_K, EnsembleModel, fit_ensembles
from .evaluators import Constraint, EvaluationError, EvaluatorFatal, Objective, Problem
from .gp import gp_fit
from .neural import NeuralConfig, NeuralSurrogate
from .space import DesignSpace, denormalize, lhs_unit

log = logging.getLogger(__name__)

SEED_TAGS = {"init": 0x1A17, "continue": 0xC047, "model": 0x30DE, "acq": 0xAC90, "random": 0x5EED}
STRATEGIES = ("neural", "gp", "random")


def derive_seed(seed: int, tag: str, i: int = 0) -> int:
    ss = np.random.SeedSequence([(int(seed) ^ SEED_TAGS[tag]) & 0xFFFFFFFFFFFFFFFF, int(i)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass
class CampaignConfig:
    n_init: int = 30
    max_evals: int = 100
    K: int = DEFAULT_K
    model: NeuralConfig = field(default_factory=NeuralConfig)
    acquisition: MaximizerConfig = field(default_factory=MaximizerConfig)
    seed: int = 0
    strategy: str = "neural"
    refit_every: int = 1  # >1: between refits, recondition fitted members on new data

    def __post_init__(self):
        if self.n_init < 2:
            raise ValueError("n_init must be >= 2")
        if self.max_evals < self.n_init:
            raise ValueError("max_evals must be >= n_init")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.refit_every < 1:
            raise ValueError("refit_every must be >= 1")


@dataclass
class Dataset:
    """Append-only record of evaluated designs.

    ``objective`` is in minimization form and ``constraints`` holds g values
    (feasible when < 0); failed rows carry NaN there.
    """

    space: DesignSpace
    n_constraints: int
    U: list[np.ndarray] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    constraints: list[np.ndarray] = field(default_factory=list)
    failed: list[bool] = field(default_factory=list)

    def __len__(self):
        return len(self.U)

    def append(self, u, objective: float, g) -> None:
        g = np.asarray(g, dtype=float).reshape(self.n_constraints)
        if not (math.isfinite(objective) and np.all(np.isfinite(g))):
            raise ValueError("non-failed rows must be finite")
        self.U.append(np.array(u, dtype=float))
        self.objective.append(float(objective))
        self.constraints.append(g)
        self.failed.append(False)

    def append_failure(self, u) -> None:
        self.U.append(np.array(u, dtype=float))
        self.objective.append(math.nan)
        self.constraints.append(np.full(self.n_constraints, math.nan))
        self.failed.append(True)

    def arrays(self):
        d = self.space.dim
        n = len(self.U)
        U = np.array(self.U, dtype=float).reshape(n, d)
        f = np.array(self.objective, dtype=float)
        G = np.array(self.constraints, dtype=float).reshape(n, self.n_constraints)
        return U, f, G, np.array(self.failed, dtype=bool)

    def feasible_mask(self) -> np.ndarray:
        _, f, G, failed = self.arrays()
        with np.errstate(invalid="ignore"):
            return ~failed & np.all(G < 0, axis=1)


def current_tau(d: Dataset) -> float | None:
    """Best (minimum) objective among feasible, non-failed rows."""
    mask = d.feasible_mask()
    if not np.any(mask):
        return None
    return float(np.min(np.array(d.objective)[mask]))


def record_failure(d: Dataset, u, reason: str) -> Dataset:
    log.info("evaluation failed (%s); row kept but excluded from models", reason)
    d.append_failure(u)
    return d


@dataclass(frozen=True)
class LogEntry:
    evaluation: int
    iteration: int
    design: np.ndarray  # physical units
    metrics: dict[str, float] | None
    objective: float  # in the user's direction; NaN on failure
    feasible: bool
    failed: bool
    failure_reason: str
    wei: float  # NaN for initial / non-acquisition proposals
    timestamp: float


@dataclass
class CampaignResult:
    problem: str
    variable_names: tuple[str, ...]
    metric_names: tuple[str, ...]
    objective: Objective
    log: list[LogEntry] = field(default_factory=list)
    best_trace: list[float | None] = field(default_factory=list)
    termination: str = ""

    def best(self) -> LogEntry | None:
        feas = [e for e in self.log if e.feasible]
        if not feas:
            return None
        key = (lambda e: e.objective) if self.objective.direction == "min" else (lambda e: -e.objective)
        return min(feas, key=key)

    def evals_to_feasible(self) -> int | None:
        for e in self.log:
            if e.feasible:
                return e.evaluation
        return None


class Campaign:
    """Mutable state of one run; ``run_campaign`` drives it to completion."""

    def __init__(self, problem: Problem, cfg: CampaignConfig, on_entry: Callable[[LogEntry], None] | None = None,
                 objective: Objective | None = None, constraints: Sequence[Constraint] | None = None):
        self.problem = problem
        self.cfg = cfg
        self.space = problem.space
        self.objective = objective or problem.objective
        self.constraints = tuple(problem.constraints if constraints is None else constraints)
        for m in [self.objective.metric] + [c.metric for c in self.constraints]:
            if m not in problem.metric_names:
                raise ValueError(f"metric {m!r} is not produced by the evaluator")
        self.data = Dataset(self.space, len(self.constraints))
        self.result = CampaignResult(problem.name, self.space.names, problem.metric_names, self.objective)
        self.on_entry = on_entry
        self._models: list | None = None
        self._fit_iteration = -1
        self._continuation = None
        self._continuation_used = 0
        self._random_rng = np.random.default_rng(derive_seed(cfg.seed, "random"))

    # -- evaluation -------------------------------------------------------

    def _evaluate(self, u: np.ndarray, iteration: int, wei: float) -> None:
        x = denormalize(self.space, u)
        reason = ""
        metrics = None
        try:
            raw = self.problem.evaluate(x)
            metrics = {k: float(raw[k]) for k in self.problem.metric_names}
            if not all(math.isfinite(v) for v in metrics.values()):
                raise EvaluationError("non-finite", "evaluator returned NaN/inf")
        except EvaluationError as exc:
            if exc.reason == "spawn":
                raise EvaluatorFatal(str(exc)) from exc
            reason = exc.reason
        except EvaluatorFatal:
            raise
        except Exception as exc:  # builtin evaluators raising count as failures
            reason = "exception"
            log.warning("evaluator raised %r", exc)

        if reason:
            record_failure(self.data, u, reason)
            obj, feasible = math.nan, False
        else:
            f = self.objective.to_minimize(metrics[self.objective.metric])
            g = [c.g(metrics[c.metric]) for c in self.constraints]
            self.data.append(u, f, g)
            obj = metrics[self.objective.metric]
            feasible = all(v < 0 for v in g)
        entry = LogEntry(
            evaluation=len(self.data), iteration=iteration, design=x, metrics=metrics,
            objective=obj, feasible=feasible, failed=bool(reason), failure_reason=reason,
            wei=wei, timestamp=time.time(),
        )
        self.result.log.append(entry)
        tau = current_tau(self.data)
        self.result.best_trace.append(None if tau is None else self.objective.from_minimize(tau))
        if self.on_entry is not None:
            self.on_entry(entry)

    # -- proposals --------------------------------------------------------

    def _next_continuation(self) -> np.ndarray:
        if self._continuation is None:
            n = max(1, self.cfg.max_evals - self.cfg.n_init)
            self._continuation = lhs_unit(n, self.space.dim, derive_seed(self.cfg.seed, "continue"))
        u = self._continuation[self._continuation_used % len(self._continuation)]
        self._continuation_used += 1
        return u

    def _fit_models(self, iteration: int, U, targets: np.ndarray) -> list:
        cfg = self.cfg
        if cfg.strategy == "gp":
            seeds = [derive_seed(cfg.seed, "model", iteration * 64 + j) for j in range(len(targets))]
            return [gp_fit(U, t, seed=s) for t, s in zip(targets, seeds)]
        due = self._models is None or (iteration - self._fit_iteration) >= cfg.refit_every
        if not due:
            return [_recondition(e, U, t) for e, t in zip(self._models, targets)]
        seeds = [derive_seed(cfg.seed, "model", iteration * 64 + j) for j in range(len(targets))]
        models = fit_ensembles(U, targets, cfg.K, cfg.model, seeds)
        self._fit_iteration = iteration
        return models

    def propose(self, iteration: int) -> tuple[np.ndarray, float]:
        cfg = self.cfg
        if cfg.strategy == "random":
            return self._random_rng.random(self.space.dim), math.nan
        U, f, G, failed = self.data.arrays()
        ok = ~failed
        if not np.any(ok):
            return self._next_continuation(), math.nan
        targets = np.vstack([f[ok][None, :], G[ok].T])
        models = self._fit_models(iteration, U[ok], targets)
        self._models = models if cfg.strategy == "neural" else None
        ctx = AcquisitionContext(models[0], models[1:], current_tau(self.data))
        anchors = None
        if ctx.feasible_seen and cfg.acquisition.local != 0:
            feas = np.flatnonzero(self.data.feasible_mask())
            anchors = U[feas[np.argmin(f[feas])]][None, :]
        prop = maximize_acquisition(
            ctx, self.space, seed=derive_seed(cfg.seed, "acq", iteration), config=cfg.acquisition, anchors=anchors
        )
        return np.clip(prop.u, 0.0, 1.0), prop.wei

    # -- driver -----------------------------------------------------------

    def run(self) -> CampaignResult:
        cfg = self.cfg
        init = lhs_unit(cfg.n_init, self.space.dim, derive_seed(cfg.seed, "init"))
        for u in init:
            self._evaluate(u, 0, math.nan)
        iteration = 0
        while len(self.data) < cfg.max_evals:
            iteration += 1
            u, wei = self.propose(iteration)
            self._evaluate(u, iteration, wei)
        self.result.termination = "budget exhausted"
        return self.result


def _recondition(e: EnsembleModel, U, y) -> EnsembleModel:
    """Same trained members, conditioned on the grown dataset."""
    members = []
    for m in e.members:
        ys = (np.asarray(y, dtype=float) - m.y_mean) / m.y_std
        members.append(NeuralSurrogate(m.params, U, ys, m.y_mean, m.y_std))
    return EnsembleModel(members)


def run_campaign(problem: Problem, cfg: CampaignConfig, on_entry=None, objective=None, constraints=None) -> CampaignResult:
    return Campaign(problem, cfg, on_entry, objective, constraints).run()


def final_best(result: CampaignResult) -> float | None:
    b = result.best()
    return None if b is None else b.objective

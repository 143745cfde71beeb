"""Black-box evaluation: problem declarations, the child-process protocol,
and PVT-corner aggregation of device currents.

Child-process wire format (one evaluation per process):

* stdin: one line, the design in physical units, declared variable order,
  ``,``-separated, shortest round-trip float repr, ``\\n`` terminated, UTF-8.
* stdout: one line, the metric values in declared metric order, same format.

A nonzero exit status, a timeout, a malformed line or the wrong number of
values each fail with a distinct reason.
"""

from __future__ import annotations

import math
import os
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .space import DesignSpace

FAILURE_REASONS = ("timeout", "exit-status", "parse", "arity", "spawn", "non-finite", "exception")


class EvaluationError(RuntimeError):
    """A single evaluation failed; the campaign records it and continues."""

    def __init__(self, reason: str, detail: str = ""):
        if reason not in FAILURE_REASONS:
            raise ValueError(f"unknown failure reason {reason!r}")
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail


class EvaluatorFatal(RuntimeError):
    """The evaluator cannot run at all (e.g. missing executable)."""


@dataclass(frozen=True)
class Objective:
    metric: str
    direction: str = "min"

    def __post_init__(self):
        if self.direction not in ("min", "max"):
            raise ValueError(f"objective direction must be 'min' or 'max', got {self.direction!r}")

    def to_minimize(self, value: float) -> float:
        return value if self.direction == "min" else -value

    def from_minimize(self, value: float) -> float:
        return self.to_minimize(value)


@dataclass(frozen=True)
class Constraint:
    """``metric op bound`` with op ``<`` or ``>``; feasible when g < 0."""

    metric: str
    op: str
    bound: float

    def __post_init__(self):
        if self.op not in ("<", ">"):
            raise ValueError(f"constraint operator must be '<' or '>', got {self.op!r}")

    def g(self, value: float) -> float:
        return value - self.bound if self.op == "<" else self.bound - value


@dataclass
class Problem:
    """A design space plus a metric-producing evaluator and default goals."""

    name: str
    space: DesignSpace
    metric_names: tuple[str, ...]
    evaluate: Callable[[np.ndarray], Mapping[str, float]]
    objective: Objective
    constraints: tuple[Constraint, ...] = ()
    reference_design: np.ndarray | None = None
    reference_objective: float | None = None
    description: str = ""

    def __post_init__(self):
        self.metric_names = tuple(self.metric_names)
        self.constraints = tuple(self.constraints)
        if len(set(self.metric_names)) != len(self.metric_names):
            raise ValueError("metric names must be unique")
        for m in [self.objective.metric] + [c.metric for c in self.constraints]:
            if m not in self.metric_names:
                raise ValueError(f"metric {m!r} is not produced by the evaluator")

    def is_feasible(self, metrics: Mapping[str, float]) -> bool:
        return all(c.g(metrics[c.metric]) < 0 for c in self.constraints)


# -- external process -----------------------------------------------------

def format_values(values: Sequence[float]) -> str:
    return ",".join(repr(float(v)) for v in values) + "\n"


def parse_values(line: str, expected: int) -> list[float]:
    text = line.rstrip("\n")
    if text.endswith("\r"):
        text = text[:-1]
    parts = text.split(",") if text.strip() else []
    if len(parts) != expected:
        raise EvaluationError("arity", f"expected {expected} values, got {len(parts)}")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise EvaluationError("parse", str(exc)) from None


@dataclass
class EvaluatorBinding:
    """How to evaluate a design: a builtin problem name or an external command."""

    kind: str
    metric_names: tuple[str, ...]
    name: str | None = None
    command: tuple[str, ...] | None = None
    timeout: float = 600.0
    workdir: str | None = None
    env_passthrough: tuple[str, ...] = ()
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        self.metric_names = tuple(self.metric_names)
        if self.kind not in ("builtin", "external"):
            raise ValueError(f"evaluator kind must be 'builtin' or 'external', got {self.kind!r}")
        if len(set(self.metric_names)) != len(self.metric_names):
            raise ValueError("metric names must be unique")
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        if self.kind == "external" and not self.command:
            raise ValueError("external evaluator needs a command")
        if self.kind == "builtin" and not self.name:
            raise ValueError("builtin evaluator needs a name")
        if self.command is not None:
            self.command = tuple(self.command)


def evaluate_external(b: EvaluatorBinding, x) -> dict[str, float]:
    """Run the bound command once for design x (physical units)."""
    env = None
    if b.env_passthrough:
        env = {k: os.environ[k] for k in ("PATH",) + tuple(b.env_passthrough) if k in os.environ}
    with b._lock:
        try:
            proc = subprocess.run(
                list(b.command),
                input=format_values(np.asarray(x, dtype=float)).encode("utf-8"),
                capture_output=True,
                timeout=b.timeout,
                cwd=b.workdir,
                env=env,
            )
        except subprocess.TimeoutExpired:
            raise EvaluationError("timeout", f"no answer within {b.timeout} s") from None
        except OSError as exc:
            raise EvaluationError("spawn", str(exc)) from None
    if proc.returncode != 0:
        raise EvaluationError("exit-status", f"exit status {proc.returncode}")
    try:
        out = proc.stdout.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise EvaluationError("parse", str(exc)) from None
    lines = out.splitlines()
    if not lines:
        raise EvaluationError("parse", "no output line")
    vals = parse_values(lines[0], len(b.metric_names))
    return dict(zip(b.metric_names, vals))


# -- PVT corners ------------------------------------------------------------

@dataclass(frozen=True)
class CornerSpec:
    """Per-corner perturbations (process, supply, temperature) of a base model."""

    perturbations: np.ndarray  # (C, 3)
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.perturbations, dtype=float))
        if p.shape[0] < 1:
            raise ValueError("need at least one corner")
        object.__setattr__(self, "perturbations", p)

    @property
    def count(self) -> int:
        return self.perturbations.shape[0]


def default_corners() -> CornerSpec:
    """18 corners: process {ss, tt, ff} x supply {-10%, 0, +10%} x temp {-40, 125} C."""
    rows, labels = [], []
    for pname, p in (("ss", -1.0), ("tt", 0.0), ("ff", 1.0)):
        for vname, v in (("lv", -1.0), ("nv", 0.0), ("hv", 1.0)):
            for tname, t in (("cold", -1.0), ("hot", 1.0)):
                rows.append((p, v, t))
                labels.append(f"{pname}-{vname}-{tname}")
    return CornerSpec(np.array(rows), tuple(labels))


AGGREGATE_KEYS = ("diff1", "diff2", "diff3", "diff4", "diff", "deviation", "fom")


def corner_aggregate(per_corner, target: float = 40.0, weights: tuple[float, float] = (0.3, 0.5)) -> dict[str, float]:
    """Worst-case current mismatch metrics over corners.

    ``per_corner`` is (C, 6): I_M1 max/avg/min then I_M2 max/avg/min.
    fom = weights[0] * diff + weights[1] * deviation.
    """
    I = np.atleast_2d(np.asarray(per_corner, dtype=float))
    if I.shape[0] == 0 or I.shape[1] != 6:
        raise ValueError("per-corner matrix must be (C >= 1, 6)")
    if not np.all(np.isfinite(I)):
        raise ValueError("per-corner currents must be finite")
    d1 = float(np.max(I[:, 0] - I[:, 1]))
    d2 = float(np.max(I[:, 1] - I[:, 2]))
    d3 = float(np.max(I[:, 3] - I[:, 4]))
    d4 = float(np.max(I[:, 4] - I[:, 5]))
    diff = d1 + d2 + d3 + d4
    deviation = float(np.max(np.abs(I[:, 1] - target)) + np.max(np.abs(I[:, 4] - target)))
    fom = weights[0] * diff + weights[1] * deviation
    return dict(zip(AGGREGATE_KEYS, (d1, d2, d3, d4, diff, deviation, fom)))


def fom_from_components(diffs: Sequence[float], deviation: float, weights=(0.3, 0.5)) -> float:
    return weights[0] * math.fsum(diffs) + weights[1] * deviation

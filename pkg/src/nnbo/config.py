"""Campaign configuration files (YAML).

Layout, every block optional except ``evaluator``::

    problem: opamp-run            # label written to logs
    seed: 0
    strategy: neural              # neural | gp | random
    output: runs/opamp
    space:                        # required for external evaluators
      variables:
        - {name: w1, lower: 1.0, upper: 40.0}
    evaluator:
      kind: builtin               # builtin | external
      name: opamp_10d             # builtin only
      command: [python3, sim.py]  # external only
      metrics: [gain, ugf, pm]    # external only; builtins declare their own
      timeout: 600
      workdir: null
      env_passthrough: []
    objective: {metric: gain, direction: max}
    constraints:
      - {metric: ugf, op: ">", bound: 40}
    budget: {n_init: 30, max_evals: 100}
    model: {hidden1: 32, hidden2: 32, n_features: 16, K: 5, steps: 2000,
            learning_rate: 0.01, refit_every: 1}
    acquisition: {pool: null, top: 10, rounds: 20, initial_step: 0.1,
                  local: null, local_scale: 0.05}   # local: candidates around the incumbent (20 d)

Builtins supply default space, objective and constraints.  Overrides use
dotted paths (``budget.max_evals=30``); a bare leaf name is accepted when
it is unique (``max_evals=30``).  Values are parsed as YAML scalars.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import yaml

from .acquisition import MaximizerConfig
from .benchmarks import BUILTIN_EVALUATORS, get_problem
from .evaluators import Constraint, EvaluatorBinding, Objective, Problem, evaluate_external
from .loop import STRATEGIES, CampaignConfig
from .neural import NeuralConfig
from .space import DesignSpace


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


_SCALAR_SECTIONS = {
    "budget": {"n_init": 30, "max_evals": 100},
    "model": {
        "hidden1": 32, "hidden2": 32, "n_features": 16, "K": 5, "steps": 2000,
        "learning_rate": 1e-2, "refit_every": 1,
    },
    "acquisition": {"pool": None, "top": 10, "rounds": 20, "initial_step": 0.1, "local": None, "local_scale": 0.05},
}
_EVALUATOR_KEYS = {"kind", "name", "command", "metrics", "timeout", "workdir", "env_passthrough"}
_TOP_KEYS = {"problem", "seed", "strategy", "output", "space", "evaluator", "objective", "constraints"} | set(
    _SCALAR_SECTIONS
)
_TOP_SCALARS = ("problem", "seed", "strategy", "output")


@dataclass
class RunConfig:
    problem: str
    seed: int
    strategy: str
    output: str | None
    space: DesignSpace
    evaluator: EvaluatorBinding
    objective: Objective
    constraints: tuple[Constraint, ...]
    budget: dict[str, int]
    model: dict[str, Any]
    acquisition: dict[str, Any]
    raw: dict = field(default_factory=dict, repr=False)

    def campaign(self) -> CampaignConfig:
        m = self.model
        return CampaignConfig(
            n_init=self.budget["n_init"],
            max_evals=self.budget["max_evals"],
            K=m["K"],
            model=NeuralConfig(
                hidden1=m["hidden1"], hidden2=m["hidden2"], n_features=m["n_features"],
                steps=m["steps"], learning_rate=m["learning_rate"],
            ),
            acquisition=MaximizerConfig(**self.acquisition),
            seed=self.seed,
            strategy=self.strategy,
            refit_every=m["refit_every"],
        )

    def build_problem(self) -> Problem:
        b = self.evaluator
        if b.kind == "builtin":
            fn = BUILTIN_EVALUATORS[b.name]
        else:
            def fn(x, _b=b):
                return evaluate_external(_b, x)
        return Problem(
            self.problem, self.space, b.metric_names, fn, self.objective, self.constraints,
        )

    def to_dict(self) -> dict:
        """Fully explicit form; parse_config(to_dict()) reproduces this object."""
        b = self.evaluator
        ev = {"kind": b.kind, "timeout": b.timeout, "workdir": b.workdir,
              "env_passthrough": list(b.env_passthrough)}
        if b.kind == "builtin":
            ev["name"] = b.name
        else:
            ev["command"] = list(b.command)
            ev["metrics"] = list(b.metric_names)
        return {
            "problem": self.problem,
            "seed": self.seed,
            "strategy": self.strategy,
            "output": self.output,
            "space": {"variables": [
                {"name": n, "lower": float(lo), "upper": float(hi)}
                for n, lo, hi in zip(self.space.names, self.space.lower, self.space.upper)
            ]},
            "evaluator": ev,
            "objective": {"metric": self.objective.metric, "direction": self.objective.direction},
            "constraints": [{"metric": c.metric, "op": c.op, "bound": float(c.bound)} for c in self.constraints],
            "budget": dict(self.budget),
            "model": dict(self.model),
            "acquisition": dict(self.acquisition),
        }

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.to_dict() == other.to_dict()


# -- overrides ----------------------------------------------------------------

def _leaf_paths() -> dict[str, list[str]]:
    paths: dict[str, list[str]] = {}
    for k in _TOP_SCALARS:
        paths.setdefault(k, []).append(k)
    for sec, keys in _SCALAR_SECTIONS.items():
        for k in keys:
            paths.setdefault(k, []).append(f"{sec}.{k}")
    for k in _EVALUATOR_KEYS:
        paths.setdefault(k, []).append(f"evaluator.{k}")
    for k in ("metric", "direction"):
        paths.setdefault(k, []).append(f"objective.{k}")
    return paths


def apply_overrides(raw: dict, overrides: Sequence[str]) -> dict:
    out = copy.deepcopy(raw)
    leaves = _leaf_paths()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        key, text = item.split("=", 1)
        key = key.strip()
        if "." not in key:
            cands = leaves.get(key, [])
            if len(cands) != 1:
                raise ConfigError(key, "unknown or ambiguous override key")
            key = cands[0]
        try:
            value = yaml.safe_load(text) if text.strip() else None
        except yaml.YAMLError as exc:
            raise ConfigError(key, f"cannot parse value {text!r}: {exc}") from None
        parts = key.split(".")
        node = out
        for p in parts[:-1]:
            if not isinstance(node.get(p, {}), dict):
                raise ConfigError(key, "override path goes through a non-mapping")
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return out


# -- parsing ------------------------------------------------------------------

def _expect_mapping(v, key) -> dict:
    if v is None:
        return {}
    if not isinstance(v, dict):
        raise ConfigError(key, "expected a mapping")
    return v


def _reject_unknown(d: dict, allowed, prefix: str):
    for k in d:
        if k not in allowed:
            raise ConfigError(f"{prefix}{k}", "unknown key")


def _typed(value, kind, key, allow_none=False):
    if value is None:
        if allow_none:
            return None
        raise ConfigError(key, "value required")
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return int(value)
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value
    raise AssertionError(kind)


_SECTION_TYPES = {
    "budget": {"n_init": int, "max_evals": int},
    "model": {"hidden1": int, "hidden2": int, "n_features": int, "K": int, "steps": int,
              "learning_rate": float, "refit_every": int},
    "acquisition": {"pool": int, "top": int, "rounds": int, "initial_step": float, "local": int,
                    "local_scale": float},
}


def _parse_space(raw, key="space") -> DesignSpace:
    raw = _expect_mapping(raw, key)
    _reject_unknown(raw, {"variables"}, f"{key}.")
    vars_ = raw.get("variables")
    if not isinstance(vars_, list) or not vars_:
        raise ConfigError(f"{key}.variables", "expected a nonempty list")
    names, lo, hi = [], [], []
    for i, v in enumerate(vars_):
        k = f"{key}.variables[{i}]"
        v = _expect_mapping(v, k)
        _reject_unknown(v, {"name", "lower", "upper"}, f"{k}.")
        names.append(_typed(v.get("name"), str, f"{k}.name"))
        lo.append(_typed(v.get("lower"), float, f"{k}.lower"))
        hi.append(_typed(v.get("upper"), float, f"{k}.upper"))
    try:
        return DesignSpace(tuple(names), np.array(lo), np.array(hi))
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def parse_config(raw: dict) -> RunConfig:
    """Validate a raw mapping (as loaded from YAML) into a RunConfig."""
    raw = _expect_mapping(raw, "<root>")
    _reject_unknown(raw, _TOP_KEYS, "")

    ev = _expect_mapping(raw.get("evaluator"), "evaluator")
    if not ev:
        raise ConfigError("evaluator", "an evaluator block is required")
    _reject_unknown(ev, _EVALUATOR_KEYS, "evaluator.")
    kind = _typed(ev.get("kind", "builtin"), str, "evaluator.kind")
    timeout = _typed(ev.get("timeout", 600.0), float, "evaluator.timeout")
    workdir = _typed(ev.get("workdir"), str, "evaluator.workdir", allow_none=True)
    passthrough = ev.get("env_passthrough") or []
    if not isinstance(passthrough, list) or not all(isinstance(s, str) for s in passthrough):
        raise ConfigError("evaluator.env_passthrough", "expected a list of variable names")
    builtin = None
    if kind == "builtin":
        name = _typed(ev.get("name"), str, "evaluator.name")
        if name not in BUILTIN_EVALUATORS:
            raise ConfigError("evaluator.name", f"unknown builtin {name!r}")
        for k in ("command", "metrics"):
            if ev.get(k) is not None:
                raise ConfigError(f"evaluator.{k}", "not allowed for builtin evaluators")
        builtin = get_problem(name)
        metrics = builtin.metric_names
        binding_kw = {"name": name}
    elif kind == "external":
        cmd = ev.get("command")
        if isinstance(cmd, str):
            cmd = [cmd]
        if not isinstance(cmd, list) or not cmd or not all(isinstance(c, str) for c in cmd):
            raise ConfigError("evaluator.command", "expected a nonempty list of strings")
        metrics = ev.get("metrics")
        if not isinstance(metrics, list) or not metrics or not all(isinstance(m, str) for m in metrics):
            raise ConfigError("evaluator.metrics", "expected a nonempty list of metric names")
        if ev.get("name") is not None:
            raise ConfigError("evaluator.name", "not allowed for external evaluators")
        binding_kw = {"command": tuple(cmd)}
    else:
        raise ConfigError("evaluator.kind", f"expected 'builtin' or 'external', got {kind!r}")
    try:
        binding = EvaluatorBinding(kind, tuple(metrics), timeout=timeout, workdir=workdir,
                                   env_passthrough=tuple(passthrough), **binding_kw)
    except ValueError as exc:
        raise ConfigError("evaluator", str(exc)) from None

    if raw.get("space") is not None:
        space = _parse_space(raw["space"])
    elif builtin is not None:
        space = builtin.space
    else:
        raise ConfigError("space", "required for external evaluators")

    if raw.get("objective") is not None:
        ob = _expect_mapping(raw["objective"], "objective")
        _reject_unknown(ob, {"metric", "direction"}, "objective.")
        direction = _typed(ob.get("direction", "min"), str, "objective.direction")
        if direction not in ("min", "max"):
            raise ConfigError("objective.direction", f"expected 'min' or 'max', got {direction!r}")
        objective = Objective(_typed(ob.get("metric"), str, "objective.metric"), direction)
    elif builtin is not None:
        objective = builtin.objective
    else:
        raise ConfigError("objective", "required for external evaluators")
    if objective.metric not in metrics:
        raise ConfigError("objective.metric", f"metric {objective.metric!r} is not declared by the evaluator")

    if "constraints" in raw:
        cl = raw["constraints"] or []
        if not isinstance(cl, list):
            raise ConfigError("constraints", "expected a list")
        constraints = []
        for i, c in enumerate(cl):
            k = f"constraints[{i}]"
            c = _expect_mapping(c, k)
            _reject_unknown(c, {"metric", "op", "bound"}, f"{k}.")
            metric = _typed(c.get("metric"), str, f"{k}.metric")
            if metric not in metrics:
                raise ConfigError(f"{k}.metric", f"metric {metric!r} is not declared by the evaluator")
            op = _typed(c.get("op"), str, f"{k}.op")
            if op not in ("<", ">"):
                raise ConfigError(f"{k}.op", f"expected '<' or '>', got {op!r}")
            constraints.append(Constraint(metric, op, _typed(c.get("bound"), float, f"{k}.bound")))
        constraints = tuple(constraints)
    elif builtin is not None:
        constraints = builtin.constraints
    else:
        constraints = ()

    sections = {}
    for sec, defaults in _SCALAR_SECTIONS.items():
        given = _expect_mapping(raw.get(sec), sec)
        _reject_unknown(given, defaults, f"{sec}.")
        vals = {}
        for k, default in defaults.items():
            v = given.get(k, default)
            vals[k] = _typed(v, _SECTION_TYPES[sec][k], f"{sec}.{k}", allow_none=default is None)
        sections[sec] = vals

    seed = _typed(raw.get("seed", 0), int, "seed")
    strategy = _typed(raw.get("strategy", "neural"), str, "strategy")
    if strategy not in STRATEGIES:
        raise ConfigError("strategy", f"expected one of {STRATEGIES}, got {strategy!r}")
    problem = _typed(raw.get("problem", binding.name or "external"), str, "problem")
    output = _typed(raw.get("output"), str, "output", allow_none=True)

    cfg = RunConfig(problem, seed, strategy, output, space, binding, objective, constraints,
                    sections["budget"], sections["model"], sections["acquisition"], raw=raw)
    _check_campaign(cfg)
    return cfg


def _check_campaign(cfg: RunConfig) -> None:
    b = cfg.budget
    if b["n_init"] < 2:
        raise ConfigError("budget.n_init", "must be >= 2")
    if b["max_evals"] < b["n_init"]:
        raise ConfigError("budget.max_evals", "must be >= budget.n_init")
    positive = {"model": ("hidden1", "hidden2", "K", "steps", "refit_every"), "acquisition": ("top", "rounds")}
    for sec, keys in positive.items():
        for k in keys:
            if getattr(cfg, sec)[k] < 1:
                raise ConfigError(f"{sec}.{k}", "must be >= 1")
    if cfg.model["n_features"] < 2:
        raise ConfigError("model.n_features", "must be >= 2 (one learned feature plus the constant)")
    if not cfg.model["learning_rate"] > 0:
        raise ConfigError("model.learning_rate", "must be positive")
    pool = cfg.acquisition["pool"]
    if pool is not None and pool < 1:
        raise ConfigError("acquisition.pool", "must be >= 1")
    for k in ("initial_step", "local_scale"):
        if not cfg.acquisition[k] > 0:
            raise ConfigError(f"acquisition.{k}", "must be positive")
    if cfg.acquisition["local"] is not None and cfg.acquisition["local"] < 0:
        raise ConfigError("acquisition.local", "must be >= 0")


def loads_config(text: str, overrides: Sequence[str] = ()) -> RunConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML: {exc}") from None
    return parse_config(apply_overrides(raw or {}, overrides))


def load_config(path, overrides: Sequence[str] = ()) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return loads_config(fh.read(), overrides)

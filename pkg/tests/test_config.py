import sys

import pytest
import yaml

from nnbo.config import ConfigError, apply_overrides, loads_config, parse_config

BUILTIN = """
problem: amp
seed: 3
evaluator: {kind: builtin, name: opamp_10d}
budget: {n_init: 30, max_evals: 100}
model: {steps: 300}
"""

EXTERNAL = f"""
evaluator:
  kind: external
  command: [{sys.executable}, sim.py]
  metrics: [f, g]
space:
  variables:
    - {{name: a, lower: 0, upper: 1}}
    - {{name: b, lower: -2, upper: 2}}
objective: {{metric: f}}
constraints:
  - {{metric: g, op: "<", bound: 0.5}}
"""


def test_builtin_defaults_and_campaign():
    c = loads_config(BUILTIN)
    assert c.space.dim == 10 and c.objective.direction == "max"
    assert [k.metric for k in c.constraints] == ["ugf", "pm"]
    camp = c.campaign()
    assert camp.seed == 3 and camp.model.steps == 300 and camp.n_init == 30
    assert c.build_problem().evaluate(c.space.lower)["gain"] is not None


@pytest.mark.parametrize("text", [BUILTIN, EXTERNAL])
def test_round_trip(text):
    c = loads_config(text)
    again = loads_config(c.dumps())
    assert again == c
    assert again.dumps() == c.dumps()
    assert parse_config(yaml.safe_load(c.dumps())) == c


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as info:
        loads_config(BUILTIN + "bogus: 1\n")
    assert info.value.key == "bogus"
    with pytest.raises(ConfigError) as info:
        loads_config(BUILTIN.replace("steps: 300", "stepz: 300"))
    assert info.value.key == "model.stepz"


def test_undeclared_metric_names_key():
    with pytest.raises(ConfigError) as info:
        loads_config(EXTERNAL.replace("metric: g,", "metric: h,"))
    assert info.value.key == "constraints[0].metric"
    with pytest.raises(ConfigError) as info:
        loads_config(EXTERNAL.replace("objective: {metric: f}", "objective: {metric: q}"))
    assert info.value.key == "objective.metric"


def test_overrides():
    c = loads_config(BUILTIN, ["budget.max_evals=40", "steps=50", "seed=9", "acquisition.pool=null"])
    assert c.budget["max_evals"] == 40 and c.model["steps"] == 50 and c.seed == 9
    assert c.acquisition["pool"] is None
    with pytest.raises(ConfigError):
        loads_config(BUILTIN, ["nonsense=1"])
    with pytest.raises(ConfigError):
        loads_config(BUILTIN, ["max_evals"])
    raw = {"budget": {"n_init": 5}}
    assert apply_overrides(raw, ["n_init=6"]) == {"budget": {"n_init": 6}}
    assert raw == {"budget": {"n_init": 5}}


@pytest.mark.parametrize(
    "patch, key",
    [
        (["budget.max_evals=10"], "budget.max_evals"),
        (["model.K=0"], "model.K"),
        (["strategy=annealing"], "strategy"),
        (["model.learning_rate=abc"], "model.learning_rate"),
        (["evaluator.name=nope"], "evaluator.name"),
        (["acquisition.local=-1"], "acquisition.local"),
    ],
)
def test_invalid_values_name_their_key(patch, key):
    with pytest.raises(ConfigError) as info:
        loads_config(BUILTIN, patch)
    assert info.value.key == key


def test_external_requires_space():
    text = EXTERNAL.split("space:")[0] + "objective: {metric: f}\n"
    with pytest.raises(ConfigError) as info:
        loads_config(text)
    assert info.value.key == "space"

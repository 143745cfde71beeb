import itertools

import numpy as np
import pytest
from scipy.stats import qmc

from nnbo.benchmarks import (
    BUILTIN_NAMES,
    builtin_constrained_suite,
    builtin_opamp_surrogate,
    charge_pump_36d,
    charge_pump_corners,
    get_problem,
)
from nnbo.evaluators import corner_aggregate
from nnbo.space import denormalize

# Frozen outputs of scripts/certify_fixtures.py (Sobol sweep + SLSQP).
CERTIFIED = {
    "quadratic_1d": 0.0,
    "gramacy_2d": 0.5997880528666334,
    "ring_5d": 0.22673403298269018,
    "opamp_10d": 87.5261034821946,
}


def test_suite_composition():
    suite = builtin_constrained_suite()
    dims = sorted(p.space.dim for p in suite)
    assert dims[0] == 2 and 10 in dims and dims[-1] == 36
    assert all(p.constraints for p in suite)


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_reference_design_feasible_and_matches(name):
    p = get_problem(name)
    assert p.reference_design is not None
    m = p.evaluate(p.reference_design)
    assert p.is_feasible(m)
    assert m[p.objective.metric] == p.reference_objective
    if name in CERTIFIED:
        assert p.reference_objective == pytest.approx(CERTIFIED[name], abs=1e-9)


@pytest.mark.parametrize("name", list(CERTIFIED))
def test_reference_not_beaten_by_sweep(name):
    # independent check: no feasible point of a fresh quasi-random sweep is better
    p = get_problem(name)
    U = qmc.Sobol(p.space.dim, scramble=True, seed=123).random(2**13)
    best = p.reference_objective
    for u in U:
        m = p.evaluate(denormalize(p.space, u))
        if p.is_feasible(m):
            assert p.objective.to_minimize(m[p.objective.metric]) >= p.objective.to_minimize(best) - 1e-9


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_bound_corners_finite_and_pure(name):
    p = get_problem(name)
    d = p.space.dim
    rng = np.random.default_rng(0)
    corners = [np.array(c, float) for c in itertools.product([0, 1], repeat=d)] if d <= 10 else \
        [rng.integers(0, 2, d).astype(float) for _ in range(64)]
    for u in corners:
        x = denormalize(p.space, u)
        a = p.evaluate(x)
        assert all(np.isfinite(v) for v in a.values())
        assert p.evaluate(x) == a


def test_opamp_rejects_out_of_bounds():
    p = get_problem("opamp_10d")
    with pytest.raises(ValueError):
        builtin_opamp_surrogate(p.space.upper * 1.01)
    with pytest.raises(ValueError):
        builtin_opamp_surrogate(np.ones(9))


def test_charge_pump_self_consistent():
    p = get_problem("charge_pump_36d")
    x = p.reference_design
    per = charge_pump_corners(x)
    assert per.shape == (18, 6)
    assert charge_pump_36d(x) == corner_aggregate(per)
    assert charge_pump_36d(x)["fom"] == p.reference_objective

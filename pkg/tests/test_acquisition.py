import math
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from nnbo.acquisition import (
    AcquisitionContext,
    MaximizerConfig,
    acquisition_terms,
    expected_improvement,
    log_expected_improvement,
    maximize_acquisition,
    prob_feasible,
    weighted_ei,
)
from nnbo.space import DesignSpace


@dataclass
class FnModel:
    """Surrogate stub with analytic mean/std over the unit cube."""

    mean: object
    std: object

    def predict(self, U):
        U = np.atleast_2d(U)
        return np.asarray(self.mean(U), float), np.asarray(self.std(U), float) ** 2


def const(mu, sd):
    return FnModel(lambda U: np.full(len(U), mu), lambda U: np.full(len(U), sd))


def test_ei_examples():
    assert expected_improvement(0.0, 1.0, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-9)
    assert expected_improvement(0.0, 1.0, 0.0) == pytest.approx(0.398942, abs=1e-6)
    assert expected_improvement(-2.0, 0.0, 1.0) == 3.0
    assert expected_improvement(0.0, 1.0, 1.0) == pytest.approx(1.083316, abs=1e-6)
    assert expected_improvement(0.0, 1.0, 1.0) == pytest.approx(norm.cdf(1) + norm.pdf(1), rel=1e-14)
    assert expected_improvement(5.0, 0.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        expected_improvement(0.0, -1.0, 0.0)
    with pytest.raises(ValueError):
        expected_improvement(np.nan, 1.0, 0.0)


def test_pf_examples():
    assert prob_feasible(0.0, 1.0) == 0.5
    assert prob_feasible(-1.644854, 1.0) == pytest.approx(0.95, abs=1e-6)
    assert prob_feasible(-0.1, 0.0) == 1.0
    assert prob_feasible(0.1, 0.0) == 0.0
    with pytest.raises(ValueError):
        prob_feasible(0.0, -1.0)


def test_ei_sigma_limit():
    for tau, mu in [(1.0, 0.3), (0.0, 0.5), (2.0, 2.0)]:
        assert expected_improvement(mu, 1e-12, tau) == pytest.approx(max(tau - mu, 0.0), abs=1e-11)


grid = st.tuples(st.floats(-5, 5), st.floats(1e-3, 5), st.floats(-5, 5))


@given(grid, st.floats(0, 3))
@settings(max_examples=300)
def test_ei_monotone_in_tau(t, dt):
    mu, sd, tau = t
    assert expected_improvement(mu, sd, tau + dt) >= expected_improvement(mu, sd, tau) - 1e-15


@given(grid, st.floats(0, 3))
@settings(max_examples=300)
def test_ei_monotone_in_sigma_when_not_improving(t, ds):
    mu, sd, tau = t
    mu = max(mu, tau)
    assert expected_improvement(mu, sd + ds, tau) >= expected_improvement(mu, sd, tau) - 1e-15


@given(st.floats(-5, 5), st.floats(0, 3), st.floats(1e-3, 5))
@settings(max_examples=300)
def test_pf_monotone_in_mu(mu, dmu, sd):
    assert prob_feasible(mu + dmu, sd) <= prob_feasible(mu, sd)


@given(grid)
@settings(max_examples=300)
def test_log_ei_consistent(t):
    mu, sd, tau = t
    ei = expected_improvement(mu, sd, tau)
    lei = log_expected_improvement(mu, sd, tau)
    if ei > 1e-300:
        assert lei == pytest.approx(math.log(ei), rel=1e-9, abs=1e-9)


def test_log_ei_deep_tail_is_finite():
    lam = np.array([-10.0, -30.0, -100.0])
    lei = log_expected_improvement(-lam, 1.0, 0.0)
    assert np.all(np.isfinite(lei))
    # asymptotically EI ~ pdf(lam) / lam^2
    np.testing.assert_allclose(lei, norm.logpdf(-lam) - 2 * np.log(-lam), rtol=2e-3)


def test_ei_matches_monte_carlo():
    rng = np.random.default_rng(0)
    checked = 0
    for mu in (-1.0, 0.0, 0.7):
        for sd in (0.2, 1.0, 2.5):
            for tau in (-0.5, 0.0, 1.0):
                exact = expected_improvement(mu, sd, tau)
                if exact <= 1e-3:
                    continue
                y = mu + sd * rng.normal(size=10**6)
                mc = np.maximum(tau - y, 0.0).mean()
                assert exact == pytest.approx(mc, rel=0.01)
                checked += 1
    assert checked >= 15


def test_wei_matches_monte_carlo():
    rng = np.random.default_rng(1)
    settings_ = [
        ((0.0, 1.0, 0.5), [(-0.5, 1.0)]),
        ((0.3, 0.5, 0.0), [(0.2, 0.4), (-1.0, 2.0)]),
        ((-1.0, 2.0, 1.0), [(0.0, 1.0), (-0.3, 0.3), (0.5, 3.0)]),
    ]
    for (mu, sd, tau), cons in settings_:
        ctx = AcquisitionContext(const(mu, sd), [const(cm, cs) for cm, cs in cons], tau)
        exact = weighted_ei(ctx, np.array([0.5]))
        assert exact > 1e-3
        n = 10**6
        y = mu + sd * rng.normal(size=n)
        ok = np.ones(n, bool)
        for cm, cs in cons:
            ok &= cm + cs * rng.normal(size=n) < 0
        mc = np.mean(np.maximum(tau - y, 0.0) * ok)
        assert exact == pytest.approx(mc, rel=0.02)


def test_wei_identities():
    x = np.array([0.2])
    ctx = AcquisitionContext(const(0.1, 0.8), [], 0.4)
    assert weighted_ei(ctx, x) == pytest.approx(expected_improvement(0.1, 0.8, 0.4), rel=1e-12)
    certain = AcquisitionContext(const(0.1, 0.8), [const(-1.0, 0.0), const(-3.0, 0.0)], 0.4)
    assert weighted_ei(certain, x) == pytest.approx(expected_improvement(0.1, 0.8, 0.4), rel=1e-12)
    dead = AcquisitionContext(const(0.1, 0.8), [const(-1.0, 1.0), const(1.0, 0.0)], 0.4)
    assert weighted_ei(dead, x) == 0.0
    nofeas = AcquisitionContext(const(0.1, 0.8), [const(0.0, 1.0), const(-1.644854, 1.0)])
    assert not nofeas.feasible_seen
    assert weighted_ei(nofeas, x) == pytest.approx(0.5 * 0.95, abs=1e-6)
    with pytest.raises(ValueError):
        AcquisitionContext(const(0, 1), [], math.inf)


def unit(d):
    return DesignSpace(tuple(f"x{i}" for i in range(d)), np.zeros(d), np.ones(d))


def test_maximizer_finds_interior_peak():
    # EI peak where the mean dips, at x = 0.6137
    peak = 0.6137
    model = FnModel(lambda U: (U[:, 0] - peak) ** 2, lambda U: np.full(len(U), 0.05))
    ctx = AcquisitionContext(model, [], 0.0)
    p = maximize_acquisition(ctx, unit(1), seed=3)
    grid = np.linspace(0, 1, 10**4)[:, None]
    truth = grid[np.argmax(acquisition_terms(ctx, grid)["log_wei"]), 0]
    assert abs(p.u[0] - truth) < 1e-2
    assert abs(p.u[0] - peak) < 1e-2


@given(st.integers(0, 10**6), st.integers(1, 4))
@settings(max_examples=25, deadline=None)
def test_maximizer_properties(seed, d):
    rng = np.random.default_rng(seed)
    c = rng.random(d)
    model = FnModel(lambda U: np.sum((U - c) ** 2, 1) * 5 - 0.3, lambda U: 0.1 + 0.3 * U[:, 0])
    cons = FnModel(lambda U: U[:, -1] - 0.8, lambda U: np.full(len(U), 0.1))
    ctx = AcquisitionContext(model, [cons], 0.0)
    cfg = MaximizerConfig(pool=200)
    p = maximize_acquisition(ctx, unit(d), seed=seed, config=cfg)
    assert np.all((p.u >= 0) & (p.u <= 1))
    from scipy.stats import qmc

    pool = qmc.Halton(d=d, scramble=True, seed=seed).random(200)
    assert p.log_wei >= acquisition_terms(ctx, pool)["log_wei"].max()
    q = maximize_acquisition(ctx, unit(d), seed=seed, config=cfg)
    assert np.array_equal(p.u, q.u)


def test_all_zero_fallback_prefers_feasibility_then_spread():
    # EI is exactly zero everywhere (sigma = 0, mean above tau)
    model = FnModel(lambda U: np.ones(len(U)), lambda U: U[:, 1])
    ctx = AcquisitionContext(FnModel(lambda U: np.ones(len(U)), lambda U: np.zeros(len(U))), [], 0.0)
    p = maximize_acquisition(ctx, unit(2), budget=64, seed=0)
    assert p.fallback and p.wei == 0.0
    # every pool point ties on PF (no constraints), so the widest objective spread wins
    ctx2 = AcquisitionContext(
        FnModel(lambda U: np.ones(len(U)), lambda U: np.zeros(len(U))),
        [FnModel(lambda U: np.ones(len(U)), lambda U: np.zeros(len(U)))],
        None,
    )
    q = maximize_acquisition(ctx2, unit(2), budget=64, seed=0)
    assert q.fallback
    ctx3 = AcquisitionContext(model, [FnModel(lambda U: np.ones(len(U)), lambda U: np.zeros(len(U)))], None)
    r = maximize_acquisition(ctx3, unit(2), budget=64, seed=0)
    from scipy.stats import qmc

    pool = qmc.Halton(d=2, scramble=True, seed=0).random(64)
    assert r.u[1] == pool[:, 1].max()
    with pytest.raises(ValueError):
        maximize_acquisition(ctx, unit(2), budget=0)


def test_anchors_seed_the_search_near_incumbent():
    # a narrow EI bump that a 16-point pool cannot see
    c = np.array([0.537, 0.291, 0.804])
    model = FnModel(lambda U: 1.0 - np.exp(-np.sum((U - c) ** 2, 1) / 1e-3), lambda U: np.full(len(U), 0.05))
    ctx = AcquisitionContext(model, [], 0.5)
    cfg = MaximizerConfig(pool=16, local=60, local_scale=0.02)
    blind = maximize_acquisition(ctx, unit(3), seed=0, config=MaximizerConfig(pool=16, rounds=0))
    p = maximize_acquisition(ctx, unit(3), seed=0, config=cfg, anchors=[c + 0.03])
    assert p.log_wei > blind.log_wei
    assert np.linalg.norm(p.u - c) < 0.01
    q = maximize_acquisition(ctx, unit(3), seed=0, config=cfg, anchors=[c + 0.03])
    assert np.array_equal(p.u, q.u)

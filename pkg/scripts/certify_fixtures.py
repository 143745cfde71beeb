"""Locate reference optima of the builtin constrained problems.

Dense quasi-random sweep, then multistart SLSQP from the best feasible and
least-infeasible sweep points (unit-cube coordinates).  The charge-pump
objective is a max over corners, so it additionally gets a penalized
differential-evolution polish.  Prints constants to paste into
``nnbo.benchmarks``.

    python scripts/certify_fixtures.py [problem ...]
"""

from __future__ import annotations

import sys

import numpy as np
from scipy.optimize import differential_evolution, minimize
from scipy.stats import qmc

from nnbo.benchmarks import BUILTIN_NAMES, get_problem
from nnbo.space import denormalize


def _scalarize(problem):
    obj = problem.objective
    cons = problem.constraints

    def metrics(u):
        return problem.evaluate(denormalize(problem.space, np.clip(u, 0.0, 1.0)))

    def f(u):
        return obj.to_minimize(metrics(u)[obj.metric])

    def g(u):
        m = metrics(u)
        return np.array([c.g(m[c.metric]) for c in cons])

    return f, g


def certify(name: str, sweep: int = 2**16, starts: int = 40, seed: int = 0):
    problem = get_problem(name)
    d = problem.space.dim
    f, g = _scalarize(problem)
    U = qmc.Sobol(d, scramble=True, seed=seed).random(sweep)
    F = np.array([f(u) for u in U])
    G = np.array([g(u) for u in U]).reshape(sweep, -1)
    viol = np.maximum(G, 0.0).sum(axis=1)
    feas = viol == 0
    print(f"{name}: sweep feasible fraction {feas.mean():.4f}")
    order = np.lexsort((F, viol))
    best_u, best_f = None, np.inf
    if feas.any():
        i = np.flatnonzero(feas)[np.argmin(F[feas])]
        best_u, best_f = U[i], F[i]

    def accept(u):
        nonlocal best_u, best_f
        u = np.clip(u, 0.0, 1.0)
        if np.all(g(u) < 0) and f(u) < best_f:
            best_u, best_f = u, f(u)

    for i in order[:starts]:
        res = minimize(
            f, U[i], method="SLSQP", bounds=[(0.0, 1.0)] * d,
            constraints=[{"type": "ineq", "fun": lambda u: -g(u) - 1e-9}],
            options={"maxiter": 500, "ftol": 1e-12},
        )
        accept(res.x)

    if name == "charge_pump_36d":
        scale = max(1.0, abs(best_f)) if np.isfinite(best_f) else 1.0

        def penalized(u):
            return f(u) + 100.0 * scale * np.maximum(g(u), 0.0).sum()

        res = differential_evolution(
            penalized, [(0.0, 1.0)] * d, seed=seed, maxiter=3000, popsize=20, tol=1e-10,
            init=U[order[: 20 * d]] if sweep >= 20 * d else "latinhypercube", polish=False,
        )
        accept(res.x)
        res = minimize(penalized, best_u if best_u is not None else res.x, method="Nelder-Mead",
                       options={"maxiter": 40000, "xatol": 1e-10, "fatol": 1e-12, "adaptive": True})
        accept(res.x)

    if best_u is None:
        print(f"{name}: no feasible point found")
        return None
    x = denormalize(problem.space, best_u)
    value = problem.objective.from_minimize(best_f)
    print(f"{name}: objective {value!r}")
    print(f"{name.upper()} design = np.array({[float(v) for v in x]!r})")
    return x, value


def main(argv):
    names = argv or [n for n in BUILTIN_NAMES if n != "quadratic_1d"]
    for n in names:
        certify(n)


if __name__ == "__main__":
    main(sys.argv[1:])

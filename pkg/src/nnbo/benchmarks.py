"""Builtin analytic test problems.

These stand in for circuit simulators.  Their closed forms are documented
here and never consulted by the optimizer.

quadratic_1d
    f(x) = (x - 0.3)^2 on [-1, 1]; unconstrained.

gramacy_2d
    minimize x1 + x2 on [0, 1]^2 subject to
    c1 = 1.5 - x1 - 2 x2 - 0.5 sin(2 pi (x1^2 - 2 x2)) < 0 and
    c2 = x1^2 + x2^2 - 1.5 < 0.

ring_5d
    minimize sum_i (x_i - 0.8)^2 + 0.3 sum_i sin(3 pi x_i) / (3 pi) on
    [0, 1]^5 subject to ||x - 0.3||^2 < 0.25 (a ball away from the
    unconstrained optimum, so the constraint is active).

opamp_10d
    Two-stage Miller opamp, square-law devices.  Variables: input pair
    W1/L1, mirror load W3/L3, tail W5/L5 (L5 shared by the second-stage
    current source), second stage W6/L6, current source W7, Miller cap Cc.
    With I5 = Iref (W5/L5)/10 and I7 = Iref (W7/L5)/10:

        gm = 2 I / sqrt(2 I / (k W/L) + (2 n Vt)^2),  ro = L / (0.08 I)
        A1 = gm1 (ro2 || ro4),   A2 = gm6 (ro6 || ro7)
        gain = 20 log10(A1 A2) - 20 log10(1 + exp((Vov_sum - 0.9) / 0.05))
        ugf  = u / sqrt(1 + (u / 150 MHz)^2),  u = gm1 / (2 pi Cc)
        pm   = 90 - atan(u/p2) - atan(u/p3) - atan(u/z)   [degrees]

    gm follows the square law in strong inversion and saturates at
    I / (n Vt) in weak inversion (n = 1.3), so gain cannot grow without
    bound by starving devices; the measured ugf rolls off softly near
    150 MHz.  Bounds: W in [1, 40] um (W6, W7 in [2, 150]), L in
    [0.18, 2] um, Cc in [0.1, 1.5] pF.

    p2 is the Miller-split output pole, p3 the mirror pole, z the
    right-half-plane zero; Vov_sum sums the overdrives of the devices
    stacked in the first stage (softplus headroom loss).  Goal: maximize
    gain subject to ugf > 40 MHz and pm > 60 degrees.

charge_pump_36d
    Charge pump with an UP (PMOS, "M1") and a DN (NMOS, "M2") current
    branch, 18 variables each (9 W/L pairs: reference, output, cascode,
    switch, dummy switch, cascode bias, gain-boost amplifier, keeper,
    startup).  Each branch's max/avg/min output current is modelled at
    18 PVT corners (see ``evaluators.default_corners``) and reduced with
    ``evaluators.corner_aggregate``: minimize fom subject to diff1 < 20,
    diff2 < 20, diff3 < 5, diff4 < 5, deviation < 5 (all uA).

Reference optima of the low-dimensional problems were certified by
``scripts/certify_fixtures.py`` (Sobol sweep + multistart SLSQP).
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .evaluators import (
    AGGREGATE_KEYS,
    Constraint,
    Objective,
    Problem,
    corner_aggregate,
    default_corners,
)
from .space import DesignSpace


# -- small problems ---------------------------------------------------------

def quadratic_1d(x) -> dict[str, float]:
    x = np.asarray(x, dtype=float)
    return {"f": float((x[0] - 0.3) ** 2)}


def gramacy_2d(x) -> dict[str, float]:
    x1, x2 = (float(v) for v in x)
    return {
        "f": x1 + x2,
        "c1": 1.5 - x1 - 2.0 * x2 - 0.5 * math.sin(2.0 * math.pi * (x1 * x1 - 2.0 * x2)),
        "c2": x1 * x1 + x2 * x2 - 1.5,
    }


def ring_5d(x) -> dict[str, float]:
    x = np.asarray(x, dtype=float)
    f = np.sum((x - 0.8) ** 2) + 0.3 * np.sum(np.sin(3.0 * np.pi * x)) / (3.0 * np.pi)
    return {"f": float(f), "r2": float(np.sum((x - 0.3) ** 2))}


# -- two-stage opamp --------------------------------------------------------

OPAMP_NAMES = ("w1", "l1", "w3", "l3", "w5", "l5", "w6", "l6", "w7", "cc")
OPAMP_LOWER = np.array([1.0, 0.18, 1.0, 0.18, 1.0, 0.18, 2.0, 0.18, 2.0, 0.1])
OPAMP_UPPER = np.array([40.0, 2.0, 40.0, 2.0, 40.0, 2.0, 150.0, 2.0, 150.0, 1.5])

_KN, _KP = 270e-6, 70e-6  # A/V^2
_IREF, _WL_REF = 20e-6, 10.0
_CLOAD, _COX = 0.5e-12, 8.5e-3  # F, F/m^2
_HEADROOM, _HEADROOM_SOFT = 0.9, 0.05  # V
_N_VT = 1.3 * 0.0259  # slope factor times thermal voltage, V
_UGF_CEIL = 150e6  # Hz


def _gm(k_wl, i):
    """Square-law gm that saturates at I / (n Vt) in weak inversion."""
    return 2.0 * i / np.sqrt(2.0 * i / k_wl + (2.0 * _N_VT) ** 2)


def opamp_metrics(X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized (gain dB, ugf MHz, pm deg) for rows of physical designs."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    w1, l1, w3, l3, w5, l5, w6, l6, w7, cc = X.T
    um2 = 1e-12
    i5 = _IREF * (w5 / l5) / _WL_REF
    i7 = _IREF * (w7 / l5) / _WL_REF
    gm1 = _gm(_KN * w1 / l1, i5 / 2.0)
    gm3 = _gm(_KP * w3 / l3, i5 / 2.0)
    gm6 = _gm(_KP * w6 / l6, i7)
    ro2 = l1 / (0.08 * i5 / 2.0)
    ro4 = l3 / (0.08 * i5 / 2.0)
    ro6 = l6 / (0.08 * i7)
    ro7 = l5 / (0.08 * i7)
    a1 = gm1 * ro2 * ro4 / (ro2 + ro4)
    a2 = gm6 * ro6 * ro7 / (ro6 + ro7)
    vov = (
        np.sqrt(i5 / (_KN * w1 / l1))
        + np.sqrt(i5 / (_KP * w3 / l3))
        + np.sqrt(2.0 * i5 / (_KN * w5 / l5))
    )
    gain = 20.0 * np.log10(a1 * a2) - 20.0 * np.log10(1.0 + np.exp((vov - _HEADROOM) / _HEADROOM_SOFT))

    c = cc * 1e-12
    c1 = 0.2 * _COX * w6 * l6 * um2 + 5e-15
    c3 = (4.0 / 3.0) * _COX * w3 * l3 * um2 + 5e-15
    c2 = _CLOAD + 0.2 * _COX * w7 * l5 * um2
    ugf = gm1 / (2.0 * np.pi * c)
    ugf_meas = ugf / np.sqrt(1.0 + (ugf / _UGF_CEIL) ** 2)  # parasitic-pole bandwidth ceiling
    p2 = gm6 * c / (2.0 * np.pi * (c1 * c2 + c * (c1 + c2)))
    p3 = gm3 / (2.0 * np.pi * c3)
    z = gm6 / (2.0 * np.pi * c)
    pm = 90.0 - np.degrees(np.arctan(ugf / p2) + np.arctan(ugf / p3) + np.arctan(ugf / z))
    return gain, ugf_meas / 1e6, pm


def builtin_opamp_surrogate(x) -> dict[str, float]:
    x = np.asarray(x, dtype=float)
    if x.shape != (10,):
        raise ValueError("opamp surrogate takes 10 design variables")
    if np.any(x < OPAMP_LOWER) or np.any(x > OPAMP_UPPER):
        raise ValueError("design outside the opamp bounds")
    g, u, p = opamp_metrics(x)
    return {"gain": float(g[0]), "ugf": float(u[0]), "pm": float(p[0])}


# -- charge pump --------------------------------------------------------------

_CP_DEVICES = ("ref", "out", "cas", "sw", "dum", "bias", "amp", "keep", "start")
CP_NAMES = tuple(
    f"{branch}_{dev}_{wl}" for branch in ("up", "dn") for dev in _CP_DEVICES for wl in ("w", "l")
)
# mirror devices get a narrow window around unity ratio; the rest are free
_CP_BRANCH_LOWER = np.array([5.0, 0.3, 5.0, 0.3] + [1.0, 0.1] * 7)
_CP_BRANCH_UPPER = np.array([15.0, 1.0, 15.0, 1.0] + [20.0, 1.0] * 7)
CP_LOWER = np.tile(_CP_BRANCH_LOWER, 2)
CP_UPPER = np.tile(_CP_BRANCH_UPPER, 2)

# per-branch constants: (target-scale current uA, mobility factor, lambda
# coefficient 1/(V um), injection coefficient, swing up V, swing down V)
_CP_BRANCH = {
    "up": (40.0, 0.45, 0.25, 0.6, 0.35, 0.30),
    "dn": (40.0, 1.0, 0.15, 0.08, 0.30, 0.35),
}
_CORNERS = default_corners()


def _branch_currents(v: np.ndarray, params, corners: np.ndarray) -> np.ndarray:
    """(C, 3) max/avg/min currents in uA for one branch; v holds 18 values."""
    iunit, mob, lam0, inj0, swing_up, swing_dn = params
    (wr, lr, wo, lo, wc, lc, ws, ls, wd, ld, wb, lb, wa, la, wk, lk, wst, lst) = v
    dp, dv, dt = corners[:, 0], corners[:, 1], corners[:, 2]

    ratio = (wo / lo) / (wr / lr)
    # mirror systematic error shrinks with matched, large devices
    mismatch = 0.03 * (lo - lr) / (lo + lr) + 0.01 / math.sqrt(wo * lo)
    inom = iunit * ratio**0.4 * (1.0 + mismatch)

    ro = lo / (lam0 * inom * 1e-6)  # ohm
    gmc = 2e-6 * math.sqrt(mob * 10.0 * (wc / lc) * inom)  # S
    roc = lc / (lam0 * inom * 1e-6)
    boost = 1.0 + 4.0 * math.tanh(wa * la / 8.0)
    # cascode bias headroom: wide swing only when the bias device is sized right
    head = 1.0 / (1.0 + math.exp((abs(math.log(wb / lb / 10.0)) - 1.0) / 0.25))
    casc = gmc * roc * boost * (0.2 + 0.8 * head)
    rout = ro * (1.0 + casc)

    # corner sensitivities of the average current
    s_p = 0.02 * math.sqrt(0.3 / lr) + 0.01 * math.sqrt(0.3 / lo)
    s_v = 0.04 / (1.0 + casc / 10.0)
    s_t = 0.005 + 0.02 / (1.0 + math.exp((lb - 0.4) / 0.1))
    leak = 0.0005 * wk / lk  # keeper leakage, only when hot
    offset = 0.1 / math.sqrt(wa * la) + 0.3 * wst / (lst * 200.0)
    iavg = inom * (1.0 + s_p * dp + s_v * dv + s_t * dt) + leak * inom * (1.0 + dt) + offset * dp

    # charge injection, cancelled by a half-size dummy; keeper area damps it
    inj = inj0 * abs(ws * ls - 2.0 * wd * ld) / (1.0 + wk * lk / 4.0) + 0.01 * ws / ls
    swing_scale = 1.0 + 0.3 * dv
    up = swing_up * swing_scale / rout * 1e6 + inj * (1.0 + 0.2 * dp)
    dn = swing_dn * swing_scale / rout * 1e6 + 0.7 * inj * (1.0 - 0.2 * dp)
    return np.stack([iavg + up, iavg, iavg - dn], axis=1)


def charge_pump_corners(x) -> np.ndarray:
    """(18, 6) per-corner currents: I_M1 max/avg/min, I_M2 max/avg/min."""
    x = np.asarray(x, dtype=float)
    if x.shape != (36,):
        raise ValueError("charge pump takes 36 design variables")
    if np.any(x < CP_LOWER) or np.any(x > CP_UPPER):
        raise ValueError("design outside the charge-pump bounds")
    c = _CORNERS.perturbations
    return np.hstack(
        [_branch_currents(x[:18], _CP_BRANCH["up"], c), _branch_currents(x[18:], _CP_BRANCH["dn"], c)]
    )


def charge_pump_36d(x) -> dict[str, float]:
    return corner_aggregate(charge_pump_corners(x))


# -- registry -----------------------------------------------------------------

def _space(names, lower, upper) -> DesignSpace:
    return DesignSpace(tuple(names), np.asarray(lower, float), np.asarray(upper, float))


# Certified reference optima (scripts/certify_fixtures.py); physical units.
GRAMACY_OPT = np.array([0.19512268931587415, 0.4046653635507592])
RING_OPT = np.array([0.5236067973548997, 0.5236067974811891, 0.5236067969825509, 0.5236067974100269, 0.5236067973806697])
OPAMP_OPT = np.array([
    40.0, 1.9999999999999996, 1.000000000000183, 1.2776373707377493, 9.088311781845134,
    1.8087545308233783, 149.99999999999986, 0.6205395364602349, 72.0175199068624, 0.481873834421643,
])
CHARGE_PUMP_REF = np.array([
    12.849609922936137, 0.8464219980975054, 15.0, 1.0, 14.95998834807609, 0.8047964037920949,
    2.1242037765518047, 0.9719867012661445, 2.8433623158216816, 0.3697212020935815, 16.144844252136917, 1.0,
    8.144355840399532, 0.3495990126737527, 1.0, 0.598405617876991, 4.08384366045407, 0.26792516775342146,
    11.041170179370127, 0.6858148723270896, 15.0, 1.0, 9.369193500067713, 0.877255448279927,
    13.404158695573804, 0.9527819630576296, 6.3002954611691635, 0.5247732458261263, 19.286416187102024, 1.0,
    3.665995728691277, 0.9332476793093682, 13.893914418587933, 0.7010343729922486, 9.301058794959975, 0.1,
])  # feasible design from a BO run, not certified optimal


def _make(name: str) -> Problem:
    if name == "quadratic_1d":
        return Problem(
            name, _space(["x"], [-1.0], [1.0]), ("f",), quadratic_1d, Objective("f"),
            reference_design=np.array([0.3]), reference_objective=0.0,
            description="(x - 0.3)^2, unconstrained",
        )
    if name == "gramacy_2d":
        return Problem(
            name, _space(["x1", "x2"], [0, 0], [1, 1]), ("f", "c1", "c2"), gramacy_2d, Objective("f"),
            (Constraint("c1", "<", 0.0), Constraint("c2", "<", 0.0)),
            reference_design=GRAMACY_OPT, reference_objective=float(gramacy_2d(GRAMACY_OPT)["f"]),
            description="linear objective, two nonlinear constraints",
        )
    if name == "ring_5d":
        return Problem(
            name, _space([f"x{i}" for i in range(1, 6)], [0] * 5, [1] * 5), ("f", "r2"), ring_5d,
            Objective("f"), (Constraint("r2", "<", 0.25),),
            reference_design=RING_OPT,
            reference_objective=None if RING_OPT is None else ring_5d(RING_OPT)["f"],
            description="wavy quadratic, ball constraint active at the optimum",
        )
    if name == "opamp_10d":
        return Problem(
            name, _space(OPAMP_NAMES, OPAMP_LOWER, OPAMP_UPPER), ("gain", "ugf", "pm"),
            builtin_opamp_surrogate, Objective("gain", "max"),
            (Constraint("ugf", ">", 40.0), Constraint("pm", ">", 60.0)),
            reference_design=OPAMP_OPT,
            reference_objective=None if OPAMP_OPT is None else builtin_opamp_surrogate(OPAMP_OPT)["gain"],
            description="two-stage Miller opamp: max gain, ugf > 40 MHz, pm > 60 deg",
        )
    if name == "charge_pump_36d":
        return Problem(
            name, _space(CP_NAMES, CP_LOWER, CP_UPPER), AGGREGATE_KEYS, charge_pump_36d,
            Objective("fom"),
            (
                Constraint("diff1", "<", 20.0), Constraint("diff2", "<", 20.0),
                Constraint("diff3", "<", 5.0), Constraint("diff4", "<", 5.0),
                Constraint("deviation", "<", 5.0),
            ),
            reference_design=CHARGE_PUMP_REF,
            reference_objective=None if CHARGE_PUMP_REF is None else charge_pump_36d(CHARGE_PUMP_REF)["fom"],
            description="charge pump over 18 PVT corners: min 0.3 diff + 0.5 deviation",
        )
    raise KeyError(f"unknown builtin problem {name!r}")


BUILTIN_NAMES = ("quadratic_1d", "gramacy_2d", "ring_5d", "opamp_10d", "charge_pump_36d")


def get_problem(name: str) -> Problem:
    return _make(name)


def builtin_constrained_suite() -> list[Problem]:
    return [_make(n) for n in BUILTIN_NAMES if n != "quadratic_1d"]


BUILTIN_EVALUATORS: dict[str, Callable] = {
    "quadratic_1d": quadratic_1d,
    "gramacy_2d": gramacy_2d,
    "ring_5d": ring_5d,
    "opamp_10d": builtin_opamp_surrogate,
    "charge_pump_36d": charge_pump_36d,
}

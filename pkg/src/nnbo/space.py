"""Bounded continuous design domains and initial space-filling designs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

_UNIT_TOL = 1e-9


@dataclass(frozen=True)
class DesignSpace:
    """Named box-bounded real variables.

    All surrogate work happens in the unit cube; physical units are only
    used at the evaluator boundary.
    """

    names: tuple[str, ...]
    lower: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)

    def __post_init__(self):
        names = tuple(self.names)
        lower = np.asarray(self.lower, dtype=float).reshape(-1)
        upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if len(names) == 0:
            raise ValueError("design space needs at least one variable")
        if len(set(names)) != len(names) or any(not n for n in names):
            raise ValueError(f"variable names must be unique and nonempty: {names}")
        if lower.shape != (len(names),) or upper.shape != (len(names),):
            raise ValueError("bounds must have one entry per variable")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ValueError("bounds must be finite")
        bad = np.flatnonzero(~(lower < upper))
        if bad.size:
            raise ValueError(f"lower < upper violated for {[names[i] for i in bad]}")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def from_bounds(cls, bounds: Sequence[tuple[str, float, float]]) -> "DesignSpace":
        names, lo, hi = zip(*bounds)
        return cls(tuple(names), np.array(lo, float), np.array(hi, float))

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return x.shape[-1] == self.dim and bool(np.all((x >= self.lower) & (x <= self.upper)))

    def __eq__(self, other):
        if not isinstance(other, DesignSpace):
            return NotImplemented
        return (
            self.names == other.names
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
        )

    def __hash__(self):
        return hash((self.names, self.lower.tobytes(), self.upper.tobytes()))


def _check_dim(space: DesignSpace, arr: np.ndarray) -> None:
    if arr.shape[-1] != space.dim:
        raise ValueError(f"expected {space.dim} components, got {arr.shape[-1]}")


def normalize(space: DesignSpace, x) -> np.ndarray:
    """Map physical design(s) to the unit cube. Accepts (d,) or (n, d)."""
    x = np.asarray(x, dtype=float)
    _check_dim(space, x)
    if np.any(x < space.lower) or np.any(x > space.upper):
        raise ValueError("design component outside bounds")
    return (x - space.lower) / space.width


def denormalize(space: DesignSpace, u) -> np.ndarray:
    """Map unit-cube point(s) back to physical units."""
    u = np.asarray(u, dtype=float)
    _check_dim(space, u)
    if np.any(u < -_UNIT_TOL) or np.any(u > 1 + _UNIT_TOL):
        raise ValueError("unit-cube component outside [0, 1]")
    u = np.clip(u, 0.0, 1.0)
    x = space.lower + u * space.width
    # keep the affine map exact at the upper edge
    return np.where(u == 1.0, space.upper, x)


def lhs_unit(n: int, d: int, seed: int) -> np.ndarray:
    """Latin hypercube sample of n points in [0, 1)^d."""
    if n < 1:
        raise ValueError("LHS needs n >= 1")
    rng = np.random.default_rng(seed)
    strata = np.empty((n, d))
    for j in range(d):
        strata[:, j] = rng.permutation(n)
    u = (strata + rng.random((n, d))) / n
    # rounding can push a value into the next stratum; step it back down
    over = np.floor(u * n) > strata
    while np.any(over):
        u[over] = np.nextafter(u[over], 0.0)
        over = np.floor(u * n) > strata
    return u


def lhs_sample(space: DesignSpace, n: int, seed: int) -> np.ndarray:
    """n Latin-hypercube designs in physical units, shape (n, d)."""
    return denormalize(space, lhs_unit(n, space.dim, seed))

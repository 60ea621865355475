"""Primal value function and feedback policy recovered from the dual grid.

Node-wise the Legendre transform inverts exactly:

    x = -v_y(y),  V(x) = v(y) - y v_y(y),  V_x(x) = y,
    V_xx(x) = -1 / v_yy(y),
    c*(x) = max(y^(1/(p-1)), k x + l),
    pi*(x) = (mu / sigma^2) y v_yy(y).

The primal grid is the image of the dual grid (non-uniform in x, finest
where V_x varies fastest, near x_e); there is no re-gridding.  Between
nodes, V and ln V_x are interpolated by monotone cubics in ln x, and c
and pi are recomputed from the interpolated derivatives so the max()
kink in the consumption rule stays exact.  Queries outside the node
range are refused rather than extrapolated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import PchipInterpolator

from .dual_solver import DualGrid, find_free_boundary
from .errors import ConvexityLoss, OutOfRange
from .params import ProblemSpec

__all__ = ["PolicyTable", "RegionPartition", "invert", "value_at", "policy_at", "regions"]

REGION_CONSTRAINED = "C"
REGION_UNCONSTRAINED = "U"


@dataclass(eq=False)
class PolicyTable:
    """Tabulated optimal value and feedback policy on wealth nodes x > x_e.

    region holds "C" where the consumption floor binds and "U" where it
    is slack; x_star_list carries the refined region boundaries in
    increasing order.  Treat instances as immutable.
    """

    spec: ProblemSpec
    x: np.ndarray
    V: np.ndarray
    V_x: np.ndarray
    V_xx: np.ndarray
    c_star: np.ndarray
    pi_star: np.ndarray
    region: np.ndarray
    x_star_list: tuple[float, ...] = field(default=())

    def __post_init__(self):
        for name in ("x", "V", "V_x", "V_xx", "c_star", "pi_star"):
            arr = np.array(getattr(self, name), dtype=float)  # own the data
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "region", np.array(self.region))
        object.__setattr__(self, "x_star_list", tuple(float(v) for v in self.x_star_list))

    @property
    def n_nodes(self) -> int:
        return len(self.x)

    @cached_property
    def _log_x(self) -> np.ndarray:
        return np.log(self.x)

    @cached_property
    def _value_interp(self) -> PchipInterpolator:
        return PchipInterpolator(self._log_x, self.V)

    @cached_property
    def _log_vx_interp(self) -> PchipInterpolator:
        return PchipInterpolator(self._log_x, np.log(self.V_x))

    @cached_property
    def _log_vx_slope(self) -> PchipInterpolator:
        return self._log_vx_interp.derivative()

    def _check_range(self, x: np.ndarray):
        if np.any(x < self.x[0]) or np.any(x > self.x[-1]):
            raise OutOfRange(
                f"wealth query outside table range [{self.x[0]}, {self.x[-1]}]; "
                "enlarge the dual solve domain instead of extrapolating")

    def floor_binds(self, x) -> np.ndarray:
        """True where x lies in a constrained interval (boundaries from
        the refined x_star values, not the nodal flags)."""
        x = np.asarray(x, dtype=float)
        starts_constrained = bool(self.region[0] == REGION_CONSTRAINED)
        binds = np.full(np.shape(x), starts_constrained, dtype=bool)
        for x_star in self.x_star_list:
            binds ^= x > x_star
        return binds


def invert(spec: ProblemSpec, grid: DualGrid) -> PolicyTable:
    """Map a converged dual grid to the primal policy table.

    Nodes are reversed so wealth increases.  Raises ConvexityLoss when
    the dual input is not strictly convex (V would not be concave).
    """
    if np.any(grid.v_yy <= 0.0):
        raise ConvexityLoss("v_yy <= 0: dual grid is not strictly convex")
    order = slice(None, None, -1)
    y = grid.y[order]
    v = grid.v[order]
    v_y = grid.v_y[order]
    v_yy = grid.v_yy[order]

    x = -v_y
    if np.any(np.diff(x) <= 0.0):
        raise ConvexityLoss("wealth nodes x = -v_y not strictly increasing")
    V = v - y * v_y
    V_x = y
    V_xx = -1.0 / v_yy
    floor = spec.k * x + spec.l
    candidate = y ** (1.0 / (spec.p - 1.0))
    c_star = np.maximum(candidate, floor)
    pi_star = (spec.mu / spec.sigma**2) * y * v_yy
    region = np.where(candidate <= floor, REGION_CONSTRAINED, REGION_UNCONSTRAINED)

    if np.any(np.diff(V) <= 0.0):
        raise ConvexityLoss("primal value not strictly increasing across nodes")

    x_star_list = tuple(xs for _, xs in find_free_boundary(spec, grid))
    return PolicyTable(spec=spec, x=x, V=V, V_x=V_x, V_xx=V_xx,
                       c_star=c_star, pi_star=pi_star, region=region,
                       x_star_list=x_star_list)


def value_at(table: PolicyTable, x):
    """Interpolated value V(x) inside the table range."""
    x_arr = np.asarray(x, dtype=float)
    table._check_range(x_arr)
    out = table._value_interp(np.log(x_arr))
    return float(out) if np.ndim(x) == 0 else out


def policy_at(table: PolicyTable, x):
    """Feedback (c, pi) at wealth x, recomputed from interpolated V_x, V_xx.

    The constrained / unconstrained branch is chosen against the refined
    free boundaries, so the kink in c is exact rather than smeared by
    interpolation.
    """
    spec = table.spec
    x_arr = np.asarray(x, dtype=float)
    table._check_range(x_arr)
    s = np.log(x_arr)
    V_x = np.exp(table._log_vx_interp(s))
    slope = table._log_vx_slope(s)  # d ln V_x / d ln x, < 0
    if np.any(slope >= 0.0):
        raise ConvexityLoss("interpolated V_x not strictly decreasing")
    binds = table.floor_binds(x_arr)
    c = np.where(binds, spec.k * x_arr + spec.l, V_x ** (1.0 / (spec.p - 1.0)))
    pi = -(spec.mu / spec.sigma**2) * x_arr / slope
    if np.ndim(x) == 0:
        return float(c), float(pi)
    return c, pi


@dataclass(frozen=True)
class RegionPartition:
    """Maximal constrained / unconstrained intervals covering (x_e, x_max]."""

    intervals: tuple[tuple[float, float, str], ...]
    n_constrained: int
    n_unconstrained: int

    @property
    def n_intervals(self) -> int:
        return len(self.intervals)


def regions(table: PolicyTable) -> RegionPartition:
    """Partition the covered wealth range by the refined free boundaries.

    No uniqueness of the boundary is assumed: every crossing found on
    the grid produces an interval break.
    """
    lows = (table.spec.x_e,) + table.x_star_list
    highs = table.x_star_list + (float(table.x[-1]),)
    label = table.region[0]
    intervals = []
    for lo, hi in zip(lows, highs):
        intervals.append((float(lo), float(hi), str(label)))
        label = REGION_CONSTRAINED if label == REGION_UNCONSTRAINED else REGION_UNCONSTRAINED
    n_c = sum(1 for iv in intervals if iv[2] == REGION_CONSTRAINED)
    return RegionPartition(intervals=tuple(intervals), n_constrained=n_c,
                           n_unconstrained=len(intervals) - n_c)

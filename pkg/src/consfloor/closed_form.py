"""Closed-form solutions: Merton, proportional floor, and fixed floor (k = 0).

Merton (no floor):      V0(x) = kappa^(p-1) x^p / p,
                        c = kappa x, pi = merton_fraction * x.

Proportional floor l=0: V_k(x) = M^p / (p (kappa (1-p) + M p)) x^p with
                        M = max(kappa, k); c = M x, same pi as Merton.

Fixed floor k=0, l>0:   no primal closed form, but the convex dual
                        v(y) = sup_x (V(x) - x y) is known exactly as a
                        two-branch power solution glued at y* = l^(p-1).
                        The free boundary is x* = -v_y(y*).

The dual branches are built on the roots lam1 < 0 < 1 < lam2 of the
characteristic quadratic

    f(lam) = -(mu^2/(2 sigma^2)) lam (lam - 1) + (r - beta) lam + beta,

which also satisfies the identity f(p/(p-1)) = kappa.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvexityLoss,
    DomainError,
    KappaNonPositive,
    NotHomogeneousCase,
    NotStateIndependentCase,
)
from .params import ProblemSpec

__all__ = [
    "merton_value",
    "merton_policy",
    "homogeneous_coef",
    "homogeneous_value",
    "homogeneous_policy",
    "char_quadratic",
    "quadratic_roots",
    "StateIndependentSolution",
    "solve_state_independent",
]


def _require_kappa(spec: ProblemSpec):
    if spec.kappa <= 0.0:
        raise KappaNonPositive(
            f"kappa={spec.kappa} <= 0: value may be infinite")


def _require_nonnegative_wealth(x):
    if np.any(np.asarray(x) < 0.0):
        raise DomainError("wealth must be >= 0")


def merton_value(spec: ProblemSpec, x):
    """Unconstrained value V0(x) = kappa^(p-1) x^p / p."""
    _require_kappa(spec)
    _require_nonnegative_wealth(x)
    p = spec.p
    return spec.kappa ** (p - 1.0) * np.power(x, p) / p


def merton_policy(spec: ProblemSpec, x):
    """Unconstrained feedback (c, pi) = (kappa x, merton_fraction x)."""
    _require_kappa(spec)
    _require_nonnegative_wealth(x)
    x = np.asarray(x, dtype=float)
    c = spec.kappa * x
    pi = spec.merton_fraction * x
    if c.ndim == 0:
        return float(c), float(pi)
    return c, pi


def homogeneous_coef(spec: ProblemSpec) -> float:
    """Coefficient of x^p in the proportional-floor value function.

    Defined for any spec with kappa > 0; for k <= kappa it collapses to
    the Merton coefficient kappa^(p-1)/p.  Also used as the upper-bound
    envelope V_k in the verification checks for l > 0 problems.
    """
    _require_kappa(spec)
    p, kappa = spec.p, spec.kappa
    m = max(kappa, spec.k)
    return m**p / (p * (kappa * (1.0 - p) + m * p))


def homogeneous_value(spec: ProblemSpec, x):
    """Value function for l = 0: V_k(x) = homogeneous_coef * x^p."""
    if spec.l != 0.0:
        raise NotHomogeneousCase(f"homogeneous closed form requires l = 0, got l={spec.l}")
    return homogeneous_coef(spec) * np.power(x, spec.p)


def homogeneous_policy(spec: ProblemSpec, x):
    """Feedback (c, pi) = (max(kappa, k) x, merton_fraction x) for l = 0."""
    if spec.l != 0.0:
        raise NotHomogeneousCase(f"homogeneous closed form requires l = 0, got l={spec.l}")
    _require_kappa(spec)
    _require_nonnegative_wealth(x)
    x = np.asarray(x, dtype=float)
    c = max(spec.kappa, spec.k) * x
    pi = spec.merton_fraction * x
    if c.ndim == 0:
        return float(c), float(pi)
    return c, pi


def char_quadratic(spec: ProblemSpec):
    """Coefficients (a, b, c) of f(lam) = a lam^2 + b lam + c."""
    m = spec.half_sharpe_sq
    return -m, m + spec.r - spec.beta, spec.beta


def quadratic_roots(spec: ProblemSpec) -> tuple[float, float]:
    """Roots lam1 < 0 < 1 <= lam2 of the characteristic quadratic.

    Computed with the cancellation-safe variant: the larger-magnitude
    root from the quadratic formula, the other from the root product.
    """
    _require_kappa(spec)
    a, b, c = char_quadratic(spec)
    disc = b * b - 4.0 * a * c  # > 0 always: a < 0 < c
    sq = math.sqrt(disc)
    q = -(b + math.copysign(sq, b)) / 2.0 if b != 0.0 else math.sqrt(-a * c)
    r1, r2 = q / a, c / q
    lam1, lam2 = (r1, r2) if r1 < r2 else (r2, r1)
    return lam1, lam2


@dataclass(frozen=True)
class StateIndependentSolution:
    """Exact dual solution for the fixed-floor case k = 0, l > 0.

    v(y) = coef_small y^lam2 + (1-p)/(p kappa) y^(p/(p-1))      for y <= y_star
    v(y) = coef_large y^lam1 + l^p/(beta p) - (l/r) y           for y >= y_star

    coef_small and coef_large make v and v_y continuous at
    y_star = l^(p-1); x_star = -v_y(y_star) is the free boundary between
    floor consumption (x <= x_star) and interior consumption.
    """

    spec: ProblemSpec
    lam1: float
    lam2: float
    coef_small: float
    coef_large: float
    y_star: float
    x_star: float

    def dual_eval(self, y):
        """Evaluate (v, v_y, v_yy) at dual prices y > 0.

        Raises ConvexityLoss if the evaluated v_yy is not strictly
        positive (cannot happen for exactly representable inputs; a
        guard against underflow at extreme y).
        """
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0.0):
            raise DomainError("dual price y must be > 0")
        spec = self.spec
        p, kappa, r, beta, l = spec.p, spec.kappa, spec.r, spec.beta, spec.l
        lam1, lam2 = self.lam1, self.lam2
        pw = p / (p - 1.0)
        small = y <= self.y_star
        with np.errstate(over="ignore"):
            v = np.where(
                small,
                self.coef_small * y**lam2 + (1.0 - p) / (p * kappa) * y**pw,
                self.coef_large * y**lam1 + l**p / (beta * p) - (l / r) * y,
            )
            v_y = np.where(
                small,
                self.coef_small * lam2 * y ** (lam2 - 1.0) - y ** (1.0 / (p - 1.0)) / kappa,
                self.coef_large * lam1 * y ** (lam1 - 1.0) - l / r,
            )
            v_yy = np.where(
                small,
                self.coef_small * lam2 * (lam2 - 1.0) * y ** (lam2 - 2.0)
                + y ** ((2.0 - p) / (p - 1.0)) / (kappa * (1.0 - p)),
                self.coef_large * lam1 * (lam1 - 1.0) * y ** (lam1 - 2.0),
            )
        if np.any(v_yy <= 0.0):
            raise ConvexityLoss("evaluated dual second derivative not positive")
        if v.ndim == 0:
            return float(v), float(v_y), float(v_yy)
        return v, v_y, v_yy

    def dual_price(self, x):
        """Invert v_y(y) = -x for wealth x > x_e.

        Monotone bisection in log y followed by a Newton polish;
        relative tolerance 1e-10 in y.
        """
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        x_e = self.spec.x_e
        if np.any(x_arr <= x_e):
            raise DomainError(f"wealth must exceed x_e={x_e}")
        t_lo = np.full(x_arr.shape, math.log(self.y_star))
        t_hi = np.full(x_arr.shape, math.log(self.y_star))
        # expand brackets until v_y + x changes sign (v_y is increasing)
        for _ in range(200):
            _, vy_lo, _ = self.dual_eval(np.exp(t_lo))
            need = vy_lo + x_arr > 0.0  # y too large for this x
            if not need.any():
                break
            t_lo = np.where(need, t_lo - 1.0, t_lo)
        for _ in range(200):
            _, vy_hi, _ = self.dual_eval(np.exp(t_hi))
            need = vy_hi + x_arr < 0.0
            if not need.any():
                break
            t_hi = np.where(need, t_hi + 1.0, t_hi)
        for _ in range(64):
            t_mid = 0.5 * (t_lo + t_hi)
            _, vy, _ = self.dual_eval(np.exp(t_mid))
            low = vy + x_arr < 0.0  # y too small
            t_lo = np.where(low, t_mid, t_lo)
            t_hi = np.where(low, t_hi, t_mid)
        y = np.exp(0.5 * (t_lo + t_hi))
        for _ in range(3):
            _, vy, vyy = self.dual_eval(y)
            y = y - (vy + x_arr) / vyy
            y = np.clip(y, np.exp(t_lo) * 0.5, np.exp(t_hi) * 2.0)
        if np.ndim(x) == 0:
            return float(y[0])
        return y

    def value(self, x):
        """Primal value V(x) = v(y) + x y at y = dual_price(x)."""
        y = self.dual_price(x)
        v, _, _ = self.dual_eval(y)
        return v + np.asarray(x, dtype=float) * y

    def policy(self, x):
        """Optimal feedback (c, pi) at wealth x > x_e."""
        spec = self.spec
        y = np.asarray(self.dual_price(x))
        c = np.maximum(y ** (1.0 / (spec.p - 1.0)), spec.l)
        _, _, v_yy = self.dual_eval(y)
        pi = (spec.mu / spec.sigma**2) * y * v_yy
        if np.ndim(x) == 0:
            return float(c), float(pi)
        return c, pi


def solve_state_independent(spec: ProblemSpec) -> StateIndependentSolution:
    """Build the exact dual solution for k = 0, l > 0, kappa > 0.

    The two branch coefficients solve the 2x2 linear system expressing
    continuity of v and v_y at the junction y_star = l^(p-1).
    """
    if spec.k != 0.0 or spec.l <= 0.0:
        raise NotStateIndependentCase(
            f"fixed-floor closed form requires k = 0 and l > 0, got k={spec.k}, l={spec.l}")
    _require_kappa(spec)
    p, kappa, r, beta, l = spec.p, spec.kappa, spec.r, spec.beta, spec.l
    lam1, lam2 = quadratic_roots(spec)
    pp = p / (p - 1.0)
    if not (lam1 < pp < lam2):
        raise ConvexityLoss(
            f"characteristic roots do not straddle p/(p-1): {lam1}, {pp}, {lam2}")

    ys = l ** (p - 1.0)
    # continuity of v and v_y at ys; unknowns (coef_small, coef_large)
    a11, a12 = ys**lam2, -(ys**lam1)
    a21, a22 = lam2 * ys ** (lam2 - 1.0), -lam1 * ys ** (lam1 - 1.0)
    b1 = l**p / (beta * p) - (l / r) * ys - (1.0 - p) / (p * kappa) * l**p
    b2 = -l / r + l / kappa
    coef_small, coef_large = np.linalg.solve(
        np.array([[a11, a12], [a21, a22]]), np.array([b1, b2]))

    sol = StateIndependentSolution(
        spec=spec, lam1=lam1, lam2=lam2,
        coef_small=float(coef_small), coef_large=float(coef_large),
        y_star=ys, x_star=math.nan)
    _, vy_star, _ = sol.dual_eval(ys)
    x_star = -vy_star
    if not x_star > spec.x_e:
        raise ConvexityLoss(f"free boundary {x_star} not above x_e={spec.x_e}")
    object.__setattr__(sol, "x_star", float(x_star))
    return sol

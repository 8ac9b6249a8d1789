"""Candidate value function of the ergodic problem and its HJB certificate.

On [a*, b*]::

    u'(x) = c1 + 2 s(x) k(x),    k(x) = int_x^{b*} (pi_1 - lambda*) m

with u'' read off the generator equation, and linear continuation with
slope c2 below a* and c1 above b*.  The certificate checks

    max{L u + h - lambda*, u' - c2, c1 - u'} = 0

pointwise on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .barrier import BarrierPair, BarrierSolution
from .diffusion import RewardModel, ScaleSpeedCache, evaluate, pi
from .errors import ArgumentError

DEFAULT_POINTS = 2001


@dataclass(frozen=True)
class GridSpec:
    """Grid over [x_lo, x_hi]; None bounds default to a*/2 and 2 b*."""

    x_lo: float = None
    x_hi: float = None
    n_points: int = DEFAULT_POINTS

    def build(self, a, b, cap=np.inf):
        lo = a / 2 if self.x_lo is None else float(self.x_lo)
        hi = min(2 * b, cap) if self.x_hi is None else float(self.x_hi)
        if not (0 < lo <= a < b <= hi):
            raise ArgumentError(f"grid [{lo}, {hi}] must contain the barriers [{a}, {b}]")
        if self.n_points < 5:
            raise ArgumentError(f"n_points must be at least 5, got {self.n_points}")
        # interval counts proportional to segment length, exact knots at a and b
        n_int = self.n_points - 1
        lengths = np.array([a - lo, b - a, hi - b])
        counts = np.floor(n_int * lengths / lengths.sum()).astype(int)
        counts[1] = max(counts[1], 2)
        counts[counts == 0] = np.where(lengths[counts == 0] > 0, 1, 0)
        counts[1] += n_int - counts.sum()
        pieces = [np.linspace(lo, a, counts[0] + 1)[:-1] if counts[0] else np.empty(0)]
        pieces.append(np.linspace(a, b, counts[1] + 1))
        pieces.append(np.linspace(b, hi, counts[2] + 1)[1:] if counts[2] else np.empty(0))
        xs = np.concatenate(pieces)
        xs[counts[0]] = a
        xs[counts[0] + counts[1]] = b
        return xs


@dataclass(frozen=True)
class TolSpec:
    interior: float = 1e-6
    exterior: float = 1e-8
    gradient: float = 1e-8
    pasting: float = 1e-6


@dataclass
class HjbGridSolution:
    xs: np.ndarray
    u: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    lambda_star: float
    pair: BarrierPair
    k: np.ndarray = field(repr=False, default=None)
    rho: np.ndarray = field(repr=False, default=None)

    @property
    def interior(self):
        return (self.xs >= self.pair.a) & (self.xs <= self.pair.b)


@dataclass
class HjbReport:
    max_interior_residual: float
    max_exterior_violation: float
    gradient_violations: int
    worst_gradient_violation: float
    pasting: tuple
    bounded_below: bool
    nonnegative: bool
    passed: bool
    residual: np.ndarray = field(repr=False, default=None)

    def summary(self):
        p = ", ".join(f"{v:.3e}" for v in self.pasting)
        variant = "nonnegative" if self.nonnegative else ("bounded below" if self.bounded_below else "unbounded")
        return "\n".join(
            [
                f"max interior residual  = {self.max_interior_residual:.3e}",
                f"max exterior violation = {self.max_exterior_violation:.3e}",
                f"gradient violations    = {self.gradient_violations} (worst {self.worst_gradient_violation:.3e})",
                f"pasting (u'(a)-c2, u'(b)-c1, u''(a), u''(b)) = {p}",
                f"u on the grid: {variant}",
                f"passed = {self.passed}",
            ]
        )


def build_hjb(cache: ScaleSpeedCache, reward: RewardModel, solution: BarrierSolution, grid_spec: GridSpec = None, xs=None):
    """Sample u, u', u'' on a grid that contains a* and b* exactly."""
    model = cache.model
    a, b, lam = solution.a, solution.b, solution.lambda_star
    if xs is None:
        xs = (grid_spec or GridSpec()).build(a, b, model.domain_cap)
    else:
        xs = np.asarray(xs, dtype=float)
        if np.any(np.diff(xs) <= 0):
            raise ArgumentError("grid must be strictly increasing")
        if not (np.any(xs == a) and np.any(xs == b)):
            raise ArgumentError("grid must contain both barriers exactly")
    inside = (xs >= a) & (xs <= b)
    xi = xs[inside]
    c1, c2 = reward.c1, reward.c2

    cum = cache.cumulative_m(lambda x: pi(reward, model, 1, x) - lam, xi)
    k = cum[-1] - cum
    k[-1] = 0.0
    log_s = cache.log_scale_many(xi)
    u1_in = c1 + 2.0 * np.exp(log_s) * k
    sig2 = cache.sigma2(xi)
    u2_in = 2.0 / sig2 * (lam - evaluate(reward.h, xi) - model.mu(xi) * u1_in)

    u1 = np.where(xs < a, c2, c1).astype(float)
    u2 = np.zeros_like(xs)
    u1[inside], u2[inside] = u1_in, u2_in

    # cumulative integral of u' anchored at u(a*) = c1 a*; the Hermite
    # correction uses the stored u''
    dx = np.diff(xs)
    inc = dx * (u1[:-1] + u1[1:]) / 2 + dx**2 * (u2[:-1] - u2[1:]) / 12
    u = np.concatenate([[0.0], np.cumsum(inc)])
    ia = int(np.flatnonzero(xs == a)[0])
    u += c1 * a - u[ia]

    k_full = np.full_like(xs, np.nan)
    rho = np.full_like(xs, np.nan)
    k_full[inside] = k
    rho[inside] = k + (c1 - c2) * np.exp(-log_s) / 2
    return HjbGridSolution(xs, u, u1, u2, lam, solution.pair, k_full, rho)


def generator_residual(cache: ScaleSpeedCache, reward: RewardModel, sol: HjbGridSolution):
    """L u + h - lambda* at every grid point."""
    model = cache.model
    xs = sol.xs
    return 0.5 * cache.sigma2(xs) * sol.u2 + model.mu(xs) * sol.u1 + evaluate(reward.h, xs) - sol.lambda_star


def verify_hjb(cache: ScaleSpeedCache, reward: RewardModel, sol: HjbGridSolution, tol_spec: TolSpec = None):
    """Evaluate the variational inequality on the grid; findings are report fields."""
    tol = tol_spec or TolSpec()
    res = generator_residual(cache, reward, sol)
    inside = sol.interior
    a, b = sol.pair.a, sol.pair.b
    interior = float(np.max(np.abs(res[inside]), initial=0.0))
    exterior = float(np.max(np.maximum(res[~inside], 0.0), initial=0.0))
    over = np.maximum(sol.u1 - reward.c2, reward.c1 - sol.u1)
    bad = over > tol.gradient
    ia = int(np.flatnonzero(sol.xs == a)[0])
    ib = int(np.flatnonzero(sol.xs == b)[0])
    pasting = (
        float(sol.u1[ia] - reward.c2),
        float(sol.u1[ib] - reward.c1),
        float(sol.u2[ia]),
        float(sol.u2[ib]),
    )
    increasing = bool(np.all(np.diff(sol.u) > 0))
    passed = (
        interior <= tol.interior
        and exterior <= tol.exterior
        and not bad.any()
        and all(abs(p) <= tol.pasting for p in pasting)
    )
    return HjbReport(
        max_interior_residual=interior,
        max_exterior_violation=exterior,
        gradient_violations=int(bad.sum()),
        worst_gradient_violation=float(max(over.max(), 0.0)),
        pasting=pasting,
        bounded_below=increasing and float(sol.u.min()) == float(sol.u[0]),
        nonnegative=bool(sol.u.min() >= 0),
        passed=bool(passed),
        residual=res,
    )

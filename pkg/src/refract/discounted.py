"""Discounted problem by shooting, and the vanishing-discount sweep.

On [a_r, b_r] the value solves rV = (sigma^2/2) V'' + mu V' + h with
V'(a_r) = c2, V''(a_r) = 0, V'(b_r) = c1, V''(b_r) = 0.  Launching at a with
V(a) = pi_2(a)/r, V'(a) = c2 fixes the trajectory, so the free boundary
problem is a one-dimensional root search in a.

Shots are classified by how V' leaves the band (c1, c2):

* ``crossing``: V' falls through c1 while still decreasing (a too small);
* ``tangent``: V' turns (V'' = 0) above c1 (a too large);
* ``invalid``: V' rises above c2 from the start (a too large).

At the root the turning point touches c1, which gives both pasting
conditions at b_r.  The terminal residual rV(b) - pi_1(b) equals
sigma^2 V''(b)/2 <= 0 at every downward crossing, so it cannot change sign
and is not used for bracketing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .barrier import BarrierSolution
from .diffusion import RewardModel, ScaleSpeedCache, pi
from .errors import ArgumentError, NoSolutionError, RefractError, ShootingError, SolverError

CROSSING, TANGENT, INVALID, NO_CROSSING = "crossing", "tangent", "invalid", "no-crossing"
# which side of the root an outcome lies on
SIDE = {CROSSING: -1, TANGENT: 1, INVALID: 1, NO_CROSSING: 1}


@dataclass(frozen=True)
class IntegratorOptions:
    rtol: float = 1e-10
    atol: float = 1e-12
    a_xtol: float = 1e-13
    grid_points: int = 401


@dataclass
class Shot:
    a: float
    outcome: str
    b: float = math.nan
    V_b: float = math.nan
    V1_b: float = math.nan
    V2_b: float = math.nan
    sol: object = field(default=None, repr=False)

    @property
    def side(self):
        return SIDE[self.outcome]


def _rhs_factory(model, reward, r):
    drift, vol, h = model.drift, model.vol, reward.h

    def rhs(x, y):
        s = float(vol(x))
        return (y[1], 2.0 / (s * s) * (r * y[0] - float(drift(x)) * y[1] - float(h(x))))

    return rhs


def _slope(f, x):
    step = 1e-6 * x
    return (f(x + step) - f(x - step)) / (2 * step)


def shoot(cache: ScaleSpeedCache, reward: RewardModel, r, a, opts: IntegratorOptions = None) -> Shot:
    """Integrate from a with V = pi_2(a)/r, V' = c2, V'' = 0 until V' leaves the band."""
    opts = opts or IntegratorOptions()
    model = cache.model
    if not r > 0:
        raise ArgumentError(f"r must be positive, got {r}")
    if not 0 < a < model.domain_cap:
        raise ArgumentError(f"a must lie in (0, domain_cap), got {a}")
    c1, c2 = reward.c1, reward.c2
    p2 = lambda x: float(pi(reward, model, 2, x))  # noqa: E731
    sig2 = float(cache.sigma2(a))
    # V'''(a+) from differentiating the ODE at the launch point
    v3 = 2.0 / sig2 * (r * c2 - _slope(p2, a))
    if v3 > 0:
        return Shot(a, INVALID, a, p2(a) / r, c2, 0.0)
    rhs = _rhs_factory(model, reward, r)

    def crossed(x, y):
        return y[1] - c1

    crossed.terminal, crossed.direction = True, -1

    def turned(x, y):
        return rhs(x, y)[1]

    turned.terminal, turned.direction = True, 1

    def exited(x, y):
        return y[1] - c2

    exited.terminal, exited.direction = True, 1

    sol = solve_ivp(
        rhs,
        (a, model.domain_cap),
        (p2(a) / r, c2),
        method="RK45",
        rtol=opts.rtol,
        atol=opts.atol,
        events=(crossed, turned, exited),
        dense_output=True,
    )
    if sol.status == -1:
        raise ShootingError(f"integration from a={a} failed: {sol.message}")
    hits = [(ev[0], k) for k, ev in enumerate(sol.t_events) if len(ev)]
    if not hits:
        V, V1 = sol.y[:, -1]
        return Shot(a, NO_CROSSING, sol.t[-1], V, V1, rhs(sol.t[-1], (V, V1))[1], sol)
    b, k = min(hits)
    V, V1 = sol.sol(b)
    outcome = (CROSSING, TANGENT, INVALID)[k]
    if outcome == TANGENT and V1 <= c1:
        outcome = CROSSING
    return Shot(a, outcome, float(b), float(V), float(V1), float(rhs(b, (V, V1))[1]), sol)


@dataclass
class DiscountedSolution:
    r: float
    a_r: float
    b_r: float
    xs: np.ndarray
    V: np.ndarray
    V1: np.ndarray
    shoot_residual: float
    launch_residual: float
    c1: float
    c2: float
    iterations: int = 0
    sol: object = field(default=None, repr=False)

    def V_at(self, x):
        """Value with linear continuation (slope c2 below a_r, c1 above b_r)."""
        x = np.asarray(x, dtype=float)
        inner = np.clip(x, self.a_r, self.b_r)
        v = self.sol.sol(inner)[0] if self.sol is not None else np.interp(inner, self.xs, self.V)
        out = v + self.c2 * np.minimum(x - self.a_r, 0.0) + self.c1 * np.maximum(x - self.b_r, 0.0)
        return float(out) if out.ndim == 0 else out

    def V_zero(self):
        """V(0+) = V(a_r) - c2 a_r."""
        return float(self.V[0]) - self.c2 * self.a_r

    def exterior_margin(self, cache: ScaleSpeedCache, reward: RewardModel, xs):
        """rV - LV - h at points outside [a_r, b_r] (should be >= 0)."""
        xs = np.asarray(xs, dtype=float)
        model = cache.model
        which = np.where(xs < self.a_r, 2, 1)
        p = np.where(which == 2, pi(reward, model, 2, xs), pi(reward, model, 1, xs))
        return self.r * self.V_at(xs) - p


def _finish(cache, reward, r, shot: Shot, opts, iterations):
    model = cache.model
    xs = np.linspace(shot.a, shot.b, opts.grid_points)
    V, V1 = shot.sol.sol(xs)
    V[0], V1[0] = shot.sol.y[0, 0], shot.sol.y[1, 0]
    V[-1], V1[-1] = shot.V_b, shot.V1_b
    return DiscountedSolution(
        r=r,
        a_r=shot.a,
        b_r=shot.b,
        xs=xs,
        V=V,
        V1=V1,
        shoot_residual=r * shot.V_b - float(pi(reward, model, 1, shot.b)),
        launch_residual=r * V[0] - float(pi(reward, model, 2, shot.a)),
        c1=reward.c1,
        c2=reward.c2,
        iterations=iterations,
        sol=shot.sol,
    )


def solve_discounted(
    cache: ScaleSpeedCache,
    reward: RewardModel,
    r,
    bracket_hint: Optional[float] = None,
    bounds=(0.0, math.inf),
    opts: IntegratorOptions = None,
    max_expansions: int = 40,
) -> DiscountedSolution:
    """Find a_r by bisection on the shot outcome, starting from a bracket around the hint."""
    opts = opts or IntegratorOptions()
    model = cache.model
    if bracket_hint is None:
        from .shape import find_peaks_and_b0

        bracket_hint = find_peaks_and_b0(reward, model).xhat2 / 2
    hint = float(bracket_hint)
    if not 0 < hint < model.domain_cap:
        raise ArgumentError(f"bracket_hint must lie in (0, domain_cap), got {hint}")
    probes = []

    def probe(a):
        try:
            s = shoot(cache, reward, r, a, opts)
        except (RefractError, ArithmeticError) as exc:
            probes.append((a, f"error: {exc}"))
            raise
        probes.append((a, s.outcome))
        return s

    first = probe(hint)
    lo = hi = None
    if first.side < 0:
        lo = first
    else:
        hi = first
    factor = 1.25
    for _ in range(max_expansions):
        if lo is not None and hi is not None:
            break
        try:
            if lo is None:
                s = probe(hi.a / factor)
                lo, hi = (s, hi) if s.side < 0 else (None, s)
            else:
                a = min(lo.a * factor, 0.5 * (lo.a + model.domain_cap))
                s = probe(a)
                lo, hi = (lo, s) if s.side > 0 else (s, None)
        except (RefractError, ArithmeticError):
            break
        factor *= 1.25
    if lo is None or hi is None:
        raise NoSolutionError(f"no bracket for a_r at r={r}: probes {probes[-6:]}", probes)

    iterations = 0
    while hi.a - lo.a > opts.a_xtol * hi.a:
        mid = probe(0.5 * (lo.a + hi.a))
        iterations += 1
        if mid.side < 0:
            lo = mid
        else:
            hi = mid
    # the tangent side carries the pasting point b_r as the turning point of V'
    best = hi if hi.outcome == TANGENT else lo
    if best.outcome not in (TANGENT, CROSSING):
        raise SolverError(f"bracket collapsed onto an {best.outcome} shot at a={best.a}")
    sol = _finish(cache, reward, r, best, opts, iterations)
    k1, k2 = bounds
    if not (k1 <= sol.a_r < sol.b_r <= k2):
        raise SolverError(f"(a_r, b_r)=({sol.a_r:.6g}, {sol.b_r:.6g}) outside sanity bounds [{k1}, {k2}]")
    band = (sol.V1 < reward.c1 - 1e-8) | (sol.V1 > reward.c2 + 1e-8)
    if band.any():
        raise SolverError(f"V' leaves [c1, c2] at x={sol.xs[band][0]:.6g}")
    return sol


@dataclass
class AbelianRow:
    r: float
    a_r: float
    b_r: float
    rv: float
    dev_lambda: float
    dev_a: float
    dev_b: float
    error: Optional[str] = None


@dataclass
class AbelianTable:
    x_eval: float
    lambda_star: float
    rows: list
    solutions: list = field(default_factory=list, repr=False)

    def deviations(self):
        return np.array([row.dev_lambda for row in self.rows])

    def ok_rows(self):
        return [row for row in self.rows if row.error is None]


def abelian_sweep(
    cache: ScaleSpeedCache,
    reward: RewardModel,
    rs: Sequence[float],
    x_eval: Optional[float],
    barrier_solution: BarrierSolution,
    warm_start=True,
    opts: IntegratorOptions = None,
) -> AbelianTable:
    """rV_r(x_eval), a_r, b_r along a decreasing sequence of discount rates."""
    rs = [float(r) for r in rs]
    if any(r <= 0 for r in rs) or any(r2 >= r1 for r1, r2 in zip(rs, rs[1:])):
        raise ArgumentError("rs must be positive and strictly decreasing")
    a_star, b_star, lam = barrier_solution.a, barrier_solution.b, barrier_solution.lambda_star
    x = 0.5 * (a_star + b_star) if x_eval is None else float(x_eval)
    rows, sols = [], []
    hint = a_star
    for r in rs:
        try:
            s = solve_discounted(cache, reward, r, hint, opts=opts)
        except (RefractError, ArithmeticError) as exc:
            nan = math.nan
            rows.append(AbelianRow(r, nan, nan, nan, nan, nan, nan, str(exc)))
            sols.append(None)
            continue
        rv = r * s.V_at(x)
        rows.append(AbelianRow(r, s.a_r, s.b_r, rv, abs(rv - lam), abs(s.a_r - a_star), abs(s.b_r - b_star)))
        sols.append(s)
        if warm_start:
            hint = s.a_r
    return AbelianTable(x, lam, rows, sols)

"""Long-run reward of (a, b)-reflection policies and the optimal barrier pair.

For a policy that reflects the diffusion at a (injecting, cost c2 per unit)
and at b (harvesting, reward c1 per unit) the long-run average reward is::

    lambda(a, b) = (c1 / s(b) - c2 / s(a) + 2 int_a^b h m) / (2 M[a, b])

The optimum is found by the monotone construction through
ell(a) = M[a, b_a] (lambda(a, b_a) - pi_2(a)), where b_a solves
pi_1(b_a) = pi_2(a) on the decreasing branch of pi_1.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .diffusion import RewardModel, ScaleSpeedCache, pi
from .errors import ArgumentError, AssumptionError, NoSolutionError, RangeError, RefractError, SolverError
from .shape import ShapeReport

log = logging.getLogger(__name__)

CASE_I = "case-i"
CASE_II = "case-ii"
ROOT_XTOL = 1e-10
MAX_NEWTON = 10
MAX_PROBE_HALVINGS = 60


@dataclass(frozen=True)
class BarrierPair:
    a: float
    b: float

    def __post_init__(self):
        if not (0 < self.a < self.b and math.isfinite(self.b)):
            raise ArgumentError(f"need 0 < a < b, got a={self.a}, b={self.b}")

    def within(self, cap):
        if self.b > cap * (1 + 1e-12):
            raise ArgumentError(f"b={self.b} exceeds domain_cap={cap}")
        return self


@dataclass
class SolverOptions:
    xtol: float = ROOT_XTOL
    polish: bool = True
    max_newton: int = MAX_NEWTON
    force: bool = False


@dataclass
class BarrierSolution:
    pair: BarrierPair
    lambda_star: float
    foc_residuals: tuple
    grad_at_solution: tuple
    iterations: int
    method: str
    case_tag: str
    speed_measure: float = math.nan
    diagnostics: list = field(default_factory=list)

    @property
    def a(self):
        return self.pair.a

    @property
    def b(self):
        return self.pair.b

    def summary(self):
        r1, r2 = self.foc_residuals
        g1, g2 = self.grad_at_solution
        lines = [
            f"a*      = {self.a:.12g}",
            f"b*      = {self.b:.12g}",
            f"lambda* = {self.lambda_star:.12g}",
            f"R1, R2  = {r1:.3e}, {r2:.3e}",
            f"grad    = {g1:.3e}, {g2:.3e}",
            f"case {self.case_tag}, method {self.method}, {self.iterations} iterations",
        ]
        lines += [f"note: {d}" for d in self.diagnostics]
        return "\n".join(lines)


@dataclass
class SweepResult:
    a_grid: np.ndarray
    b_grid: np.ndarray
    lambda_table: np.ndarray
    argmax: BarrierPair

    def rows(self):
        for i, a in enumerate(self.a_grid):
            for j, b in enumerate(self.b_grid):
                if a < b:
                    yield a, b, self.lambda_table[i, j]


def _pair(cache, pair):
    return pair.within(cache.model.domain_cap)


def _parts(cache: ScaleSpeedCache, reward: RewardModel, pair: BarrierPair):
    a, b = _pair(cache, pair).a, pair.b
    M = cache.speed_measure(a, b)
    hm = cache.integrate_m(reward.h, a, b)
    return M, hm, cache.inv_scale_density(a), cache.inv_scale_density(b)


def lambda_ab(cache: ScaleSpeedCache, reward: RewardModel, pair: BarrierPair):
    """Long-run average reward of the (a, b)-reflection policy."""
    M, hm, inv_sa, inv_sb = _parts(cache, reward, pair)
    return (reward.c1 * inv_sb - reward.c2 * inv_sa + 2.0 * hm) / (2.0 * M)


def lambda_via_stationary(cache: ScaleSpeedCache, reward: RewardModel, pair: BarrierPair):
    """The same reward written against the stationary law pi = m / M[a, b]."""
    M, hm, inv_sa, inv_sb = _parts(cache, reward, pair)
    return hm / M + reward.c1 * inv_sb / (2.0 * M) - reward.c2 * inv_sa / (2.0 * M)


def local_time_rates(cache: ScaleSpeedCache, pair: BarrierPair):
    """Stationary rates (L_a(T)/T, L_b(T)/T) = (1/(2 M s(a)), 1/(2 M s(b)))."""
    M = cache.speed_measure(_pair(cache, pair).a, pair.b)
    return cache.inv_scale_density(pair.a) / (2 * M), cache.inv_scale_density(pair.b) / (2 * M)


def grad_lambda(cache: ScaleSpeedCache, reward: RewardModel, pair: BarrierPair):
    """(d lambda / da, d lambda / db)."""
    model = cache.model
    lam = lambda_ab(cache, reward, pair)
    M = cache.speed_measure(pair.a, pair.b)
    da = cache.speed_density(pair.a) / M * (lam - pi(reward, model, 2, pair.a))
    db = cache.speed_density(pair.b) / M * (pi(reward, model, 1, pair.b) - lam)
    return float(da), float(db)


def foc_residuals(cache: ScaleSpeedCache, reward: RewardModel, pair: BarrierPair):
    """(R1, R2); R1 = M (lambda - pi_2(a)) and R2 = M (lambda - pi_1(b)) identically."""
    model = cache.model
    a, b = _pair(cache, pair).a, pair.b
    p2a = float(pi(reward, model, 2, a))
    p1b = float(pi(reward, model, 1, b))
    dc = reward.c1 - reward.c2
    r1 = cache.integrate_m(lambda x: pi(reward, model, 2, x) - p2a, a, b) + dc * cache.inv_scale_density(b) / 2
    r2 = cache.integrate_m(lambda x: pi(reward, model, 1, x) - p1b, a, b) + dc * cache.inv_scale_density(a) / 2
    return r1, r2


# ------------------------------------------------------------- construction
@dataclass(frozen=True)
class CaseInfo:
    """Which branch of the construction applies and the admissible a-range (0, a_hi]."""

    tag: str
    a_hi: float
    pi1_peak: float
    pi2_peak: float


def case_info(cache: ScaleSpeedCache, reward: RewardModel, shape: ShapeReport) -> CaseInfo:
    model = cache.model
    if shape.b0 is None or not (shape.xhat1 > 0 and shape.xhat2 > 0):
        raise AssumptionError("the shape report has no usable peaks or b0")
    p1 = float(pi(reward, model, 1, shape.xhat1))
    p2 = float(pi(reward, model, 2, shape.xhat2))
    if p2 >= p1 - 1e-12 * (1 + abs(p1)):
        # y1 <= xhat2 with pi_2(y1) = pi_1(xhat1); ties resolve here with y1 = xhat2
        g = lambda y: float(pi(reward, model, 2, y)) - p1  # noqa: E731
        if g(shape.xhat2) <= 0:
            return CaseInfo(CASE_I, shape.xhat2, p1, p2)
        lo = shape.xhat2
        while g(lo) >= 0:
            lo /= 2
            if lo < 1e-300:
                raise AssumptionError("pi_2 does not drop below max pi_1 near 0")
        y1 = optimize.bisect(g, lo, shape.xhat2, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        return CaseInfo(CASE_I, float(y1), p1, p2)
    return CaseInfo(CASE_II, shape.xhat2, p1, p2)


def b_of_a(cache: ScaleSpeedCache, reward: RewardModel, a, shape: ShapeReport, info: CaseInfo = None):
    """The b on the decreasing branch of pi_1 with pi_1(b) = pi_2(a)."""
    model = cache.model
    info = info or case_info(cache, reward, shape)
    if not 0 < a <= info.a_hi * (1 + 1e-14):
        bound = "y1" if info.tag == CASE_I else "xhat2"
        raise RangeError(f"a={a} lies outside (0, {bound}={info.a_hi:.12g}] ({info.tag})")
    target = float(pi(reward, model, 2, min(a, info.a_hi)))
    g = lambda x: float(pi(reward, model, 1, x)) - target  # noqa: E731
    lo = shape.xhat1
    if g(lo) <= 0:
        return lo
    hi = shape.b0 if info.tag == CASE_I and target >= 0 else model.domain_cap
    if g(hi) > 0:
        raise RangeError(
            f"pi_1 stays above pi_2(a)={target:.6g} up to x={hi:.6g}; raise domain_cap to continue"
        )
    return float(optimize.bisect(g, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps))


def ell_forms(cache: ScaleSpeedCache, reward: RewardModel, a, shape: ShapeReport, info: CaseInfo = None):
    """ell(a) in its direct, pi_2-centred and pi_1-centred forms."""
    b = b_of_a(cache, reward, a, shape, info)
    return (ell(cache, reward, a, shape, info),) + tuple(foc_residuals(cache, reward, BarrierPair(a, b)))


def ell(cache: ScaleSpeedCache, reward: RewardModel, a, shape: ShapeReport, info: CaseInfo = None):
    model = cache.model
    b = b_of_a(cache, reward, a, shape, info)
    if b <= a:
        raise RangeError(f"b_a={b} does not exceed a={a}")
    M = cache.speed_measure(a, b)
    hm = cache.integrate_m(reward.h, a, b)
    inv_sa, inv_sb = cache.inv_scale_density(a), cache.inv_scale_density(b)
    return hm - float(pi(reward, model, 1, b)) * M + reward.c1 * inv_sb / 2 - reward.c2 * inv_sa / 2


def _slope(f, x):
    step = 1e-6 * max(1.0, abs(x))
    step = min(step, 0.5 * x)
    return (f(x + step) - f(x - step)) / (2 * step)


def _newton_polish(cache, reward, pair, max_steps, diagnostics):
    """Damped Newton on (lambda - pi_2(a), lambda - pi_1(b)); halve until both |R_i| drop."""
    model = cache.model
    p1 = lambda x: float(pi(reward, model, 1, x))  # noqa: E731
    p2 = lambda x: float(pi(reward, model, 2, x))  # noqa: E731

    def residuals(p):
        r = foc_residuals(cache, reward, p)
        return np.abs(r), r

    cur_abs, _ = residuals(pair)
    steps = 0
    for _ in range(max_steps):
        lam = lambda_ab(cache, reward, pair)
        F = np.array([lam - p2(pair.a), lam - p1(pair.b)])
        ga, gb = grad_lambda(cache, reward, pair)
        J = np.array([[ga - _slope(p2, pair.a), gb], [ga, gb - _slope(p1, pair.b)]])
        try:
            delta = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            diagnostics.append("newton: singular Jacobian, kept bisection result")
            break
        t, accepted = 1.0, False
        while t > 1e-6:
            a, b = pair.a + t * delta[0], pair.b + t * delta[1]
            if 0 < a < b <= model.domain_cap:
                trial = BarrierPair(a, b)
                new_abs, _ = residuals(trial)
                if np.all(new_abs < cur_abs):
                    pair, cur_abs, accepted = trial, new_abs, True
                    break
            t /= 2
        if not accepted:
            break
        steps += 1
    return pair, steps


def solve_barriers(cache: ScaleSpeedCache, reward: RewardModel, shape: ShapeReport, opts: SolverOptions = None):
    """Optimal (a*, b*, lambda*) by bisection of ell, then an optional Newton polish."""
    opts = opts or SolverOptions()
    model = cache.model
    diagnostics = []
    if not shape.solver_ready:
        failed = [k for k in ("regular_at_zero", "unimodal_pi1", "unimodal_pi2", "b0_exists", "liminf_condition")
                  if not shape.flags.get(k, False)]
        if not opts.force:
            raise AssumptionError(
                f"structural checks failed: {', '.join(failed)}; the optimal pair may not exist "
                "or be unique (use force to run anyway)"
            )
        diagnostics.append(f"forced past failed checks ({', '.join(failed)}); uniqueness is not guaranteed")
        log.warning(diagnostics[-1])

    info = case_info(cache, reward, shape)
    f = lambda a: ell(cache, reward, a, shape, info)  # noqa: E731
    probes = []
    hi = info.a_hi
    try:
        l_hi = f(hi)
    except RefractError as exc:
        raise NoSolutionError(f"ell cannot be evaluated at the range end a={hi}: {exc}") from exc
    probes.append((hi, l_hi))
    if l_hi > 0:
        raise NoSolutionError(f"ell({hi:.6g}) = {l_hi:.6g} > 0 at the right end of the a-range", probes)

    lo = None
    if l_hi == 0:
        a_star = hi
        iterations = 0
    else:
        for k in range(1, MAX_PROBE_HALVINGS + 1):
            a = info.a_hi * 2.0**-k
            try:
                val = f(a)
            except (RefractError, OverflowError) as exc:
                diagnostics.append(f"ell probe stopped at a={a:.3g}: {exc}")
                break
            probes.append((a, val))
            if val > 0:
                lo = a
                break
            hi = a
        if lo is None:
            vals = [v for _, v in probes]
            raise NoSolutionError(
                "ell has no sign change on the probe range: "
                f"ell({probes[0][0]:.3g})={vals[0]:.6g}, ell({probes[-1][0]:.3g})={vals[-1]:.6g}",
                probes,
            )
        a_star, res = optimize.bisect(f, lo, hi, xtol=opts.xtol, rtol=4 * np.finfo(float).eps, full_output=True)
        iterations = res.iterations
    b_star = b_of_a(cache, reward, a_star, shape, info)
    pair = BarrierPair(float(a_star), float(b_star))
    method = "ell-bisection"

    if opts.polish and opts.max_newton > 0:
        try:
            polished, steps = _newton_polish(cache, reward, pair, opts.max_newton, diagnostics)
        except RefractError as exc:
            diagnostics.append(f"newton failed ({exc}); kept bisection result")
            polished, steps = pair, 0
        if steps:
            method = "both"
            iterations += steps
            pair = polished

    lam = lambda_ab(cache, reward, pair)
    sol = BarrierSolution(
        pair=pair,
        lambda_star=lam,
        foc_residuals=foc_residuals(cache, reward, pair),
        grad_at_solution=grad_lambda(cache, reward, pair),
        iterations=int(iterations),
        method=method,
        case_tag=info.tag,
        speed_measure=cache.speed_measure(pair.a, pair.b),
        diagnostics=diagnostics,
    )
    gap = max(abs(lam - float(pi(reward, model, 1, pair.b))), abs(lam - float(pi(reward, model, 2, pair.a))))
    if gap > 1e-8 * (1 + abs(lam)):
        diagnostics.append(f"lambda* differs from pi_1(b*), pi_2(a*) by {gap:.3e}")
    return sol


def solve(cache: ScaleSpeedCache, reward: RewardModel, opts: SolverOptions = None):
    """check_assumptions followed by solve_barriers."""
    from .shape import check_assumptions

    shape = check_assumptions(reward, cache.model, cache=cache)
    return solve_barriers(cache, reward, shape, opts), shape


# ------------------------------------------------------------------ sweeps
def sweep(cache: ScaleSpeedCache, reward: RewardModel, a_grid, b_grid):
    """lambda(a, b) on a grid, NaN where a >= b."""
    a_grid = np.asarray(a_grid, dtype=float)
    b_grid = np.asarray(b_grid, dtype=float)
    for name, g in (("a_grid", a_grid), ("b_grid", b_grid)):
        if g.ndim != 1 or g.size == 0:
            raise ArgumentError(f"{name} must be a non-empty 1-D sequence")
        if np.any(np.diff(g) < 0) or g[0] <= 0:
            raise ArgumentError(f"{name} must be sorted and positive")
    if b_grid[-1] > cache.model.domain_cap * (1 + 1e-12):
        raise ArgumentError(f"b_grid exceeds domain_cap={cache.model.domain_cap}")
    xs, inv = np.unique(np.concatenate([a_grid, b_grid]), return_inverse=True)
    ia, ib = inv[: a_grid.size], inv[a_grid.size:]
    hm = cache.cumulative_m(reward.h, xs)
    mm = cache.cumulative_m(None, xs)
    inv_s = np.exp(-cache.log_scale_many(xs))
    M = mm[ib][None, :] - mm[ia][:, None]
    H = hm[ib][None, :] - hm[ia][:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        table = (reward.c1 * inv_s[ib][None, :] - reward.c2 * inv_s[ia][:, None] + 2 * H) / (2 * M)
    table[~(a_grid[:, None] < b_grid[None, :])] = np.nan
    if np.all(np.isnan(table)):
        raise ArgumentError("the grids contain no pair with a < b")
    i, j = np.unravel_index(int(np.nanargmax(table)), table.shape)
    return SweepResult(a_grid, b_grid, table, BarrierPair(float(a_grid[i]), float(b_grid[j])))


__all__ = [
    "BarrierPair",
    "BarrierSolution",
    "CASE_I",
    "CASE_II",
    "SolverError",
    "SolverOptions",
    "SweepResult",
    "b_of_a",
    "case_info",
    "ell",
    "ell_forms",
    "foc_residuals",
    "grad_lambda",
    "lambda_ab",
    "lambda_via_stationary",
    "local_time_rates",
    "solve",
    "solve_barriers",
    "sweep",
]

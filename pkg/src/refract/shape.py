"""Shape of the reward functions pi_1, pi_2 and numerical assumption checks.

Every check is a finite-sample probe on a log-spaced grid over (0, X_max];
a true flag means "no counterexample found", never a proof.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from .diffusion import DiffusionModel, RewardModel, ScaleSpeedCache, evaluate, pi, right_limit
from .errors import ArgumentError, B0NotFoundError, RefractError

DEFAULT_SCAN_POINTS = 2048
SCAN_DECADES = 9
PEAK_XTOL = 1e-12
LIMINF_PROBES = 20

# flags the constructive barrier solver relies on
SOLVER_FLAGS = ("regular_at_zero", "unimodal_pi1", "unimodal_pi2", "b0_exists", "liminf_condition")


@dataclass
class Violation:
    flag: str
    x: float
    value: float

    def __str__(self):
        return f"{self.flag}: x={self.x:.6g}, value={self.value:.6g}"


@dataclass
class ShapeReport:
    xhat1: float
    xhat2: float
    b0: Optional[float]
    flags: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    liminf_probes: list = field(default_factory=list)

    @property
    def solver_ready(self):
        return all(self.flags.get(k, False) for k in SOLVER_FLAGS)

    @property
    def failed_flags(self):
        return [k for k, v in self.flags.items() if not v]

    def summary(self):
        lines = [f"xhat1 = {self.xhat1:.12g}", f"xhat2 = {self.xhat2:.12g}"]
        lines.append("b0    = " + ("not found" if self.b0 is None else f"{self.b0:.12g}"))
        width = max(len(k) for k in self.flags) if self.flags else 0
        for k, v in self.flags.items():
            lines.append(f"  {k:<{width}}  {'ok' if v else 'FAIL'}")
        for v in self.violations:
            lines.append(f"  violation {v}")
        return "\n".join(lines)


def scan_grid(cap, n=DEFAULT_SCAN_POINTS):
    return np.geomspace(cap * 10.0 ** (-SCAN_DECADES), cap, n)


def _tol(values):
    return 1e-12 * max(1.0, float(np.max(np.abs(values[np.isfinite(values)]), initial=0.0)))


def _peak(f, xs, values, name, violations):
    """Grid argmax refined by golden section; unimodality recorded, not assumed."""
    i = int(np.argmax(values))
    tol = _tol(values)
    left, right = np.diff(values[: i + 1]), np.diff(values[i:])
    ok = True
    for j in np.flatnonzero(left < -tol):
        violations.append(Violation(name, float(xs[j + 1]), float(left[j])))
        ok = False
    for j in np.flatnonzero(right > tol):
        violations.append(Violation(name, float(xs[i + j + 1]), float(right[j])))
        ok = False
    if i == 0 or i == len(xs) - 1:
        violations.append(Violation(name, float(xs[i]), float(values[i])))
        return float(xs[i]), False
    if not (values[i] > values[0] + tol and values[i] > values[-1] + tol):
        violations.append(Violation(name, float(xs[i]), float(values[i])))
        ok = False
    lo, mid, hi = float(xs[i - 1]), float(xs[i]), float(xs[i + 1])
    if values[i - 1] == values[i] or values[i + 1] == values[i]:
        return mid, ok
    x = optimize.golden(lambda t: -f(t), brack=(lo, mid, hi), tol=PEAK_XTOL / (2 * mid))
    x = float(min(max(x, lo), hi))
    # a flat top limits golden section to ~sqrt(eps); polish on the slope
    step = 1e-5 * x
    slope = lambda t: (f(t + step) - f(t - step)) / (2 * step)  # noqa: E731
    a, b = max(lo, x * (1 - 1e-4)), min(hi, x * (1 + 1e-4))
    if a > step and slope(a) > 0 > slope(b):
        x = optimize.brentq(slope, a, b, xtol=PEAK_XTOL, rtol=4 * np.finfo(float).eps)
    return float(x), ok


def find_peaks_and_b0(reward: RewardModel, model: DiffusionModel, search_cap=None, n=DEFAULT_SCAN_POINTS):
    """Locate xhat_1, xhat_2 and the root b0 of pi_1 beyond xhat_1."""
    cap = model.domain_cap if search_cap is None else float(search_cap)
    if not 0 < cap <= model.domain_cap * (1 + 1e-12):
        raise ArgumentError(f"search_cap={cap} must lie in (0, domain_cap={model.domain_cap}]")
    xs = scan_grid(cap, n)
    report = ShapeReport(math.nan, math.nan, None)
    peaks = []
    for which in (1, 2):
        vals = np.asarray(pi(reward, model, which, xs), dtype=float)
        name = f"unimodal_pi{which}"
        if not np.all(np.isfinite(vals)):
            j = int(np.flatnonzero(~np.isfinite(vals))[0])
            report.violations.append(Violation(name, float(xs[j]), float(vals[j])))
            report.flags[name] = False
            peaks.append((float(xs[0]), vals))
            continue
        xhat, ok = _peak(lambda t, w=which: float(pi(reward, model, w, t)), xs, vals, name, report.violations)
        report.flags[name] = ok
        peaks.append((xhat, vals))
    (report.xhat1, pi1_vals), (report.xhat2, _) = peaks
    if report.flags["unimodal_pi1"] and report.flags["unimodal_pi2"] and not report.xhat2 < report.xhat1:
        report.violations.append(Violation("peak_order", report.xhat2, report.xhat1))

    f1 = lambda t: float(pi(reward, model, 1, t))  # noqa: E731
    top = f1(report.xhat1)
    beyond = np.flatnonzero((xs > report.xhat1) & (pi1_vals < 0))
    if not top > 0 or beyond.size == 0:
        report.flags["b0_exists"] = False
        raise B0NotFoundError(
            f"pi_1 has no sign change on [xhat1={report.xhat1:.6g}, {cap:.6g}] "
            f"(pi_1(xhat1)={top:.6g}, pi_1(cap)={pi1_vals[-1]:.6g})",
            report,
        )
    hi = float(xs[beyond[0]])
    report.b0 = float(optimize.bisect(f1, report.xhat1, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps))
    report.flags["b0_exists"] = True
    return report


def positive_pair_probe(cache: ScaleSpeedCache, reward: RewardModel, xs):
    """max over grid pairs a < b of int_a^b h m + c1/(2 s(b)) - c2/(2 s(a))."""
    cum = cache.cumulative_m(reward.h, xs)
    inv_s = np.exp(-cache.log_scale_many(xs))
    q = (cum[None, :] - cum[:, None]) + reward.c1 * inv_s[None, :] / 2 - reward.c2 * inv_s[:, None] / 2
    q[np.tril_indices(len(xs))] = -np.inf
    i, j = np.unravel_index(int(np.argmax(q)), q.shape)
    return float(q[i, j]), float(xs[i]), float(xs[j])


def liminf_probe(cache: ScaleSpeedCache, reward: RewardModel, model: DiffusionModel, b0, k_max=LIMINF_PROBES):
    """int_a^{b0} (pi_1 - pi_1(b0)) m + (c1 - c2)/(2 s(a)) at a = 2^-k, k = 1..k_max."""
    pib0 = float(pi(reward, model, 1, b0))
    f = lambda y: pi(reward, model, 1, y) - pib0  # noqa: E731
    out = []
    for k in range(1, k_max + 1):
        a = 2.0**-k
        if a >= b0:
            continue
        try:
            val = cache.integrate_m(f, a, b0) + (reward.c1 - reward.c2) * cache.inv_scale_density(a) / 2
        except (OverflowError, RefractError):
            break
        if not math.isfinite(val):
            break
        out.append((a, val))
    return out


def check_assumptions(reward: RewardModel, model: DiffusionModel, grid_size=DEFAULT_SCAN_POINTS, cache=None):
    """Probe every modelling assumption numerically; failures become flags, never exceptions."""
    if grid_size < 100:
        raise ArgumentError(f"grid_size must be at least 100, got {grid_size}")
    cache = cache or ScaleSpeedCache(model)
    cap = model.domain_cap
    xs = scan_grid(cap, grid_size)
    try:
        report = find_peaks_and_b0(reward, model, cap, grid_size)
    except B0NotFoundError as exc:
        report = exc.report
    except RefractError:
        report = ShapeReport(math.nan, math.nan, None)
        report.violations.append(Violation("shape_scan", math.nan, math.nan))
    flags = {}
    viol = report.violations
    tol = 1e-8

    def guarded(name, fn):
        try:
            flags[name] = bool(fn())
        except (RefractError, ArithmeticError, ValueError):
            flags[name] = False
            viol.append(Violation(name, math.nan, math.nan))

    h_vals = np.asarray(evaluate(reward.h, xs))
    p1 = np.asarray(pi(reward, model, 1, xs))
    p2 = np.asarray(pi(reward, model, 2, xs))
    for j in np.flatnonzero(h_vals < -tol)[:1]:
        viol.append(Violation("h_nonnegative", float(xs[j]), float(h_vals[j])))

    def small_x():
        v = right_limit(lambda t: pi(reward, model, 2, t), 0.0)
        if not (v <= tol):
            viol.append(Violation("pi2_small_x_nonpositive", 0.0, v))
        return v <= tol

    def tail():
        ok = p1[-1] < 0 and p1[-1] <= p1[-2]
        if not ok:
            viol.append(Violation("pi1_tail_negative", float(xs[-1]), float(p1[-1])))
        return ok

    def pair():
        coarse = xs[:: max(1, grid_size // 64)]
        q, a, b = positive_pair_probe(cache, reward, coarse)
        if not q > 0:
            viol.append(Violation("positive_reward_pair_exists", a, q))
        return q > 0

    def concave():
        slopes = np.diff(h_vals) / np.diff(xs)
        h0 = right_limit(reward.h, 0.0)
        bad = np.flatnonzero(np.diff(slopes) >= 0)
        ok = abs(h0) <= tol and np.all(slopes >= -tol) and bad.size == 0
        if not ok:
            j = int(bad[0]) if bad.size else 0
            viol.append(Violation("h_concave_increasing", float(xs[j + 1]), float(slopes[j])))
        return ok

    def legendre():
        # sup_x {h(x) - z x} is finite for all z > 0 iff the slope of h decays to 0
        tail_x = xs[xs >= cap / 10]
        slope = np.diff(evaluate(reward.h, tail_x)) / np.diff(tail_x)
        ok = slope[-1] < 0.99 * slope[0] or abs(slope[-1]) <= tol
        if not ok:
            viol.append(Violation("finite_legendre", float(tail_x[-1]), float(slope[-1])))
        return ok

    def inada():
        head = xs[: max(3, grid_size // SCAN_DECADES)]
        ratio = evaluate(reward.h, head) / head
        ok = bool(np.all(np.diff(ratio) < 0))
        if not ok:
            viol.append(Violation("inada_at_zero", float(head[0]), float(ratio[0])))
        return ok

    def regular():
        h0 = right_limit(reward.h, 0.0)
        m0 = right_limit(model.drift, 0.0)
        inc = bool(np.all(np.diff(h_vals) > 0))
        ok = abs(h0) <= tol and abs(m0) <= tol and inc
        if not ok:
            viol.append(Violation("regular_at_zero", 0.0, h0 if abs(h0) > tol else m0))
        return ok

    def liminf():
        if report.b0 is None:
            return False
        probes = liminf_probe(cache, reward, model, report.b0)
        report.liminf_probes = probes
        if len(probes) < 5:
            return False
        ok = all(v > 0 for _, v in probes[-5:])
        if not ok:
            a, v = probes[-1]
            viol.append(Violation("liminf_condition", a, v))
        return ok

    guarded("pi2_small_x_nonpositive", small_x)
    guarded("pi1_tail_negative", tail)
    guarded("positive_reward_pair_exists", pair)
    guarded("h_concave_increasing", concave)
    guarded("finite_legendre", legendre)
    guarded("inada_at_zero", inada)
    guarded("regular_at_zero", regular)
    flags["unimodal_pi1"] = report.flags.get("unimodal_pi1", False)
    flags["unimodal_pi2"] = report.flags.get("unimodal_pi2", False)
    flags["b0_exists"] = report.flags.get("b0_exists", False)
    guarded("liminf_condition", liminf)
    if not np.all(np.isfinite(p2)):
        flags["unimodal_pi2"] = False
    report.flags = flags
    return report

"""One-dimensional diffusions, running rewards, and scale/speed quadrature.

The scale density is normalised at x = 1::

    s(x) = exp(-int_1^x 2 mu(y) / sigma(y)^2 dy),    m(x) = 1 / (sigma(x)^2 s(x))

Everything is computed in log space (``log_scale``) so that models whose
scale density spans hundreds of orders of magnitude over (0, X_max] stay
finite.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np
from scipy import integrate

from .errors import (
    ArgumentError,
    DegenerateVolatilityError,
    DomainError,
    ModelError,
    ToleranceError,
)

Func = Callable[[float], float]

DEFAULT_DOMAIN_CAP = 1e3
DEFAULT_REL_TOL = 1e-10
DEFAULT_ABS_TOL = 1e-12
QUAD_LIMIT = 50


def evaluate(f, x):
    """Evaluate ``f`` at ``x``; scalars give floats, arrays give float arrays.

    Functions that only accept scalars are vectorised on the fly, and
    constant-returning functions are broadcast to the shape of ``x``.
    """
    if np.ndim(x) == 0:
        return float(f(float(x)))
    xa = np.asarray(x, dtype=float)
    try:
        y = np.asarray(f(xa), dtype=float)
    except (TypeError, ValueError):
        y = np.array([float(f(float(t))) for t in xa.ravel()]).reshape(xa.shape)
    return np.array(np.broadcast_to(y, xa.shape), dtype=float)


def right_limit(f, x=0.0, k_min=6, k_max=14):
    """Value of ``f`` at ``x``, falling back to f(x + 10^-k) for growing k."""
    try:
        v = float(f(x))
    except (ZeroDivisionError, ValueError, OverflowError):
        v = math.nan
    if math.isfinite(v):
        return v
    last = math.nan
    for k in range(k_min, k_max + 1):
        try:
            val = float(f(x + 10.0 ** (-k)))
        except (ZeroDivisionError, ValueError, OverflowError):
            continue
        if math.isfinite(val):
            last = val
    return last


@dataclass(frozen=True)
class DiffusionModel:
    """dX = mu(X) dt + sigma(X) dW on (0, domain_cap]."""

    drift: Func
    vol: Func
    name: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict)
    domain_cap: float = DEFAULT_DOMAIN_CAP

    def __post_init__(self):
        if not (self.domain_cap > 0 and math.isfinite(self.domain_cap)):
            raise ModelError(f"domain_cap must be a positive finite number, got {self.domain_cap}")

    def mu(self, x):
        return evaluate(self.drift, x)

    def sigma(self, x):
        return evaluate(self.vol, x)

    def generator(self, x, u1, u2):
        """L u = sigma^2 u''/2 + mu u'."""
        sig = self.sigma(x)
        return 0.5 * sig * sig * u2 + self.mu(x) * u1


@dataclass(frozen=True)
class RewardModel:
    """Running reward h, harvest price c1 and injection cost c2 (0 < c1 < c2)."""

    h: Func
    c1: float
    c2: float
    name: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not (self.c1 > 0):
            raise ModelError(f"c1 must be positive, got {self.c1}")
        if not (self.c2 > self.c1):
            raise ModelError(f"need 0 < c1 < c2, got c1={self.c1}, c2={self.c2}")

    def running(self, x):
        return evaluate(self.h, x)


def pi(reward: RewardModel, model: DiffusionModel, which: int, x):
    """pi_1(x) = h(x) + c1 mu(x) and pi_2(x) = h(x) + c2 mu(x)."""
    if which == 1:
        c = reward.c1
    elif which == 2:
        c = reward.c2
    else:
        raise ArgumentError(f"which must be 1 or 2, got {which}")
    if np.ndim(x) == 0 and float(x) < 0:
        raise ArgumentError(f"pi is defined for x >= 0, got {x}")
    return reward.running(x) + c * model.mu(x)


def pi_at(reward, model, which, x):
    """Scalar pi_i with right-limit evaluation at singular points."""
    return right_limit(lambda t: pi(reward, model, which, t), x)


def _key(x):
    # 14 significant digits: memo keys and the abscissa actually integrated agree
    return float(f"{x:.14e}")


class ScaleSpeedCache:
    """Scale/speed densities and measures of one model, with memoisation.

    Values depend only on the (rounded) query points, never on call order,
    so a cache can be shared between threads; ``functools.lru_cache`` is
    thread-safe.
    """

    base_point = 1.0

    def __init__(
        self,
        model: DiffusionModel,
        quad_rel_tol: float = DEFAULT_REL_TOL,
        quad_abs_tol: float = DEFAULT_ABS_TOL,
        memo_size: int = 1 << 16,
    ):
        if quad_rel_tol <= 0 or quad_abs_tol <= 0:
            raise ArgumentError("quadrature tolerances must be positive")
        self.model = model
        self._drift = model.drift
        self._vol = model.vol
        self.quad_rel_tol = quad_rel_tol
        self.quad_abs_tol = quad_abs_tol
        # the exponent of s enters every other quantity; integrate it tighter
        self._inner_rel = max(quad_rel_tol * 1e-3, 1e-13)
        self._inner_abs = quad_abs_tol * 1e-2
        # the tighter request is best effort; only the user tolerance is enforced
        self._accept = (quad_abs_tol, quad_rel_tol)
        self._log_scale_memo = functools.lru_cache(maxsize=memo_size)(self._log_scale_from_base)
        self._speed_measure_memo = functools.lru_cache(maxsize=memo_size)(self._speed_measure)

    # ------------------------------------------------------------------ checks
    def _check_point(self, x):
        if not (x > 0):
            raise ArgumentError(f"x must be positive, got {x}")
        if x > self.model.domain_cap * (1 + 1e-12):
            raise ArgumentError(f"x={x} exceeds domain_cap={self.model.domain_cap}")

    def _check_interval(self, a, b):
        if not (a > 0):
            raise ArgumentError(f"left endpoint must be positive, got {a}")
        if b < a:
            raise ArgumentError(f"reversed endpoints: a={a} > b={b}")
        if b > self.model.domain_cap * (1 + 1e-12):
            raise ArgumentError(f"b={b} exceeds domain_cap={self.model.domain_cap}")

    def sigma2(self, x):
        sig = self.model.sigma(x)
        if np.ndim(sig) == 0:
            if not math.isfinite(sig):
                raise DomainError(f"volatility is not finite at x={x}", x)
            if sig <= 0:
                raise DegenerateVolatilityError(f"sigma(x) = {sig} <= 0 at x={x}", x)
        else:
            bad = ~np.isfinite(sig)
            if bad.any():
                xb = np.asarray(x)[bad].ravel()[0]
                raise DomainError(f"volatility is not finite at x={xb}", xb)
            if (sig <= 0).any():
                xb = np.asarray(x)[sig <= 0].ravel()[0]
                raise DegenerateVolatilityError(f"sigma(x) <= 0 at x={xb}", xb)
        return sig * sig

    def _exponent(self, y):
        """2 mu(y) / sigma(y)^2 for scalar y, the integrand of -log s."""
        sig = float(self._vol(y))
        if not sig > 0:
            if math.isfinite(sig):
                raise DegenerateVolatilityError(f"sigma(x) = {sig} <= 0 at x={y}", y)
            raise DomainError(f"volatility is not finite at x={y}", y)
        val = 2.0 * float(self._drift(y)) / (sig * sig)
        if not math.isfinite(val):
            raise DomainError(f"non-finite scale integrand at x={y}", y)
        return val

    def _exponent_many(self, y):
        val = 2.0 * self.model.mu(y) / self.sigma2(y)
        if not np.all(np.isfinite(val)):
            xb = np.asarray(y)[~np.isfinite(val)].ravel()[0]
            raise DomainError(f"non-finite scale integrand at x={xb}", xb)
        return val

    # ------------------------------------------------------------- quadrature
    # Integrals over (0, X_max] are taken in u = log x: power-law behaviour
    # near 0 becomes exponential in u, which Gauss-Kronrod resolves in one
    # or two panels.
    def _quad(self, f, a, b, epsabs, epsrel, what, accept=None):
        """Adaptive quadrature; fails when the error exceeds 10x ``accept`` (default: the request)."""
        acc_abs, acc_rel = accept or (epsabs, epsrel)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            out = integrate.quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=QUAD_LIMIT, full_output=1)
        val, err = out[0], out[1]
        if not math.isfinite(val):
            raise DomainError(f"{what} on [{a}, {b}] is not finite", a)
        if len(out) > 3 and err > 10 * max(acc_abs, acc_rel * abs(val)):
            raise ToleranceError(
                f"{what} on [{a}, {b}] did not converge: estimate {val!r}, error {err:.3e}", val, err
            )
        return val

    def _quad_vec(self, F, epsabs, epsrel, what, accept=None):
        """Integrate a vector-valued F(t) over t in [0, 1]."""
        acc_abs, acc_rel = accept or (epsabs, epsrel)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            res, err, info = integrate.quad_vec(
                F, 0.0, 1.0, epsabs=epsabs, epsrel=epsrel, norm="max", limit=2000, full_output=True
            )
        if not np.all(np.isfinite(res)):
            raise DomainError(f"{what} is not finite")
        if info.status != 0 and err > 10 * max(acc_abs, acc_rel * np.max(np.abs(res))):
            raise ToleranceError(f"{what} did not converge (error {err:.3e})", res, err)
        return res

    def _exponent_integral(self, anchor, x):
        """int_anchor^x 2 mu / sigma^2 (negative when x < anchor)."""
        if x == anchor:
            return 0.0

        def f(u):
            y = anchor * math.exp(u)
            return self._exponent(y) * y

        return self._quad(f, 0.0, math.log(x / anchor), self._inner_abs, self._inner_rel, "scale exponent", self._accept)

    # ---------------------------------------------------------- scale density
    def _log_scale_from_base(self, xk):
        return -self._exponent_integral(self.base_point, xk)

    def log_scale(self, x):
        """log s(x); exactly 0 at the base point."""
        self._check_point(x)
        return self._log_scale_memo(_key(x))

    def scale_density(self, x):
        return math.exp(self.log_scale(x))

    def inv_scale_density(self, x):
        """1 / s(x), evaluated without forming s(x)."""
        return math.exp(-self.log_scale(x))

    def speed_density(self, x):
        return math.exp(-self.log_scale(x)) / self.sigma2(x)

    def log_scale_many(self, xs):
        """Vectorised log s over an array of points (one adaptive pass)."""
        xs = np.asarray(xs, dtype=float)
        if xs.size == 0:
            return np.zeros(xs.shape)
        if np.any(xs <= 0):
            raise ArgumentError("all points must be positive")
        span = np.log(xs.ravel() / self.base_point)

        def F(t):
            y = self.base_point * np.exp(t * span)
            return self._exponent_many(y) * y * span

        out = -self._quad_vec(F, self._inner_abs, self._inner_rel, "scale exponent", self._accept)
        return out.reshape(xs.shape)

    def speed_density_many(self, xs):
        xs = np.asarray(xs, dtype=float)
        return np.exp(-self.log_scale_many(xs)) / self.sigma2(xs)

    # ------------------------------------------------------------- integrals
    def integrate_m(self, f: Optional[Func], a, b):
        """int_a^b f(x) m(x) dx (f=None integrates m alone)."""
        self._check_interval(a, b)
        if a == b:
            return 0.0
        la = self.log_scale(a)

        def integrand(u):
            x = a * math.exp(u)
            sig = float(self._vol(x))
            mx = math.exp(self._exponent_integral(a, x) - la) / (sig * sig)
            if f is not None:
                fx = float(f(x))
                if not math.isfinite(fx):
                    raise DomainError(f"non-finite integrand at x={x}", x)
                mx *= fx
            return mx * x

        return self._quad(integrand, 0.0, math.log(b / a), self.quad_abs_tol, self.quad_rel_tol, "speed integral")

    def integrate_m_many(self, f: Optional[Func], los, his):
        """Vector of int_{lo_i}^{hi_i} f m, one adaptive pass for all intervals."""
        los = np.asarray(los, dtype=float)
        his = np.asarray(his, dtype=float)
        if los.shape != his.shape:
            raise ArgumentError("interval endpoint arrays differ in shape")
        if los.size == 0:
            return np.zeros(0)
        if np.any(los <= 0) or np.any(his < los):
            raise ArgumentError("intervals must satisfy 0 < lo <= hi")
        span = np.log(his / los)
        log_lo = self.log_scale_many(los)
        inner_abs, inner_rel = self._inner_abs, self._inner_rel

        def log_s(t):
            if t == 0.0:
                return log_lo

            def G(w):
                y = los * np.exp(w * t * span)
                return self._exponent_many(y) * y * (t * span)

            return log_lo - self._quad_vec(G, inner_abs, inner_rel, "scale exponent", self._accept)

        def F(t):
            x = los * np.exp(t * span)
            mx = np.exp(-log_s(t)) / self.sigma2(x)
            if f is not None:
                fx = evaluate(f, x)
                if not np.all(np.isfinite(fx)):
                    raise DomainError("non-finite integrand")
                mx = fx * mx
            return mx * x * span

        return self._quad_vec(F, self.quad_abs_tol, self.quad_rel_tol, "speed integral")

    def cumulative_m(self, f: Optional[Func], xs):
        """int_{xs[0]}^{xs[i]} f m for every grid point (xs sorted ascending)."""
        xs = np.asarray(xs, dtype=float)
        if np.any(np.diff(xs) < 0):
            raise ArgumentError("grid must be sorted ascending")
        pieces = self.integrate_m_many(f, xs[:-1], xs[1:])
        return np.concatenate([[0.0], np.cumsum(pieces)])

    def _speed_measure(self, a, b):
        return self.integrate_m(None, a, b)

    def speed_measure(self, a, b):
        """M[a, b]."""
        self._check_interval(a, b)
        if a == b:
            return 0.0
        return self._speed_measure_memo(_key(a), _key(b))

    def scale_measure(self, a, b):
        """S[a, b]."""
        self._check_interval(a, b)
        if a == b:
            return 0.0
        la = self.log_scale(a)

        def integrand(u):
            x = a * math.exp(u)
            return math.exp(la - self._exponent_integral(a, x)) * x

        return self._quad(integrand, 0.0, math.log(b / a), self.quad_abs_tol, self.quad_rel_tol, "scale integral")


def scale_density(cache: ScaleSpeedCache, x):
    return cache.scale_density(x)


def speed_density(cache: ScaleSpeedCache, x):
    return cache.speed_density(x)


def speed_measure(cache: ScaleSpeedCache, a, b):
    return cache.speed_measure(a, b)


def scale_measure(cache: ScaleSpeedCache, a, b):
    return cache.scale_measure(a, b)

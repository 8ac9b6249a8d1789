"""Independent reference computations: plain quadrature in the state variable.

Nothing here goes through ScaleSpeedCache, so agreement with the package is a
genuine cross-check rather than a restatement.
"""

import math

import numpy as np
from scipy import integrate, optimize

# frozen values recorded from the grid-scan oracles below
VP_XHAT1 = 1.0
VP_XHAT2 = 0.6993038909076079  # root of 1/(2 sqrt x) + 1.5 (1 - 2x)
VP_B0 = 2.314596212276752  # root of sqrt x + x (1 - x)/2
VP_A_STAR = 0.351260505882
VP_B_STAR = 1.32827806649
VP_LAMBDA = 0.934487187103
GBM_A_STAR = 0.113723399281
GBM_B_STAR = 3.04025312506
GBM_LAMBDA = 0.223505601964


def _quad(f, a, b):
    return integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


def scale(mu, sigma, x):
    """s(x) = exp(-int_1^x 2 mu / sigma^2)."""
    return math.exp(-_quad(lambda y: 2 * mu(y) / sigma(y) ** 2, 1.0, x))


def speed(mu, sigma, x):
    return 1.0 / (sigma(x) ** 2 * scale(mu, sigma, x))


def lam(mu, sigma, h, c1, c2, a, b):
    """lambda(a, b) by nested plain quadrature."""
    M = _quad(lambda x: speed(mu, sigma, x), a, b)
    H = _quad(lambda x: h(x) * speed(mu, sigma, x), a, b)
    return (c1 / scale(mu, sigma, b) - c2 / scale(mu, sigma, a) + 2 * H) / (2 * M)


def vp_functions(mu=1.0, gamma=1.0, sigma=0.5):
    return (lambda x: mu * x * (1 - gamma * x)), (lambda x: sigma * x)


def vp_lambda_closed(a, b, c1=0.5, c2=1.5):
    """Verhulst-Pearl (mu=gamma=1, sigma=1/2): 2 mu / sigma^2 = 8 (1 - x)/x.

    s(x) = x^-8 exp(8 (x - 1)), m(x) = 4 x^6 exp(-8 (x - 1)); integrals by quad.
    """
    s = lambda x: x ** -8 * math.exp(8 * (x - 1))  # noqa: E731
    m = lambda x: 4 * x**6 * math.exp(-8 * (x - 1))  # noqa: E731
    M = _quad(m, a, b)
    H = _quad(lambda x: math.sqrt(x) * m(x), a, b)
    return (c1 / s(b) - c2 / s(a) + 2 * H) / (2 * M)


def grid_search_max(f, a_range, b_range, n=200):
    """Coarse grid argmax of f(a, b) over a < b, then Nelder-Mead refinement."""
    best = (-np.inf, None)
    for a in np.linspace(*a_range, n):
        for b in np.linspace(*b_range, n):
            if a < b:
                v = f(a, b)
                if v > best[0]:
                    best = (v, (a, b))
    res = optimize.minimize(lambda p: -f(*p) if 0 < p[0] < p[1] else np.inf, best[1], method="Nelder-Mead",
                            options={"xatol": 1e-9, "fatol": 1e-15, "maxiter": 4000})
    return res.x, -res.fun


def gbm_lambda_closed(a, b, c1=1.0, c2=2.0):
    """GBM mu=-1/2, sigma=1, h = sqrt x: s(x) = x, m(x) = x^-3 by hand."""
    M = (a**-2 - b**-2) / 2
    H = (2 / 3) * (a**-1.5 - b**-1.5)
    return (c1 / b - c2 / a + 2 * H) / (2 * M)


def gbm_discounted(r, a_bracket, mu=-0.5, sigma=1.0, c1=1.0, c2=2.0):
    """Free boundary for GBM with h = sqrt x from the explicit solution.

    V = A x^q1 + B x^q2 + K sqrt x with q the roots of sigma^2 q (q - 1)/2 + mu q = r
    and K = 1/(sigma^2/8 - mu/2 + r).  V'(a) = c2 and V''(a) = 0 fix (A, B); b is
    the first zero of V'' above a, and a solves V'(b) = c1.
    Returns (a, b, V) with V a callable on [a, b].
    """
    s2 = sigma**2
    disc = math.sqrt((mu - s2 / 2) ** 2 + 2 * s2 * r)
    q1, q2 = ((s2 / 2 - mu) + disc) / s2, ((s2 / 2 - mu) - disc) / s2
    K = 1 / (s2 / 8 - mu / 2 + r)

    def coeffs(a):
        # rows: V'(a) and V''(a) as linear functions of (A, B)
        m = np.array([[q1 * a ** (q1 - 1), q2 * a ** (q2 - 1)],
                      [q1 * (q1 - 1) * a ** (q1 - 2), q2 * (q2 - 1) * a ** (q2 - 2)]])
        rhs = np.array([c2 - K * 0.5 * a**-0.5, K * 0.25 * a**-1.5])
        return np.linalg.solve(m, rhs)

    def d1(A, B, x):
        return A * q1 * x ** (q1 - 1) + B * q2 * x ** (q2 - 1) + 0.5 * K * x**-0.5

    def d2(A, B, x):
        return A * q1 * (q1 - 1) * x ** (q1 - 2) + B * q2 * (q2 - 1) * x ** (q2 - 2) - 0.25 * K * x**-1.5

    def b_of(a):
        A, B = coeffs(a)
        xs = a * np.geomspace(1 + 1e-9, 1e3, 20000)
        v = d2(A, B, xs)
        change = np.flatnonzero(np.sign(v[1:]) != np.sign(v[:-1]))
        if change.size == 0:
            return A, B, None
        j = int(change[0])
        return A, B, optimize.brentq(lambda x: d2(A, B, x), xs[j], xs[j + 1], xtol=1e-15, rtol=1e-15)

    def g(a):
        A, B, b = b_of(a)
        # V' keeps falling without turning: a is too small
        return -1.0 if b is None else d1(A, B, b) - c1

    a = optimize.brentq(g, *a_bracket, xtol=1e-15, rtol=1e-14)
    A, B, b = b_of(a)
    return a, b, lambda x: A * x**q1 + B * x**q2 + K * np.sqrt(x)

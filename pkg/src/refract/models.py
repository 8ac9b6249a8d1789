"""Built-in model families and their closed-form oracles.

Families: geometric Brownian motion, the Verhulst-Pearl logistic diffusion
and Brownian motion with constant coefficients; running rewards of power,
linear, constant and zero type.  All callables are plain numpy expressions
so that they work on scalars, arrays and inside numba kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .diffusion import DEFAULT_DOMAIN_CAP, DiffusionModel, RewardModel
from .errors import ArgumentError, ModelError

SINGULAR_EXPONENT_TOL = 1e-8


@dataclass(frozen=True)
class GbmParams:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ModelError(f"sigma: must be positive, got {self.sigma}")

    @property
    def alpha(self):
        return 2.0 * self.mu / self.sigma**2


@dataclass(frozen=True)
class VerhulstPearlParams:
    mu: float
    gamma: float
    sigma: float

    def __post_init__(self):
        for name in ("mu", "gamma", "sigma"):
            if not getattr(self, name) > 0:
                raise ModelError(f"{name}: must be positive, got {getattr(self, name)}")

    @property
    def alpha(self):
        return 2.0 * self.mu / self.sigma**2


@dataclass(frozen=True)
class PowerReward:
    """h(x) = kappa x^p with 0 < p < 1."""

    kappa: float = 1.0
    p: float = 0.5

    def __post_init__(self):
        if not self.kappa > 0:
            raise ModelError(f"kappa: must be positive, got {self.kappa}")
        if not 0 < self.p < 1:
            raise ModelError(f"p: must lie in (0, 1), got {self.p}")

    def __call__(self, x):
        return self.kappa * np.power(x, self.p)


# --------------------------------------------------------------------- models
def gbm(mu, sigma, domain_cap=DEFAULT_DOMAIN_CAP, exploratory=False):
    prm = GbmParams(float(mu), float(sigma))
    if prm.mu >= 0 and not exploratory:
        raise ModelError(
            f"mu: GBM with mu={prm.mu} >= 0 has an unbounded long-run reward "
            "(mu > 0) or falls outside the two-barrier theory (mu = 0); "
            "pass exploratory=True to build it anyway"
        )
    m, s = prm.mu, prm.sigma

    def drift(x):
        return m * x

    def vol(x):
        return s * x

    return DiffusionModel(drift, vol, "gbm", {"mu": m, "sigma": s}, domain_cap)


def verhulst_pearl(mu, gamma, sigma, domain_cap=DEFAULT_DOMAIN_CAP):
    prm = VerhulstPearlParams(float(mu), float(gamma), float(sigma))
    m, g, s = prm.mu, prm.gamma, prm.sigma

    def drift(x):
        return m * x * (1.0 - g * x)

    def vol(x):
        return s * x

    return DiffusionModel(drift, vol, "verhulst_pearl", {"mu": m, "gamma": g, "sigma": s}, domain_cap)


def brownian(mu=0.0, sigma=1.0, domain_cap=DEFAULT_DOMAIN_CAP):
    m, s = float(mu), float(sigma)
    if not s > 0:
        raise ModelError(f"sigma: must be positive, got {s}")

    def drift(x):
        return m + 0.0 * x

    def vol(x):
        return s + 0.0 * x

    return DiffusionModel(drift, vol, "brownian", {"mu": m, "sigma": s}, domain_cap)


MODEL_PARAMS = {
    "gbm": ("mu", "sigma"),
    "verhulst_pearl": ("mu", "gamma", "sigma"),
    "brownian": ("mu", "sigma"),
}


def make_model(name, params, domain_cap=DEFAULT_DOMAIN_CAP, exploratory=False) -> DiffusionModel:
    """Construct a registered diffusion family from a parameter mapping."""
    if name not in MODEL_PARAMS:
        raise ModelError(f"name: unknown model {name!r}; known: {sorted(MODEL_PARAMS)}")
    extra = set(params) - set(MODEL_PARAMS[name])
    if extra:
        raise ModelError(f"params: unknown parameter(s) {sorted(extra)} for model {name!r}")
    if name == "gbm":
        return gbm(params["mu"], params["sigma"], domain_cap, exploratory)
    if name == "verhulst_pearl":
        return verhulst_pearl(params["mu"], params["gamma"], params["sigma"], domain_cap)
    return brownian(params.get("mu", 0.0), params.get("sigma", 1.0), domain_cap)


# -------------------------------------------------------------------- rewards
REWARD_PARAMS = {
    "power": ("kappa", "p"),
    "linear": ("eps",),
    "constant": ("level",),
    "zero": (),
}


def make_reward(name, params, c1, c2) -> RewardModel:
    if name not in REWARD_PARAMS:
        raise ModelError(f"name: unknown reward {name!r}; known: {sorted(REWARD_PARAMS)}")
    extra = set(params) - set(REWARD_PARAMS[name])
    if extra:
        raise ModelError(f"params: unknown parameter(s) {sorted(extra)} for reward {name!r}")
    if name == "power":
        pw = PowerReward(float(params.get("kappa", 1.0)), float(params.get("p", 0.5)))
        kappa, p = pw.kappa, pw.p

        def h(x):
            return kappa * np.power(x, p)

        return RewardModel(h, float(c1), float(c2), "power", {"kappa": kappa, "p": p})
    if name == "linear":
        eps = float(params.get("eps", 1.0))
        if eps < 0:
            raise ModelError(f"eps: must be nonnegative, got {eps}")

        def h(x):
            return eps * x

        return RewardModel(h, float(c1), float(c2), "linear", {"eps": eps})
    if name == "constant":
        level = float(params.get("level", 1.0))
        if level < 0:
            raise ModelError(f"level: must be nonnegative, got {level}")

        def h(x):
            return level + 0.0 * x

        return RewardModel(h, float(c1), float(c2), "constant", {"level": level})

    def h(x):
        return 0.0 * x

    return RewardModel(h, float(c1), float(c2), "zero", {})


def power_of(reward: RewardModel) -> PowerReward:
    if reward.name != "power":
        raise ArgumentError(f"reward {reward.name!r} is not a power reward")
    return PowerReward(reward.params["kappa"], reward.params["p"])


# ------------------------------------------------------------- closed forms
class GbmClosedForms(NamedTuple):
    s_a: float
    s_b: float
    M: float
    int_hm: float
    lam: float


def _power_integral(e, a, b):
    """int_a^b x^(e-1) dx, logarithmic branch near e = 0."""
    if abs(e) < SINGULAR_EXPONENT_TOL:
        return math.log(b / a)
    # a^e (exp(e log(b/a)) - 1) / e keeps full precision for small |e|
    return math.exp(e * math.log(a)) * math.expm1(e * math.log(b / a)) / e


def gbm_closed_forms(params: GbmParams, reward: PowerReward, c1, c2, a, b) -> GbmClosedForms:
    """Antiderivative evaluation of s, M, int h m and lambda for GBM + power reward.

    s(x) = x^-alpha, m(x) = x^(alpha - 2) / sigma^2, alpha = 2 mu / sigma^2.
    """
    if not 0 < a < b:
        raise ArgumentError(f"need 0 < a < b, got a={a}, b={b}")
    alpha = params.alpha
    sig2 = params.sigma**2
    s_a = a ** (-alpha)
    s_b = b ** (-alpha)
    M = _power_integral(alpha - 1.0, a, b) / sig2
    int_hm = reward.kappa * _power_integral(reward.p + alpha - 1.0, a, b) / sig2
    lam = (c1 / s_b - c2 / s_a + 2.0 * int_hm) / (2.0 * M)
    return GbmClosedForms(s_a, s_b, M, int_hm, lam)


def legendre_transform(reward: PowerReward, z):
    """sup_x {kappa x^p - z x} = kappa (1-p) p^(p/(1-p)) (kappa/z)^(p/(1-p))."""
    if not z > 0:
        raise ArgumentError(f"z must be positive (the supremum is infinite otherwise), got {z}")
    k, p = reward.kappa, reward.p
    return k * (1 - p) * p ** (p / (1 - p)) * (k / z) ** (p / (1 - p))


def legendre_maximizer(reward: PowerReward, z):
    if not z > 0:
        raise ArgumentError(f"z must be positive, got {z}")
    return (reward.kappa * reward.p / z) ** (1.0 / (1.0 - reward.p))


def verhulst_pearl_fixture(domain_cap=DEFAULT_DOMAIN_CAP):
    """mu=1, gamma=1, sigma=0.5 with h = sqrt(x), c1 = 0.5, c2 = 1.5."""
    return verhulst_pearl(1.0, 1.0, 0.5, domain_cap), make_reward("power", {"kappa": 1.0, "p": 0.5}, 0.5, 1.5)


def gbm_fixture(domain_cap=DEFAULT_DOMAIN_CAP):
    """mu=-0.5, sigma=1 with h = sqrt(x), c1 = 1, c2 = 2."""
    return gbm(-0.5, 1.0, domain_cap), make_reward("power", {"kappa": 1.0, "p": 0.5}, 1.0, 2.0)

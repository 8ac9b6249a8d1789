import math
import warnings

import numpy as np
import pytest

import oracles
from refract import DiffusionModel, ScaleSpeedCache
from refract.barrier import BarrierPair, lambda_ab, local_time_rates
from refract.errors import ArgumentError, DegenerateVolatilityError, NumericalBlowupError
from refract.models import brownian, gbm, make_reward, verhulst_pearl_fixture
from refract.simulate import (
    SimConfig,
    admissibility_probe,
    run_checkpoints,
    simulate_discounted,
    simulate_one_sided,
    simulate_reflected,
    simulate_replications,
)

BM = brownian()
ZERO = make_reward("zero", {}, 1.0, 2.0)
# overshoot local time of the projected Euler scheme behaves like reflection at
# barriers moved outward by BETA sigma sqrt(dt) (BETA = -zeta(1/2)/sqrt(2 pi))
BETA = 0.5825971579390106


@pytest.fixture(scope="module")
def bm_run():
    return simulate_reflected(SimConfig(BM, ZERO, 1.0, 2.0))


def test_brownian_reward_rate(bm_run):
    e = bm_run
    assert abs(e.mean_reward_rate - (-0.5)) <= 3 * e.std_error
    assert e.mean_reward_rate == pytest.approx(1.0 * e.rate_Lb - 2.0 * e.rate_La, abs=1e-12)


def test_brownian_rates_match_shifted_barriers(bm_run):
    e = bm_run
    d = BETA * math.sqrt(1e-3)
    ra, rb = local_time_rates(ScaleSpeedCache(BM), BarrierPair(1.0 - d, 2.0 + d))
    assert abs(e.rate_La - ra) <= 3 * e.rate_La_se
    assert abs(e.rate_Lb - rb) <= 3 * e.rate_Lb_se


def test_brownian_rates_converge_as_dt_shrinks():
    e = simulate_reflected(SimConfig(BM, ZERO, 1.0, 2.0, dt=1e-4, horizon_T=2e3))
    assert abs(e.rate_La - 0.5) <= 3 * e.rate_La_se
    assert abs(e.rate_Lb - 0.5) <= 3 * e.rate_Lb_se


def test_state_confined(bm_run):
    assert 1.0 <= bm_run.x_min and bm_run.x_max <= 2.0
    cfg = SimConfig(BM, ZERO, 1.0, 2.0, x0=5.0, horizon_T=50.0, thin_every=10)
    e = simulate_reflected(cfg)
    assert e.path[0, 1] == 2.0  # initial jump to the nearest barrier
    assert np.all((e.path[:, 1] >= 1.0) & (e.path[:, 1] <= 2.0))
    assert np.all(np.diff(e.path[:, 2]) >= 0) and np.all(np.diff(e.path[:, 3]) >= 0)


def test_seed_determinism():
    cfg = SimConfig(BM, ZERO, 1.0, 2.0, horizon_T=200.0)
    e1, e2 = simulate_reflected(cfg), simulate_reflected(cfg)
    assert e1.mean_reward_rate == e2.mean_reward_rate
    assert np.array_equal(e1.batch_means, e2.batch_means)
    e3 = simulate_reflected(SimConfig(BM, ZERO, 1.0, 2.0, horizon_T=200.0, seed=1))
    assert e3.mean_reward_rate != e1.mean_reward_rate


def test_replications_are_independent_and_aggregated():
    cfg = SimConfig(BM, ZERO, 1.0, 2.0, horizon_T=200.0)
    ests, (mean, se, la, lb) = simulate_replications(cfg, 4)
    means = [e.mean_reward_rate for e in ests]
    assert len(set(means)) == 4
    assert mean == pytest.approx(np.mean(means))
    assert se == pytest.approx(np.std(means, ddof=1) / 2)


def test_vp_reward_rate_and_dt_refinement():
    model, reward = verhulst_pearl_fixture()
    a, b = oracles.VP_A_STAR, oracles.VP_B_STAR
    e1 = simulate_reflected(SimConfig(model, reward, a, b, dt=1e-3))
    e2 = simulate_reflected(SimConfig(model, reward, a, b, dt=5e-4))
    assert abs(e1.mean_reward_rate - oracles.VP_LAMBDA) <= 3 * e1.std_error
    assert abs(e1.mean_reward_rate - e2.mean_reward_rate) <= 2 * math.hypot(e1.std_error, e2.std_error)


def test_one_sided_no_reflection_for_short_horizon():
    cfg = SimConfig(BM, ZERO, 1.0, x0=50.0, horizon_T=1.0)
    e = simulate_one_sided(cfg)
    assert e.rate_La == 0.0 and e.rate_Lb == 0.0


def test_one_sided_driftless_gbm_against_stationary_law():
    model = gbm(0.0, 1.0, exploratory=True)
    reward = make_reward("power", {"kappa": 1.0, "p": 0.5}, 1.0, 2.0)
    cache = ScaleSpeedCache(model)
    a, cap = 1.0, model.domain_cap
    M = cache.speed_measure(a, cap)
    rate_la = cache.inv_scale_density(a) / (2 * M)
    expect = cache.integrate_m(reward.h, a, cap) / M - reward.c2 * rate_la
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        e = simulate_one_sided(SimConfig(model, reward, a), exploratory=True)
    assert any("exploratory" in n for n in e.notes)
    assert abs(e.rate_La - rate_la) <= 3 * e.rate_La_se
    assert abs(e.mean_reward_rate - expect) <= 3 * e.std_error


def test_argument_guards():
    with pytest.raises(ArgumentError):
        SimConfig(BM, ZERO, 0.0)
    with pytest.raises(ArgumentError):
        SimConfig(BM, ZERO, 2.0, 1.0)
    with pytest.raises(ArgumentError):
        SimConfig(BM, ZERO, 1.0, 2.0, dt=1.0, horizon_T=10.0)
    with pytest.raises(ArgumentError):
        SimConfig(BM, ZERO, 1.0, 2.0, n_batches=5)
    with pytest.raises(ArgumentError):
        simulate_reflected(SimConfig(BM, ZERO, 1.0))
    with pytest.raises(ArgumentError):
        simulate_one_sided(SimConfig(BM, ZERO, 1.0, 2.0))


def test_degenerate_volatility_and_blowup():
    bad_vol = DiffusionModel(lambda x: 0.0 * x, lambda x: 1.5 - x)
    with pytest.raises(DegenerateVolatilityError):
        simulate_reflected(SimConfig(bad_vol, ZERO, 1.0, 2.0, horizon_T=10.0))
    bad_drift = DiffusionModel(lambda x: 1e308 * x, lambda x: 1.0 + 0.0 * x)
    with pytest.raises(NumericalBlowupError) as info:
        simulate_reflected(SimConfig(bad_drift, ZERO, 1.0, 2.0, horizon_T=10.0))
    assert info.value.step == 1  # the first step overshoots to b, the second overflows


def test_python_fallback_matches_compiled():
    params = {"sigma": 1.0}  # a dict closure defeats numba
    model = DiffusionModel(lambda x: 0.0 * x, lambda x: params["sigma"] + 0.0 * x)
    cfg_py = SimConfig(model, ZERO, 1.0, 2.0, horizon_T=20.0)
    with pytest.warns(UserWarning, match="pure Python"):
        slow = simulate_reflected(cfg_py)
    fast = simulate_reflected(SimConfig(BM, ZERO, 1.0, 2.0, horizon_T=20.0))
    assert slow.mean_reward_rate == pytest.approx(fast.mean_reward_rate, rel=1e-12)


def test_admissibility_small_horizon_and_doubling():
    cfg = SimConfig(BM, ZERO, 1.0, 2.0, horizon_T=1e3)
    early = run_checkpoints(cfg, [1e-3], replications=8)
    assert np.all(early.local_time == 0.0)  # started mid-interval, no time to reach a barrier
    probe = admissibility_probe(cfg, [250.0, 500.0], replications=8)
    (l1, l2), (s1, s2) = probe.mean_local_time, probe.se_local_time
    assert abs(l2 - 2 * l1) <= 3 * math.hypot(s2, 2 * s1)
    with pytest.raises(ArgumentError):
        admissibility_probe(cfg, [250.0], replications=4)


def test_admissibility_slope_matches_rate_sum():
    cfg = SimConfig(BM, ZERO, 1.0, 2.0, dt=1e-4, horizon_T=1e3)
    probe = admissibility_probe(cfg, [125.0, 250.0, 500.0, 1000.0], replications=8)
    assert abs(probe.slope - 1.0) <= 3 * probe.slope_se


def test_discounted_brownian_closed_form():
    # zero drift, h = 0, unit volatility: V'' = 2 r V with V'(a) = c2, V'(b) = c1
    r, a, b, x = 0.5, 1.0, 2.0, 1.5
    k = math.sqrt(2 * r)
    # V = A cosh(k (x - a)) + B sinh(k (x - a))
    B = 2.0 / k
    A = (1.0 / k - B * math.cosh(k * (b - a))) / math.sinh(k * (b - a))
    expect = A * math.cosh(k * (x - a)) + B * math.sinh(k * (x - a))
    est = simulate_discounted(BM, ZERO, a, b, r, x, dt=1e-4, n_paths=2000)
    assert abs(est.value - expect) <= 3 * est.std_error
    assert est.horizon == pytest.approx(24.0)
    assert lambda_ab(ScaleSpeedCache(BM), ZERO, BarrierPair(a, b)) == pytest.approx(-0.5)

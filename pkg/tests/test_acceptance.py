"""Acceptance suite: nine end-to-end criteria at their stated tolerances.

Each criterion prints one ``criterion N: PASS|FAIL ...`` line.  Run with
``pytest tests/test_acceptance.py -v`` or ``python3 tests/test_acceptance.py``.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import oracles  # noqa: E402
from refract import ScaleSpeedCache, pi  # noqa: E402
from refract.barrier import BarrierPair, grad_lambda, lambda_ab, local_time_rates, solve, sweep  # noqa: E402
from refract.discounted import abelian_sweep, solve_discounted  # noqa: E402
from refract.hjb import build_hjb, verify_hjb  # noqa: E402
from refract.models import gbm_fixture, verhulst_pearl_fixture  # noqa: E402
from refract.simulate import SimConfig, admissibility_probe, run_checkpoints, simulate_discounted, simulate_reflected  # noqa: E402

SEED = 12345
RS = (0.2, 0.1, 0.05, 0.02)


def _fixture(which):
    model, reward = verhulst_pearl_fixture() if which == "vp" else gbm_fixture()
    cache = ScaleSpeedCache(model)
    return cache, reward


_SOLVED = {}


def _solved(which):
    if which not in _SOLVED:
        cache, reward = _fixture(which)
        sol, _ = solve(cache, reward)
        _SOLVED[which] = (cache, reward, sol)
    return _SOLVED[which]


def _report(number, ok, detail, elapsed, budget):
    in_time = elapsed < budget
    verdict = "PASS" if ok and in_time else "FAIL"
    line = f"criterion {number}: {verdict} ({elapsed:.1f}s of {budget:.0f}s) {detail}"
    print(line)
    return ok and in_time, line


def criterion_1():
    t0 = time.perf_counter()
    cache, reward = _fixture("gbm")
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(100):
        a, b = np.sort(rng.uniform(0.05, 20.0, 2))
        got = lambda_ab(cache, reward, BarrierPair(a, b))
        ref = oracles.gbm_lambda_closed(a, b)
        worst = max(worst, abs(got - ref) / abs(ref))
    return _report(1, worst <= 1e-10, f"max rel err {worst:.2e} on 100 GBM pairs", time.perf_counter() - t0, 5)


def criterion_2():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for which in ("vp", "gbm"):
        cache, reward = _fixture(which)
        for _ in range(20):
            a, b = np.sort(rng.uniform(0.1, 3.0, 2))
            if b - a < 0.05:
                b = a + 0.05
            ga, gb = grad_lambda(cache, reward, BarrierPair(a, b))
            ha, hb = 1e-6 * max(1.0, a), 1e-6 * max(1.0, b)
            fa = (lambda_ab(cache, reward, BarrierPair(a + ha, b)) - lambda_ab(cache, reward, BarrierPair(a - ha, b))) / (2 * ha)
            fb = (lambda_ab(cache, reward, BarrierPair(a, b + hb)) - lambda_ab(cache, reward, BarrierPair(a, b - hb))) / (2 * hb)
            worst = max(worst, abs(ga - fa) / abs(fa), abs(gb - fb) / abs(fb))
    return _report(2, worst <= 1e-5, f"max rel err {worst:.2e} on 2x20 pairs", time.perf_counter() - t0, 10)


def criterion_3():
    t0 = time.perf_counter()
    cache, reward, sol = _solved("vp")
    axis = np.linspace(sol.a / 2, 2 * sol.b, 200)
    table = sweep(cache, reward, axis, axis).lambda_table
    lam, M = sol.lambda_star, sol.speed_measure
    excess = np.nanmax(table) - lam
    foc = max(map(abs, sol.foc_residuals))
    foc_tol = 1e-8 * (1 + abs(lam)) * M
    p1 = float(pi(reward, cache.model, 1, sol.b))
    p2 = float(pi(reward, cache.model, 2, sol.a))
    gap = max(abs(lam - p1), abs(lam - p2)) / abs(lam)
    ok = excess <= 1e-9 and foc <= foc_tol and gap <= 1e-8
    detail = f"grid max - lambda* = {excess:.2e}, |R| = {foc:.2e} (tol {foc_tol:.2e}), pi gap {gap:.2e}"
    return _report(3, ok, detail, time.perf_counter() - t0, 60)


def criterion_4():
    t0 = time.perf_counter()
    oks, parts = [], []
    for which in ("vp", "gbm"):
        cache, reward, sol = _solved(which)
        rep = verify_hjb(cache, reward, build_hjb(cache, reward, sol))
        oks.append(
            rep.max_interior_residual <= 1e-6
            and rep.max_exterior_violation <= 1e-8
            and rep.worst_gradient_violation <= 1e-8
            and all(abs(p) <= 1e-6 for p in rep.pasting)
        )
        parts.append(f"{which}: interior {rep.max_interior_residual:.1e}, exterior {rep.max_exterior_violation:.1e}, "
                     f"band {rep.worst_gradient_violation:.1e}, pasting {max(map(abs, rep.pasting)):.1e}")
    return _report(4, all(oks), "; ".join(parts), time.perf_counter() - t0, 5)


def criterion_5():
    cache, reward, sol = _solved("vp")
    t0 = time.perf_counter()
    est = simulate_reflected(SimConfig(cache.model, reward, sol.a, sol.b, dt=1e-3, horizon_T=2e4, n_batches=20, seed=SEED))
    ra, rb = local_time_rates(cache, sol.pair)
    z_mean = (est.mean_reward_rate - sol.lambda_star) / est.std_error
    z_a = (est.rate_La - ra) / est.rate_La_se
    z_b = (est.rate_Lb - rb) / est.rate_Lb_se
    ok = max(abs(z_mean), abs(z_a), abs(z_b)) <= 3
    detail = (f"mean {est.mean_reward_rate:.5f} vs {sol.lambda_star:.5f} ({z_mean:+.2f} SE), "
              f"L_a rate {est.rate_La:.5f} vs {ra:.5f} ({z_a:+.2f} SE), L_b rate {est.rate_Lb:.5f} vs {rb:.5f} ({z_b:+.2f} SE)")
    return _report(5, ok, detail, time.perf_counter() - t0, 120)


def criterion_6():
    t0 = time.perf_counter()
    oks, parts = [], []
    for which in ("vp", "gbm"):
        cache, reward, sol = _solved(which)
        table = abelian_sweep(cache, reward, RS, None, sol)
        dev = table.deviations()
        last = table.rows[-1]
        rel_a, rel_b = last.dev_a / sol.a, last.dev_b / sol.b
        ok = len(table.ok_rows()) == len(RS) and bool(np.all(np.diff(dev) < 0)) and rel_a <= 0.05 and rel_b <= 0.05
        oks.append(ok)
        parts.append(f"{which}: |rV-lambda*| {', '.join(f'{d:.2e}' for d in dev)}; at r=0.02 a off {rel_a:.1%}, b off {rel_b:.1%}")
    return _report(6, all(oks), "; ".join(parts), time.perf_counter() - t0, 60)


def criterion_7():
    t0 = time.perf_counter()
    worst = 0.0
    for which in ("vp", "gbm"):
        cache, reward, sol = _solved(which)
        s = solve_discounted(cache, reward, 0.05, sol.a)
        worst = max(worst, abs(s.launch_residual), abs(s.shoot_residual))
    cache, reward, sol = _solved("vp")
    s = solve_discounted(cache, reward, 0.05, sol.a)
    x = 0.5 * (s.a_r + s.b_r)
    mc = simulate_discounted(cache.model, reward, s.a_r, s.b_r, 0.05, x, dt=1e-3, n_paths=1000, seed=SEED)
    v = s.V_at(x)
    z = (mc.value - v) / mc.std_error
    ok = worst <= 1e-8 and abs(z) <= 3
    detail = f"max pasting residual {worst:.1e}; MC {mc.value:.4f} +- {mc.std_error:.4f} vs V {v:.4f} ({z:+.2f} SE)"
    return _report(7, ok, detail, time.perf_counter() - t0, 120)


def criterion_8():
    cache, reward, sol = _solved("vp")
    t0 = time.perf_counter()
    cfg = SimConfig(cache.model, reward, sol.a, sol.b, dt=1e-3, horizon_T=2e4, seed=SEED)
    run = run_checkpoints(cfg, [5e3, 1e4, 2e4], replications=8)
    avg = run.time_average()
    means = avg.mean(axis=0)
    dev = np.abs(means - sol.lambda_star)
    se = avg[:, -1].std(ddof=1) / math.sqrt(avg.shape[0])
    rms = np.sqrt(np.mean((avg - sol.lambda_star) ** 2, axis=0))
    ok = bool(np.all(np.diff(dev) < 0)) and dev[-1] <= 3 * se
    detail = (f"deviations {', '.join(f'{d:.2e}' for d in dev)}; final SE {se:.2e}; "
              f"per-replication RMS {', '.join(f'{d:.2e}' for d in rms)}")
    return _report(8, ok, detail, time.perf_counter() - t0, 180)


def criterion_9():
    cache, reward, sol = _solved("vp")
    t0 = time.perf_counter()
    cfg = SimConfig(cache.model, reward, sol.a, sol.b, dt=1e-4, horizon_T=1e3, seed=SEED)
    probe = admissibility_probe(cfg, [125.0, 250.0, 500.0, 1000.0], replications=8)
    target = sum(local_time_rates(cache, sol.pair))
    z = (probe.slope - target) / probe.slope_se
    detail = f"slope {probe.slope:.5f} +- {probe.slope_se:.5f} vs rate sum {target:.5f} ({z:+.2f} SE)"
    return _report(9, abs(z) <= 3, detail, time.perf_counter() - t0, 120)


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9]


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 10)])
def test_acceptance(criterion, capsys):
    ok, line = criterion()
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    results = [c()[0] for c in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria pass")
    sys.exit(0 if all(results) else 1)

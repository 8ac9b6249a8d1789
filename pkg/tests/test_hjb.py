import numpy as np
import pytest

from refract.diffusion import pi
from refract.errors import ArgumentError
from refract.hjb import GridSpec, TolSpec, build_hjb, generator_residual, verify_hjb

FIXTURES = ["vp_solved", "gb_solved"]


@pytest.fixture(scope="module", params=FIXTURES)
def built(request):
    cache, reward, sol, _ = request.getfixturevalue(request.param)
    grid = build_hjb(cache, reward, sol)
    return cache, reward, sol, grid, verify_hjb(cache, reward, grid)


def test_default_grid_contains_barriers(built):
    _, _, sol, grid, _ = built
    assert grid.xs.size == 2001
    assert grid.xs[0] == pytest.approx(sol.a / 2) and grid.xs[-1] == pytest.approx(2 * sol.b)
    assert sol.a in grid.xs and sol.b in grid.xs
    assert np.all(np.diff(grid.xs) > 0)


def test_pasting_values(built):
    _, reward, sol, grid, rep = built
    ib = int(np.flatnonzero(grid.xs == sol.b)[0])
    assert grid.u1[ib] == reward.c1
    assert abs(rep.pasting[0]) <= 10 * 1e-10 * reward.c2
    assert all(abs(p) <= 1e-6 for p in rep.pasting)


def test_certificate_passes(built):
    _, _, _, _, rep = built
    assert rep.passed, rep.summary()
    assert rep.max_interior_residual <= 1e-6
    assert rep.max_exterior_violation <= 1e-8
    assert rep.gradient_violations == 0


def test_exterior_above_b_equals_pi1_minus_lambda(built):
    cache, reward, sol, grid, rep = built
    above = grid.xs > sol.b
    expect = pi(reward, cache.model, 1, grid.xs[above]) - sol.lambda_star
    assert np.allclose(rep.residual[above], expect, rtol=1e-12, atol=1e-12)
    assert np.all(expect <= 0)


def test_gradient_band_and_linear_pieces(built):
    _, reward, sol, grid, _ = built
    assert np.all(grid.u1 >= reward.c1 - 1e-8) and np.all(grid.u1 <= reward.c2 + 1e-8)
    assert np.all(grid.u1[grid.xs < sol.a] == reward.c2)
    assert np.all(grid.u1[grid.xs > sol.b] == reward.c1)


def test_u_increasing_and_bounded_below(built):
    _, reward, sol, grid, rep = built
    assert np.all(np.diff(grid.u) > 0)
    assert grid.u.min() == grid.u[0]
    assert rep.bounded_below
    ia = int(np.flatnonzero(grid.xs == sol.a)[0])
    assert grid.u[ia] == pytest.approx(reward.c1 * sol.a)


def test_auxiliary_functions_signs(built):
    _, _, _, grid, _ = built
    inside = grid.interior
    assert np.all(grid.k[inside] >= -1e-12)
    assert np.all(grid.rho[inside] <= 1e-12)


def test_u_integrates_u1(built):
    _, _, _, grid, _ = built
    # trapezoid of u' reproduces u to second order
    trap = np.concatenate([[0.0], np.cumsum(np.diff(grid.xs) * (grid.u1[1:] + grid.u1[:-1]) / 2)])
    assert np.max(np.abs(grid.u - grid.u[0] - trap)) <= 1e-5


def test_refinement_does_not_degrade_residual(built):
    cache, reward, sol, _, _ = built
    coarse = verify_hjb(cache, reward, build_hjb(cache, reward, sol, GridSpec(n_points=1001)))
    fine = verify_hjb(cache, reward, build_hjb(cache, reward, sol, GridSpec(n_points=2001)))
    # u'' comes from the generator equation, so the interior residual sits at round-off
    floor = 1e-13
    assert fine.max_interior_residual <= max(coarse.max_interior_residual / 2, floor)


def test_generator_residual_matches_report(built):
    cache, reward, _, grid, rep = built
    assert np.array_equal(generator_residual(cache, reward, grid), rep.residual)


def test_tolerances_drive_pass_flag(built):
    cache, reward, _, grid, _ = built
    strict = verify_hjb(cache, reward, grid, TolSpec(pasting=1e-30))
    assert not strict.passed


def test_explicit_grid_must_contain_barriers(vp_solved):
    cache, reward, sol, _ = vp_solved
    with pytest.raises(ArgumentError):
        build_hjb(cache, reward, sol, xs=np.linspace(0.1, 3.0, 101))
    with pytest.raises(ArgumentError):
        GridSpec(x_lo=sol.a * 1.1).build(sol.a, sol.b)
    xs = np.unique(np.concatenate([np.linspace(0.1, 3.0, 101), [sol.a, sol.b]]))
    grid = build_hjb(cache, reward, sol, xs=xs)
    assert verify_hjb(cache, reward, grid).passed

import pytest

from refract import ScaleSpeedCache
from refract.barrier import solve
from refract.models import gbm_fixture, verhulst_pearl_fixture


@pytest.fixture(scope="session")
def vp():
    model, reward = verhulst_pearl_fixture()
    return ScaleSpeedCache(model), reward


@pytest.fixture(scope="session")
def gb():
    model, reward = gbm_fixture()
    return ScaleSpeedCache(model), reward


@pytest.fixture(scope="session")
def vp_solved(vp):
    cache, reward = vp
    sol, shape = solve(cache, reward)
    return cache, reward, sol, shape


@pytest.fixture(scope="session")
def gb_solved(gb):
    cache, reward = gb
    sol, shape = solve(cache, reward)
    return cache, reward, sol, shape

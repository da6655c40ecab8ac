import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from anderson_chaos.cases import case_kernel, case_model
from anderson_chaos.fields import ModelSpec, assemble
from anderson_chaos.noise import GridSpec

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session", autouse=True)
def _cache_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("noise-cache")
    os.environ["ANDERSON_CHAOS_CACHE"] = str(path)
    yield path


@pytest.fixture(scope="session")
def tiny_heat():
    """24 cells: small enough for dense tensors of order 3."""
    return assemble(ModelSpec("heat", case_kernel(1), GridSpec(1.0, 4, 3.0, 6), truncation=3))


@pytest.fixture(scope="session")
def tiny_wave_riesz():
    return assemble(ModelSpec("wave", case_kernel(4), GridSpec(1.0, 4, 3.0, 6), truncation=3))


@pytest.fixture(scope="session")
def small_heat():
    """Case 1 on a box for radii up to 8."""
    return case_model(1, r_max=8.0)


@pytest.fixture(scope="session")
def case_models():
    return {c: case_model(c) for c in (1, 2, 3, 4)}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in __import__("sys").modules.items() if name.endswith("test_acceptance")), None)
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])

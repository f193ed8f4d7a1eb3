import pytest
from hypothesis import HealthCheck, settings

from yamabe_lab.yamabe_radial import AnnulusBVP, cached_family, solve_blowup

settings.register_profile(
    "repo", deadline=None, max_examples=30, derandomize=True,
    suppress_health_check=[HealthCheck.function_scoped_fixture],
)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def family3():
    return cached_family(3)


@pytest.fixture(scope="session")
def unit_solutions():
    return {n: solve_blowup(AnnulusBVP(1.0, n)) for n in (3, 4, 6)}

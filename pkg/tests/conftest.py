import numpy as np
import pytest
from hypothesis import settings

from pebo_observer.harness import run
from pebo_observer.scenario import load_scenario

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# (criterion, passed, detail) lines collected by test_acceptance.py
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def literal_scenario():
    return load_scenario("ices2022_example")


@pytest.fixture(scope="session")
def kscaled_scenario():
    return load_scenario("ices2022_example_kscaled")


@pytest.fixture(scope="session")
def literal_run(literal_scenario, tmp_path_factory):
    return run(literal_scenario, out_dir=tmp_path_factory.mktemp("literal"))


@pytest.fixture(scope="session")
def kscaled_run(kscaled_scenario, tmp_path_factory):
    return run(kscaled_scenario, out_dir=tmp_path_factory.mktemp("kscaled"))


@pytest.fixture(scope="session")
def true_eta(literal_scenario):
    from pebo_observer.plant import canonical_for, get_plant

    cf = canonical_for(get_plant(literal_scenario.plant), literal_scenario.theta)
    return cf.eta(literal_scenario.x0)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

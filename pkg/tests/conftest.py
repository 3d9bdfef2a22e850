import os

import pytest
from hypothesis import HealthCheck, settings

from helpneed import fixtures
from helpneed.policy import ExperimentSpec, PopulationSpec, historical_corpus, learn_from_history

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def small_spec():
    return ExperimentSpec(fixtures.PRETEST, fixtures.TRAINING, fixtures.POSTTEST,
                          historical=PopulationSpec(n_students=30, id_prefix="h"),
                          cohort=PopulationSpec(n_students=12, id_prefix="s"), n_trees=30)


@pytest.fixture(scope="session")
def small_history(small_spec):
    return historical_corpus(small_spec, 11)


@pytest.fixture(scope="session")
def small_knowledge(small_history, small_spec):
    return learn_from_history(small_history, small_spec, 11)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: call with (ok, detail); a failing test is logged as FAIL."""
    state = {}

    def record(ok, detail=""):
        state["ok"], state["detail"] = bool(ok), detail

    yield record
    rep = getattr(request.node, "rep_call", None)
    ok = state.get("ok", False) and rep is not None and rep.passed
    line = f"{'PASS' if ok else 'FAIL'}  {request.node.name}  {state.get('detail', '')}"
    ACCEPTANCE_LINES.append(line)
    print(line)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

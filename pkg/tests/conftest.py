import pytest

from agentos import fixtures

_ACCEPTANCE_RESULTS: list[tuple[str, str, bool]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and item.fspath.basename == "test_acceptance.py":
        doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
        _ACCEPTANCE_RESULTS.append((item.name, doc, report.passed))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, doc, passed in _ACCEPTANCE_RESULTS:
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {doc}")
from agentos.config import RunConfig
from agentos.session import Scenario, build_session
from agentos.simenv import Catalog


@pytest.fixture(scope="session")
def catalog() -> Catalog:
    return Catalog.load(fixtures.CATALOG_DIR)


@pytest.fixture
def desktop(catalog):
    from agentos.simenv import Desktop

    return Desktop(catalog)


def make_config(**overrides) -> RunConfig:
    defaults = dict(
        catalog_dir=str(fixtures.CATALOG_DIR),
        api_manifest=str(fixtures.API_MANIFEST),
        auto_approve=True,
    )
    defaults.update(overrides)
    return RunConfig(**defaults)


def run_scenario(name: str, *, gate=None, mode=None, max_steps=None, **config_overrides):
    """Run one bundled scenario in a fresh session; returns (session, round)."""
    scenario = Scenario.load(fixtures.SCENARIOS_DIR / f"{name}.json")
    overrides = dict(config_overrides)
    if mode is not None:
        overrides["mode"] = mode
        scenario = type(scenario)(**{**scenario.__dict__, "mode": None})
    if max_steps is not None:
        overrides["max_steps"] = max_steps
    config = make_config(**overrides)
    if gate is not None:
        config = RunConfig(**{**config.__dict__, "auto_approve": False})
    session = build_session(config, scenario=scenario, gate=gate)
    round_ = session.run_round(scenario.request)
    return session, round_

import pytest

from _helpers import small_dataset
from surme.model import PriorSpec
from surme.simulate import case_config, generate_dataset
from surme.stats_core import make_rng

ACCEPTANCE_LINES: dict[int, str] = {}
PROPERTY_OUTCOMES: dict[str, bool] = {}


def pytest_runtest_logreport(report):
    if "property" not in report.keywords:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        PROPERTY_OUTCOMES[report.nodeid] = report.outcome == "passed"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    if PROPERTY_OUTCOMES:
        ok = sum(PROPERTY_OUTCOMES.values())
        n = len(PROPERTY_OUTCOMES)
        failed = [k for k, v in PROPERTY_OUTCOMES.items() if not v]
        detail = f"{ok}/{n} property tests passed"
        if failed:
            detail += "; failing: " + ", ".join(failed)
        _record(8, ok == n, detail)
    else:
        _record(8, False, "property suites not collected in this run")
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


def _record(number, passed: bool, detail: str):
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"


@pytest.fixture
def record_criterion():
    return _record


@pytest.fixture
def data20():
    return small_dataset(20, seed=3)


@pytest.fixture
def priors20(data20):
    return PriorSpec.default(data20.k, data20.M)


@pytest.fixture
def case1_data():
    return generate_dataset(case_config("I-1"), make_rng(11))

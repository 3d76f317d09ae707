import numpy as np
import pytest
from hypothesis import settings

from serorecency.bayes import ModelSpec
from serorecency.simgen import TABLE1

settings.register_profile("repo", deadline=None, max_examples=60)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def model_for(name: str) -> ModelSpec:
    return ModelSpec(biomarkers=tuple(TABLE1[name].growth_specs()))


_CRITERIA = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    props = dict(report.user_properties)
    if "criterion" in props:
        _CRITERIA[props["criterion"]] = (report.outcome, props.get("title", ""), props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        outcome, title, detail = _CRITERIA[num]
        status = "PASS" if outcome == "passed" else "FAIL"
        tr.write_line(f"criterion {num:2d} {status}  {title}" + (f"  [{detail}]" if detail else ""))

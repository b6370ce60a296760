from pathlib import Path

import numpy as np
import pytest

from das.encoders import ToyEncoder
from das.imageio import read_png
from das.optimizer import RunConfig
from das.tasks import fit_to

DATA = Path(__file__).parent / "data"

# Desk-scale configuration: 48px canvas, 32px encoder input, +-8px jitter.
# Noise is 0.2 / 7: the full-scale noise after the toy encoder's 7x7 pooling at 224px.
DESK = dict(
    steps=200,
    learning_rate=2.0,
    resolutions=(1, 2, 4, 8, 16, 32, 48),
    shift_max=8,
    noise_std=0.03,
    batch=8,
    out_size=32,
    seed=0,
)


def photo(name: str, size: int) -> np.ndarray:
    return fit_to(read_png(DATA / f"{name}.png"), size)


@pytest.fixture
def desk_config():
    return RunConfig(**DESK)


@pytest.fixture(scope="session")
def toy32():
    return ToyEncoder(input_size=32)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# Acceptance summary: one line per criterion-marked test, printed after the run.
_CRITERIA: dict = {}


def pytest_runtest_logreport(report):
    number = getattr(report, "criterion", None)
    if number is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
        notes = [str(v) for k, v in report.user_properties if k == "note"]
        text = report.criterion_text + (f" [{'; '.join(notes)}]" if notes else "")
        _CRITERIA[number] = (outcome, text)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report = outcome.get_result()
        report.criterion, report.criterion_text = marker.args


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        outcome, text = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {outcome}  {text}")

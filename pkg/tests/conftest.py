import math

import numpy as np
import pytest

from multifid.scenario import RoadSpec, build_turn_road


@pytest.fixture(scope="session")
def straight_path():
    return build_turn_road(RoadSpec(entry_length=50.0, exit_length=50.0)).reference_path


@pytest.fixture(scope="session")
def arc_lanelet():
    return build_turn_road(RoadSpec(entry_length=0.0, radius=10.0, turn_angle=math.pi / 2, exit_length=0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---------------------------------------------------------------- acceptance summary

_criteria = {}  # id -> [description, passed]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or not rep.passed:
        entry = _criteria.setdefault(mark.args[0], [mark.args[1], True])
        entry[1] = entry[1] and rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_criteria, key=lambda c: int(c[1:])):
        desc, ok = _criteria[cid]
        terminalreporter.write_line(f"{cid:<4} {'PASS' if ok else 'FAIL'}  {desc}")

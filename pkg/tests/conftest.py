import os
import sys
from fractions import Fraction

import hypothesis
import numpy as np
import pytest

from narxaqi.aqi import BreakpointTable, PollutantBreakpoints, Segment, load_breakpoints

sys.path.insert(0, os.path.dirname(__file__))

np.seterr(all="raise", under="ignore")

hypothesis.settings.register_profile("ci", max_examples=200, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=25, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


@pytest.fixture(scope="session")
def epa():
    return load_breakpoints()


@pytest.fixture
def toy_table():
    """Two-segment table containing the (35.5, 55.4, 151, 200) segment."""
    segs = (Segment(Fraction(0), Fraction("35.4"), 0, 150),
            Segment(Fraction("35.5"), Fraction("55.4"), 151, 200))
    return BreakpointTable({"X": PollutantBreakpoints("X", segs, decimals=1)})


TRACES_CHECKED = [0]


@pytest.fixture(autouse=True)
def _check_every_trace(monkeypatch):
    """Every training run in the suite must descend monotonically with exact mu updates."""
    from narxaqi import evalpipe, lm
    from oracles import assert_trace_valid
    real = lm.train

    def checked(net, train_frame, val_frame=None, config=lm.TrainConfig()):
        trained, trace = real(net, train_frame, val_frame, config)
        assert_trace_valid(trace, config)
        TRACES_CHECKED[0] += 1
        return trained, trace

    monkeypatch.setattr(lm, "train", checked)
    monkeypatch.setattr(evalpipe, "train", checked)


def pytest_terminal_summary(terminalreporter):
    """Echo the per-criterion PASS/FAIL lines recorded by test_acceptance."""
    lines = [v for reports in terminalreporter.stats.values() for r in reports
             for k, v in getattr(r, "user_properties", ()) if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(set(lines), key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)

import numpy as np
import pytest
from hypothesis import strategies as st

from tdoracle.graph import TDGraph
from tdoracle.ttf import TTF

DAY = 86400.0


@st.composite
def ttfs(draw, period=DAY, max_points=5, min_delay=1.0, max_delay=600.0):
    """Random FIFO functions: breakpoints on a coarse grid, delays kept gentle."""
    k = draw(st.integers(1, max_points))
    grid = draw(st.lists(st.integers(0, 95), min_size=k, max_size=k, unique=True))
    times = sorted(g * period / 96 for g in grid)
    delays = [draw(st.floats(min_delay, max_delay, allow_nan=False)) for _ in times]
    f = TTF(times, delays, period)
    if not f.is_fifo():
        # flatten until FIFO; steep drops only occur with close breakpoints
        f = TTF(times, [max(delays)] * len(times), period)
    return f


def line_graph(delays, period=DAY):
    """Vertices 0..k, arcs i -> i+1 and back, constant delays."""
    tails, heads, fs = [], [], []
    for i, d in enumerate(delays):
        for a, b in ((i, i + 1), (i + 1, i)):
            tails.append(a)
            heads.append(b)
            fs.append(TTF.constant(d, period))
    return TDGraph(len(delays) + 1, tails, heads, fs, period)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance report ---------------------------------------------------------

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        num = int(report.nodeid.split("test_criterion_")[1][:2])
        _ACCEPTANCE[num] = report.passed


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    from test_acceptance import DETAILS, TITLES

    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        verdict = "PASS" if _ACCEPTANCE[num] else "FAIL"
        detail = DETAILS.get(num, "")
        terminalreporter.write_line(f"criterion {num:2d} {verdict}  {TITLES[num]}" + (f"  [{detail}]" if detail else ""))

import sys

import numpy as np
import pytest
from hypothesis import settings, strategies as st

from corpus_forge.timeline import Segment, Timeline

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

HORIZON_MS = 5_000


@st.composite
def segments(draw, horizon=HORIZON_MS):
    a = draw(st.integers(0, horizon - 1))
    b = draw(st.integers(a + 1, horizon))
    return Segment(a, b)


def timelines(horizon=HORIZON_MS, max_size=8):
    return st.lists(segments(horizon), max_size=max_size).map(Timeline)


def mask(tl, horizon=HORIZON_MS):
    m = np.zeros(horizon, dtype=bool)
    for s in tl:
        m[s.start:s.end] = True
    return m


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda l: int(l.split()[1].rstrip("."))):
        terminalreporter.write_line(line)

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from loadid.oracle import HarmonicExcitation, steady_state_frame

settings.register_profile(
    "loadid", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("loadid")

TWO_TONE = HarmonicExcitation(((50.0, 100.0, 0.0), (150.0, 20.0, 0.0)))
RATE = 10_000.0


def two_tone_frame(topology, params, duration_s=0.2, excitation=TWO_TONE):
    return steady_state_frame(topology, params, excitation, duration_s, RATE)


def rel_err(a, b):
    return abs(a - b) / abs(b)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance tests append "criterion N: PASS|FAIL ..." lines here; they are
# printed in the terminal summary so they show up without ``-s``.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

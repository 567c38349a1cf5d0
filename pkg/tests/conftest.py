from __future__ import annotations

import time

import numpy as np
import pytest

from gazegate.core import EventLabel, GazeSeries
from gazegate.synth import SynthConfig, generate_dataset

F = int(EventLabel.FIXATION)
S = int(EventLabel.SACCADE)
U = int(EventLabel.UNLABELED)


def make_series(x, y, t=None, e=None, rate=100.0, subject="s", stimulus="img"):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if t is None:
        t = np.arange(len(x)) * (1000.0 / rate)
    if e is None:
        e = np.full(len(x), U)
    return GazeSeries(x, y, t, e, rate, subject, stimulus)


def step_series(rate=100.0, hold_ms=300.0, amp=10.0, speed=500.0, x0=100.0, y0=90.0):
    """Hold, move eastward along the equator at ``speed`` deg/s, hold."""
    period = 1000.0 / rate
    n_hold = int(round(hold_ms / period))
    n_move = int(round(amp / speed * 1000.0 / period))
    step = amp / n_move
    xs = [x0] * n_hold + [x0 + step * (i + 1) for i in range(n_move)] + [x0 + amp] * n_hold
    return make_series(xs, [y0] * len(xs), rate=rate)


@pytest.fixture(scope="session")
def small_dataset():
    return generate_dataset(SynthConfig(subjects=4, stimuli=8, duration_s=6.0, seed=3))


@pytest.fixture(scope="session")
def standard_dataset():
    """The acceptance dataset (Distinct preset, 18 subjects, 50 stimuli, 25 s @ 120 Hz, seed 42)."""
    start = time.perf_counter()
    ds = generate_dataset(SynthConfig())
    GENERATION_SECONDS["standard"] = time.perf_counter() - start
    return ds


GENERATION_SECONDS: dict[str, float] = {}
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import settings, strategies as st

from sensetx.cli import bundled_scenario_text, parse_scenario
from sensetx.model import BusyInterval, PhysicalParams, Scenario, Task

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

# reference constants: 10 MHz, -79.5 dBm, 500 cycles per bit, alpha = 1e-28
REFERENCE_PARAMS = PhysicalParams(1e-28, 500.0, 10 ** ((-79.5 - 30) / 10), 1e-3, 1e7)
# sensing and transmission costs of the same order, so E(h) has visible curvature
BALANCED_PARAMS = PhysicalParams(0.01, 1.0, 1.0, 1.0, 20.0)


@pytest.fixture(scope="session")
def reference() -> Scenario:
    return parse_scenario(json.loads(bundled_scenario_text())).scenario


@pytest.fixture(scope="session")
def reference_balanced(reference) -> Scenario:
    return reference.replace(params=BALANCED_PARAMS)


def random_scenario(rng: np.random.Generator, params: PhysicalParams = BALANCED_PARAMS,
                    n_range=(2, 7), busy: bool = True, buffered: bool = False) -> Scenario:
    n = int(rng.integers(*n_range))
    ts = np.sort(rng.choice(np.arange(1, 100), n, replace=False)).astype(float)
    ds = rng.integers(1, 50, n).astype(float)
    interval = None
    if busy:
        b1 = float(rng.uniform(0.5, ts[-1] - 2))
        b2 = float(rng.uniform(b1 + 0.5, ts[-1] - 0.1))
        interval = BusyInterval(b1, b2)
    buf = float(rng.uniform(ds.max(), ds.sum())) if buffered else None
    return Scenario(tuple(Task(t, d) for t, d in zip(ts, ds)), params, interval, buf)


@st.composite
def scenarios(draw, busy: bool = True, buffered: bool = False, params=BALANCED_PARAMS):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    return random_scenario(np.random.default_rng(seed), params, busy=busy, buffered=buffered)


@st.composite
def staircases(draw, max_points: int = 8):
    """Strictly increasing times with nondecreasing cumulative demand."""
    n = draw(st.integers(1, max_points))
    gaps = draw(st.lists(st.floats(0.1, 20.0), min_size=n, max_size=n))
    data = draw(st.lists(st.floats(0.0, 50.0), min_size=n, max_size=n))
    if sum(data) <= 0:
        data[-1] = 1.0
    ts = np.cumsum(gaps)
    vs = np.cumsum(data)
    return tuple(zip(ts.tolist(), vs.tolist()))

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sensetx.model import InfeasibleBuffer, InfeasibleTunnel, RateSchedule
from sensetx.sp import (FloorSpec, Tunnel, buffer_ceiling, pull_above_floor, pull_in_tunnel,
                        pull_with_buffer, tunnel_bounds)

from conftest import staircases

REL = 1e-9


def rows(s: RateSchedule):
    return [tuple(round(x, 9) for x in r) for r in s.as_rows()]


# ---------------------------------------------------------------- worked examples


def test_floor_two_tasks():
    s = pull_above_floor(FloorSpec.from_tasks([1, 2], [2, 1]))
    assert rows(s) == [(0, 1, 2), (1, 2, 1)]


def test_floor_single_span_is_constant():
    s = pull_above_floor(FloorSpec.from_tasks([8], [3]))
    assert rows(s) == [(0, 8, 0.375)]


def test_floor_reference_transmission():
    s = pull_above_floor(FloorSpec.from_tasks([10, 20, 80, 90, 200], [500, 500, 500, 700, 300]))
    assert rows(s) == [(0, 20, 50), (20, 90, round(1200 / 70, 9)), (90, 200, round(300 / 110, 9))]


def test_floor_terminus_beyond_last_breakpoint():
    s = pull_above_floor(FloorSpec(((1.0, 1.0),), terminus=(4.0, 2.0)))
    assert rows(s) == [(0, 1, 1), (1, 4, round(1 / 3, 9))]


def test_floor_empty_returns_empty_schedule():
    assert pull_above_floor(FloorSpec(())).segments == ()


def test_floor_ties_pick_latest():
    # (1,1), (2,2), (3,3) are collinear: one segment, not three
    s = pull_above_floor(FloorSpec.from_tasks([1, 2, 3], [1, 1, 1]))
    assert rows(s) == [(0, 3, 1)]


def test_floor_terminus_below_floor_rejected():
    with pytest.raises(InfeasibleTunnel):
        FloorSpec(((1.0, 5.0),), terminus=(2.0, 4.0))


def test_tunnel_ceiling_forces_increase():
    s = pull_in_tunnel(Tunnel(FloorSpec(((4.0, 4.0),)), ((2.0, 1.0),)))
    assert rows(s) == [(0, 2, 0.5), (2, 4, 1.5)]


def test_tunnel_infinite_ceiling_matches_floor():
    floor = FloorSpec.from_tasks([1, 3, 4, 9], [5, 1, 2, 2])
    caps = tuple((t, math.inf) for t, _ in floor.breakpoints)
    assert pull_in_tunnel(Tunnel(floor, caps)) == pull_above_floor(floor)


def test_tunnel_zero_width_traces_floor():
    floor = FloorSpec.from_tasks([1, 3, 4, 9], [5, 1, 2, 2])
    s = pull_in_tunnel(Tunnel(floor, floor.breakpoints))
    assert rows(s) == [(0, 1, 5), (1, 3, 0.5), (3, 4, 2), (4, 9, 0.4)]


def test_tunnel_empty_rejected():
    floor = FloorSpec(((2.0, 3.0), (4.0, 4.0)))
    with pytest.raises(InfeasibleTunnel):
        pull_in_tunnel(Tunnel(floor, ((1.0, 0.5), (3.0, 2.0))))


def test_buffer_large_matches_floor():
    floor = FloorSpec.from_tasks([1, 2, 5], [2, 1, 4])
    assert pull_with_buffer(floor, 7.0) == pull_above_floor(floor)
    assert pull_with_buffer(floor, math.inf) == pull_above_floor(floor)


def test_buffer_tangent_ceiling_is_feasible():
    floor = FloorSpec.from_tasks([1, 2], [2, 1])
    assert rows(pull_with_buffer(floor, 2.0)) == [(0, 1, 2), (1, 2, 1)]


def test_buffer_boundary_equality():
    # ceiling at t=1 is exactly 2 = the constant-rate curve; closed inequality keeps it
    floor = FloorSpec.from_tasks([1, 2], [2, 2])
    assert rows(pull_with_buffer(floor, 2.0)) == [(0, 2, 2)]


def test_buffer_smaller_than_task_is_infeasible():
    with pytest.raises(InfeasibleBuffer):
        pull_with_buffer(FloorSpec.from_tasks([1, 2], [1, 3]), 2.0)


def test_buffer_ceiling_values():
    floor = FloorSpec.from_tasks([1, 2], [2, 1])
    assert buffer_ceiling(floor, 2.0) == ((1.0, 2.0), (2.0, 4.0))


def test_buffer_binding_example():
    # unconstrained curve reaches 9.1 at t=10, but only 1 bit is consumed by then
    floor = FloorSpec.from_tasks([1, 10, 11], [1, 1, 8])
    assert rows(pull_above_floor(floor)) == [(0, 1, 1), (1, 11, 0.9)]
    s = pull_with_buffer(floor, 8.0)
    assert rows(s) == [(0, 1, 1), (1, 10, round(8 / 9, 9)), (10, 11, 1)]


# ---------------------------------------------------------------- properties


def _curve_points(floor: FloorSpec, caps, sched: RateSchedule):
    times = {t for t, _ in floor.breakpoints} | {t for t, _ in caps} | set(sched.breakpoints)
    return sorted(t for t in times if t <= sched.end)


def _floor_at(floor: FloorSpec, t: float) -> float:
    vals = [v for s, v in floor.breakpoints if s <= t]
    return max(vals) if vals else floor.origin[1]


@given(staircases())
def test_floor_rates_nonincreasing_and_drop_only_on_floor(bps):
    floor = FloorSpec(bps)
    s = pull_above_floor(floor)
    D = bps[-1][1]
    rates = s.rates
    assert np.all(np.diff(rates) <= REL * max(rates.max(), 1.0))
    for seg_a, seg_b in zip(s.segments, s.segments[1:]):
        if seg_b.rate < seg_a.rate * (1 - REL):
            t = seg_a.end
            assert s.cumulative(t) == pytest.approx(_floor_at(floor, t), abs=REL * D)
    assert s.total() == pytest.approx(D, rel=1e-12)
    for t, v in bps:
        assert s.cumulative(t) >= v - REL * D


@st.composite
def tunnels(draw):
    bps = draw(staircases())
    caps = []
    for t, v in bps[:-1]:
        slack = draw(st.floats(0.0, 30.0))
        caps.append((t, v + slack))
    # extra ceiling-only instants between breakpoints
    for (t0, v0), (t1, v1) in zip(((0.0, 0.0),) + bps[:-1], bps):
        if draw(st.booleans()):
            tm = (t0 + t1) / 2
            caps.append((tm, v0 + draw(st.floats(0.0, 30.0))))
    return Tunnel(FloorSpec(bps), tuple(caps))


@given(tunnels())
def test_tunnel_stays_inside_and_bends_only_at_contacts(tunnel):
    s = pull_in_tunnel(tunnel)
    floor = tunnel.floor
    D = floor.terminus[1]
    tol = REL * max(D, 1.0)
    ceil = {}
    for t, a in tunnel.ceiling:
        ceil[t] = min(a, ceil.get(t, math.inf))
    for t in _curve_points(floor, tunnel.ceiling, s):
        x = s.cumulative(t)
        assert x >= _floor_at(floor, t) - tol
        assert x <= ceil.get(t, math.inf) + tol
    for a, b in zip(s.segments, s.segments[1:]):
        t = a.end
        x = s.cumulative(t)
        scale = REL * max(a.rate, b.rate, 1.0)
        if b.rate < a.rate - scale:
            assert x == pytest.approx(_floor_at(floor, t), abs=tol)
        elif b.rate > a.rate + scale:
            assert x == pytest.approx(ceil[t], abs=tol)


@given(staircases())
def test_buffer_infinite_is_floor_segment_for_segment(bps):
    floor = FloorSpec(bps)
    assert pull_with_buffer(floor, math.inf).segments == pull_above_floor(floor).segments


@given(tunnels(), st.integers(0, 2 ** 32 - 1))
def test_taut_string_beats_feasible_perturbations(tunnel, seed):
    """Cost and length of the string are <= any feasible perturbation's."""
    s = pull_in_tunnel(tunnel)
    times, lower, upper = tunnel_bounds(tunnel)
    grid = np.array([0.0] + list(times))
    base = np.asarray(s.cumulative(grid))
    rng = np.random.default_rng(seed)
    costs = [lambda r: r ** 2, lambda r: np.expm1(r / 10.0), lambda r: r ** 4]

    def measure(values):
        dt, dv = np.diff(grid), np.diff(values)
        rate = dv / dt
        return [float(np.sum(f(rate) * dt)) for f in costs] + [float(np.sum(np.hypot(dt, dv)))]

    ref = measure(base)
    lo = np.array([0.0] + lower)
    hi = np.array([0.0] + upper)
    for _ in range(40):
        pert = base + rng.normal(0, 2.0, len(base)) * (rng.random(len(base)) < 0.5)
        pert[0], pert[-1] = 0.0, base[-1]
        pert = np.maximum.accumulate(np.clip(pert, lo, hi))
        if np.any(pert > hi + 1e-12):
            continue
        got = measure(pert)
        for a, b in zip(ref, got):
            assert a <= b * (1 + 1e-9) + 1e-9

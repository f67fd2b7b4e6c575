from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sensetx.model import (BusyInterval, InfeasibleScenario, PhysicalParams, RateSchedule,
                           Scenario, ScenarioError, Segment, Task, build_epoch_grid,
                           check_feasibility, sensing_energy, transmission_energy)
from sensetx.solve import optimize

from conftest import BALANCED_PARAMS, REFERENCE_PARAMS, scenarios


def tasks(*pairs):
    return tuple(Task(t, d) for t, d in pairs)


def flat(rate, end, start=0.0):
    return RateSchedule((Segment(start, end, rate),))


class TestScenario:
    def test_rejects_empty_and_unsorted(self):
        with pytest.raises(ScenarioError):
            Scenario((), BALANCED_PARAMS)
        with pytest.raises(ScenarioError):
            Scenario(tasks((2, 1), (1, 1)), BALANCED_PARAMS)
        with pytest.raises(ScenarioError):
            Scenario(tasks((1, 0)), BALANCED_PARAMS)

    @pytest.mark.parametrize("deadline,data", [(math.nan, 1), (1, math.inf), (1, -1), (0, 1)])
    def test_rejects_bad_numbers(self, deadline, data):
        with pytest.raises(ScenarioError):
            Task(deadline, data)

    def test_busy_must_end_before_last_deadline(self):
        with pytest.raises(ScenarioError):
            Scenario(tasks((10, 1)), BALANCED_PARAMS, BusyInterval(2, 10))
        with pytest.raises(ScenarioError):
            BusyInterval(5, 5)

    def test_buffer_smaller_than_a_task_is_infeasible(self):
        with pytest.raises(InfeasibleScenario):
            Scenario(tasks((1, 1), (2, 3)), BALANCED_PARAMS, buffer=2.0)

    def test_params_positive(self):
        with pytest.raises(ScenarioError):
            PhysicalParams(0.0, 1, 1, 1, 1)

    def test_demand_queries(self, reference):
        assert reference.demand_by(80) == 1500
        assert reference.demand_before(80) == 1000
        assert reference.demand_by(85) == 1500
        assert reference.demand_by(5) == 0.0
        assert reference.total_data == 2500


class TestEpochGrid:
    def test_reference_grid(self, reference):
        g = build_epoch_grid(reference)
        assert g.instants == (10, 20, 55, 80, 85, 90, 200)
        assert g.demands == (500, 500, 0, 500, 0, 700, 300)
        assert sum(g.durations) == 200

    def test_single_task(self):
        g = build_epoch_grid(Scenario(tasks((7, 3)), BALANCED_PARAMS))
        assert g.instants == (7,) and g.demands == (3,)

    def test_busy_endpoint_on_deadline_merges(self):
        sc = Scenario(tasks((10, 1), (20, 2), (30, 1)), BALANCED_PARAMS, BusyInterval(20, 25))
        g = build_epoch_grid(sc)
        assert g.instants == (10, 20, 25, 30)
        assert g.demands == (1, 2, 0, 1)


class TestEnergy:
    def test_sensing_reference_arithmetic(self):
        e = sensing_energy(flat(1.5, 200), REFERENCE_PARAMS)
        assert e == pytest.approx(1.125e-20, rel=1e-12)

    def test_zero_rate_costs_nothing(self):
        z = flat(0.0, 10)
        assert sensing_energy(z, REFERENCE_PARAMS) == 0.0
        assert transmission_energy(z, REFERENCE_PARAMS) == 0.0

    def test_shannon_closed_form(self):
        p = PhysicalParams(1, 1, 2.0, 2.0, 3.0)
        assert transmission_energy(flat(3.0 * math.log(2), 1), p) == pytest.approx(1.0, rel=1e-14)

    def test_splitting_a_segment_is_free(self):
        one = flat(4.0, 10)
        two = RateSchedule((Segment(0, 5, 4.0), Segment(5, 10, 4.0)))
        for f in (sensing_energy, transmission_energy):
            assert f(one, BALANCED_PARAMS) == pytest.approx(f(two, BALANCED_PARAMS), rel=1e-15)

    def test_tiny_rates_keep_precision(self):
        # r/B ~ 1e-12: exp(x) - 1 would lose every significant digit
        e = transmission_energy(flat(1e-5, 1.0), REFERENCE_PARAMS)
        expected = REFERENCE_PARAMS.tx_coeff * 1e-5 / 1e7
        assert e == pytest.approx(expected, rel=1e-9)

    @given(st.lists(st.floats(0, 100), min_size=3, max_size=3),
           st.lists(st.floats(0, 100), min_size=3, max_size=3))
    def test_midpoint_convexity(self, a, b):
        edges = [0.0, 1.0, 2.5, 4.0]
        mk = lambda rs: RateSchedule(tuple(Segment(x, y, r) for x, y, r in zip(edges, edges[1:], rs)))
        mid = [(x + y) / 2 for x, y in zip(a, b)]
        for f in (sensing_energy, transmission_energy):
            lhs = f(mk(mid), BALANCED_PARAMS)
            rhs = (f(mk(a), BALANCED_PARAMS) + f(mk(b), BALANCED_PARAMS)) / 2
            assert lhs <= rhs * (1 + 1e-12) + 1e-12


class TestRateSchedule:
    def test_validation(self):
        with pytest.raises(ValueError):
            RateSchedule((Segment(0, 1, 1), Segment(2, 3, 1)))
        with pytest.raises(ValueError):
            RateSchedule((Segment(0, 1, -1),))
        with pytest.raises(ValueError):
            RateSchedule((Segment(1, 1, 1),))

    def test_cumulative_and_rate_at(self):
        s = RateSchedule((Segment(0, 2, 3), Segment(2, 5, 1)))
        assert s.cumulative(2) == 6
        assert s.cumulative(5) == 9
        assert s.cumulative(3.5) == 7.5
        assert s.rate_at(2) == 1 and s.rate_at(0) == 3

    def test_from_vertices_canonical_merges_collinear(self):
        s = RateSchedule.from_vertices([(0, 0), (1, 2), (2, 4), (3, 5)])
        assert s.as_rows() == [(0, 2, 2), (2, 3, 1)]

    def test_from_vertices_rejects_decreasing(self):
        with pytest.raises(ValueError):
            RateSchedule.from_vertices([(0, 0), (1, 2), (2, 1)])

    @given(st.lists(st.tuples(st.floats(0.001, 10), st.floats(0, 1e6)), min_size=1, max_size=60))
    def test_prefix_sums_do_not_drift(self, parts):
        t, segs = 0.0, []
        for dt, r in parts:
            segs.append(Segment(t, t + dt, r))
            t += dt
        s = RateSchedule(tuple(segs))
        exact = math.fsum(r * dt for dt, r in parts)
        assert s.total() == pytest.approx(exact, rel=1e-12, abs=1e-9)


class TestFeasibility:
    def test_no_busy_solution_is_feasible(self):
        sc = Scenario(tasks((2, 4), (5, 3)), BALANCED_PARAMS)
        sol = optimize(sc)
        assert check_feasibility(sc, sol.sensing, sol.transmission).ok

    def test_transmitting_before_sensing_is_flagged(self):
        sc = Scenario(tasks((2, 4), (5, 3)), BALANCED_PARAMS)
        sensing = RateSchedule((Segment(0, 2, 0.0), Segment(2, 5, 7 / 3)))
        tx = RateSchedule((Segment(0, 5, 7 / 5),))
        rep = check_feasibility(sc, sensing, tx)
        assert rep.causality is not None and rep.causality.time == pytest.approx(2.0)
        assert rep.sensing_demand is not None
        assert not rep.ok

    def test_busy_sensing_and_buffer_flags(self):
        sc = Scenario(tasks((2, 4), (5, 3)), BALANCED_PARAMS, BusyInterval(3, 4), buffer=4.0)
        s = flat(2.0, 5)
        rep = check_feasibility(sc, s, s)
        assert rep.busy_sensing is not None and rep.busy_sensing.time == 3
        assert rep.buffer is not None  # 10 bits delivered by t=5, cap is 4 + 4
        assert any(line.startswith("FAIL busy_sensing") for line in rep.lines())

    def test_span_mismatch(self):
        sc = Scenario(tasks((2, 4)), BALANCED_PARAMS)
        rep = check_feasibility(sc, flat(2, 1), flat(2, 2))
        assert rep.span is not None and not rep.ok

    def test_reference_optimum_is_feasible(self, reference):
        sol = optimize(reference)
        rep = check_feasibility(reference, sol.sensing, sol.transmission)
        assert rep.ok, rep.lines()

    @given(scenarios(), st.integers(0, 10), st.floats(0.0, 1.0))
    def test_monotone_in_rates(self, sc, k, frac):
        sol = optimize(sc)
        segs = list(sol.transmission.segments)
        k %= len(segs)
        lowered = segs[:k] + [segs[k]._replace(rate=segs[k].rate * frac)] + segs[k + 1:]
        rep = check_feasibility(sc, sol.sensing, RateSchedule(tuple(lowered)))
        assert rep.causality is None
        segs = list(sol.sensing.segments)
        k %= len(segs)
        busy = segs[k].start >= sc.busy.start and segs[k].end <= sc.busy.end
        if not busy:
            raised = segs[:k] + [segs[k]._replace(rate=segs[k].rate * (1 + frac))] + segs[k + 1:]
            rep = check_feasibility(sc, RateSchedule(tuple(raised)), sol.transmission)
            assert rep.sensing_demand is None

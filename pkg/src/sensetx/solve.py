"""Fixed-height schedulers, global optimisers and baseline schemes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .height import (CriticalHeight, SearchBounds, critical_heights, critical_heights_iterative,
                     energy_at, local_optimum, prepare, search_bounds, sub_areas)
from .model import (FEAS_RTOL, RateSchedule, Scenario, sensing_energy, transmission_energy)
from .sp import FloorSpec, pull_above_floor, pull_with_buffer

SCHEMES = ("JSTRC", "UB", "LB", "RH")
TIE_RTOL = 1e-12


class CausalityViolation(RuntimeError):
    """A fixed-height schedule transmitted data before it was sensed."""


@dataclass(frozen=True)
class AreaResult:
    lo: float
    hi: float
    height: float
    energy: float


@dataclass(frozen=True)
class Solution:
    height: float | None
    sensing: RateSchedule
    transmission: RateSchedule
    sensing_energy: float
    transmission_energy: float
    scheme: str = "JSTRC"
    bounds: SearchBounds | None = None
    critical_heights: tuple[CriticalHeight, ...] = ()
    areas: tuple[AreaResult, ...] = ()
    buffered: bool = False

    @property
    def total_energy(self) -> float:
        return self.sensing_energy + self.transmission_energy

    def as_dict(self) -> dict:
        b = self.bounds
        return {
            "scheme": self.scheme,
            "buffered": self.buffered,
            "height_bits": self.height,
            "sensing_energy_j": self.sensing_energy,
            "transmission_energy_j": self.transmission_energy,
            "total_energy_j": self.total_energy,
            "bounds": None if b is None else {
                "lower_bits": b.lower, "upper_bits": b.upper, "lower_clipped": b.lower_clipped},
            "critical_heights": [
                {"height_bits": c.height, "anchor": list(c.anchor), "side": c.side}
                for c in self.critical_heights],
            "areas": [vars(a) for a in self.areas],
            "sensing": [list(s) for s in self.sensing.segments],
            "transmission": [list(s) for s in self.transmission.segments],
        }


def _assert_causal(scenario: Scenario, sensing: RateSchedule, tx: RateSchedule) -> None:
    times = sorted(set(sensing.breakpoints) | set(tx.breakpoints))
    gap = np.asarray(tx.cumulative(times)) - np.asarray(sensing.cumulative(times))
    k = int(np.argmax(gap))
    if gap[k] > FEAS_RTOL * scenario.total_data:
        raise CausalityViolation(
            f"transmission leads sensing by {gap[k]:g} bits at t={times[k]:g}")


def _schedules(scenario: Scenario, h: float, buffered: bool) -> tuple[RateSchedule, RateSchedule]:
    core = prepare(scenario, buffered)
    core.check_height(h)
    sensing = RateSchedule.from_vertices(core.sensing_vertices(h))
    tx = RateSchedule.from_vertices(core.tx_vertices(h))
    _assert_causal(scenario, sensing, tx)
    return sensing, tx


def rates_for_height(scenario: Scenario, h: float) -> tuple[RateSchedule, RateSchedule]:
    """Optimal (sensing, transmission) when ``h`` bits are sensed by the blackout.

    The receiver buffer, if any, is ignored.  Without a busy interval both
    schedules are the plain floor string and ``h`` is unused.
    """
    if scenario.busy is None:
        s = _floor_only(scenario)
        return s, s
    return _schedules(scenario, h, False)


def rates_for_height_buffered(scenario: Scenario, h: float) -> tuple[RateSchedule, RateSchedule]:
    """As :func:`rates_for_height`, with transmission capped by the receiver buffer."""
    if scenario.buffer is None:
        return rates_for_height(scenario, h)
    if scenario.busy is None:
        return _floor_only(scenario), _buffered_only(scenario)
    return _schedules(scenario, h, True)


def _floor(scenario: Scenario) -> FloorSpec:
    return FloorSpec(tuple(zip(scenario.deadlines, scenario.cumulative_demand)))


def _floor_only(scenario: Scenario) -> RateSchedule:
    return pull_above_floor(_floor(scenario))


def _buffered_only(scenario: Scenario) -> RateSchedule:
    return pull_with_buffer(_floor(scenario), scenario.buffer)


def _solution(scenario: Scenario, h: float | None, sensing: RateSchedule, tx: RateSchedule,
              **extra) -> Solution:
    p = scenario.params
    return Solution(h, sensing, tx, sensing_energy(sensing, p), transmission_energy(tx, p), **extra)


def _without_blackout(scenario: Scenario, buffered: bool) -> Solution:
    sensing = _floor_only(scenario)
    tx = _buffered_only(scenario) if buffered else sensing
    return _solution(scenario, None, sensing, tx, buffered=buffered)


def _pick(results: Sequence[AreaResult]) -> AreaResult:
    best = min(r.energy for r in results)
    tied = [r for r in results if r.energy <= best * (1 + TIE_RTOL)]
    return max(tied, key=lambda r: r.height)


def _search(scenario: Scenario, bounds: SearchBounds, crit: list[CriticalHeight],
            buffered: bool) -> Solution:
    areas = sub_areas(scenario, bounds, [c.height for c in crit], buffered)
    results = []
    for area in areas:
        h, e = local_optimum(area, scenario, buffered)
        results.append(AreaResult(area.lo, area.hi, h, e))
    if not results:
        # degenerate bracket: a single admissible height
        h = bounds.lower
        results.append(AreaResult(h, h, h, sum(energy_at(scenario, h, buffered))))
    win = _pick(results)
    sensing, tx = _schedules(scenario, win.height, buffered)
    return _solution(scenario, win.height, sensing, tx, bounds=bounds,
                     critical_heights=tuple(crit), areas=tuple(results), buffered=buffered)


def optimize(scenario: Scenario) -> Solution:
    """Energy-optimal schedules with an unlimited receiver buffer."""
    if scenario.busy is None:
        return _without_blackout(scenario, False)
    bounds = search_bounds(scenario, buffered=False)
    return _search(scenario, bounds, critical_heights(scenario, bounds), False)


def optimize_buffered(scenario: Scenario) -> Solution:
    """Energy-optimal schedules when the receiver holds at most ``scenario.buffer`` bits."""
    if scenario.buffer is None:
        return optimize(scenario)
    if scenario.busy is None:
        return _without_blackout(scenario, True)
    bounds = search_bounds(scenario, buffered=True)
    if bounds.lower >= bounds.upper:
        sensing, tx = _schedules(scenario, bounds.lower, True)
        return _solution(scenario, bounds.lower, sensing, tx, bounds=bounds, buffered=True)
    crit = critical_heights_iterative(scenario, bounds, buffered=True)
    return _search(scenario, bounds, crit, True)


def solve(scenario: Scenario, buffered: bool | None = None) -> Solution:
    """Dispatch to the buffered optimiser when the scenario carries a buffer."""
    if buffered is None:
        buffered = scenario.buffer is not None
    return optimize_buffered(scenario) if buffered else optimize(scenario)


def baseline(scenario: Scenario, scheme: str, seed: int | np.random.Generator | None = 0,
             buffered: bool | None = None) -> Solution:
    """Fix the height at the upper bound (UB), lower bound (LB) or a uniform draw (RH)."""
    scheme = scheme.upper()
    if scheme == "JSTRC":
        return solve(scenario, buffered)
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if buffered is None:
        buffered = scenario.buffer is not None
    if scenario.busy is None:
        return _without_blackout(scenario, buffered)
    bounds = search_bounds(scenario, buffered=buffered)
    lo, hi = sorted((bounds.lower, bounds.upper))
    if scheme == "UB":
        h = bounds.upper
    elif scheme == "LB":
        h = bounds.lower
    else:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        h = float(rng.uniform(lo, hi)) if hi > lo else lo
    sensing, tx = _schedules(scenario, h, buffered)
    return _solution(scenario, h, sensing, tx, scheme=scheme, bounds=bounds, buffered=buffered)

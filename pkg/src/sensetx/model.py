"""Domain types, energy functionals and feasibility checking.

Everything here is immutable.  Times are seconds, data sizes are bits and
rates are bits per second.  A schedule is a piecewise-constant rate function
on ``[0, t_N]``; its running integral (the *cumulative curve*) is what the
string-pulling kernels reason about.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

# relative tie band for slope / rate comparisons
EPS_SLOPE = 1e-9
# relative tolerance (times total data) used by feasibility checks
FEAS_RTOL = 1e-9


class ScenarioError(ValueError):
    """Malformed or out-of-range scenario input."""


class InfeasibleError(Exception):
    """Base class for every "no feasible schedule" condition."""


class InfeasibleScenario(InfeasibleError):
    pass


class InfeasibleTunnel(InfeasibleError):
    pass


class InfeasibleBuffer(InfeasibleError):
    pass


class InfeasibleHeight(InfeasibleError):
    pass


class NoBusyInterval(ValueError):
    """Raised by height-related operations on scenarios without a blackout."""


def _finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ScenarioError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class Task:
    deadline: float
    data: float

    def __post_init__(self):
        d = _finite("deadline", self.deadline)
        b = _finite("data", self.data)
        if d <= 0:
            raise ScenarioError(f"task deadline must be > 0, got {d}")
        if b < 0:
            raise ScenarioError(f"task data must be >= 0, got {b}")
        object.__setattr__(self, "deadline", d)
        object.__setattr__(self, "data", b)


@dataclass(frozen=True)
class BusyInterval:
    start: float
    end: float

    def __post_init__(self):
        s = _finite("busy start", self.start)
        e = _finite("busy end", self.end)
        if not 0 < s < e:
            raise ScenarioError(f"busy interval must satisfy 0 < start < end, got [{s}, {e}]")
        object.__setattr__(self, "start", s)
        object.__setattr__(self, "end", e)


@dataclass(frozen=True)
class PhysicalParams:
    """Circuit and channel constants.

    Sensing power is ``alpha * (C * s)**2``; transmission power is
    ``noise_power / channel_gain * (exp(r / bandwidth) - 1)``.
    """

    alpha: float
    cycles_per_bit: float
    noise_power: float
    channel_gain: float
    bandwidth: float

    def __post_init__(self):
        for name in ("alpha", "cycles_per_bit", "noise_power", "channel_gain", "bandwidth"):
            v = _finite(name, getattr(self, name))
            if v <= 0:
                raise ScenarioError(f"{name} must be > 0, got {v}")
            object.__setattr__(self, name, v)

    @property
    def sense_coeff(self) -> float:
        return self.alpha * self.cycles_per_bit ** 2

    @property
    def tx_coeff(self) -> float:
        return self.noise_power / self.channel_gain

    def with_gain(self, gain: float) -> "PhysicalParams":
        return PhysicalParams(self.alpha, self.cycles_per_bit, self.noise_power, gain, self.bandwidth)


@dataclass(frozen=True)
class Scenario:
    tasks: tuple[Task, ...]
    params: PhysicalParams
    busy: BusyInterval | None = None
    buffer: float | None = None

    def __post_init__(self):
        tasks = tuple(self.tasks)
        object.__setattr__(self, "tasks", tasks)
        if not tasks:
            raise ScenarioError("scenario needs at least one task")
        for a, b in zip(tasks, tasks[1:]):
            if not b.deadline > a.deadline:
                raise ScenarioError("task deadlines must be strictly increasing")
        if not sum(t.data for t in tasks) > 0:
            raise ScenarioError("total data must be > 0")
        if self.busy is not None and not self.busy.end < tasks[-1].deadline:
            raise ScenarioError("busy interval must end before the last deadline")
        if self.buffer is not None:
            buf = _finite("buffer", self.buffer)
            if buf <= 0:
                raise ScenarioError(f"buffer must be > 0, got {buf}")
            object.__setattr__(self, "buffer", buf)
            biggest = max(t.data for t in tasks)
            if buf < biggest:
                raise InfeasibleScenario(
                    f"buffer {buf:g} bits is smaller than the largest task ({biggest:g} bits)")

    @property
    def deadlines(self) -> tuple[float, ...]:
        return tuple(t.deadline for t in self.tasks)

    @property
    def horizon(self) -> float:
        return self.tasks[-1].deadline

    @property
    def total_data(self) -> float:
        return math.fsum(t.data for t in self.tasks)

    @property
    def cumulative_demand(self) -> tuple[float, ...]:
        out, acc = [], []
        for t in self.tasks:
            acc.append(t.data)
            out.append(math.fsum(acc))
        return tuple(out)

    def demand_by(self, t: float) -> float:
        """Data due at deadlines ``<= t``."""
        k = bisect.bisect_right(self.deadlines, t)
        return self.cumulative_demand[k - 1] if k else 0.0

    def demand_before(self, t: float) -> float:
        """Data due at deadlines ``< t`` (already consumed at instant ``t``)."""
        k = bisect.bisect_left(self.deadlines, t)
        return self.cumulative_demand[k - 1] if k else 0.0

    def replace(self, **changes) -> "Scenario":
        kw = dict(tasks=self.tasks, params=self.params, busy=self.busy, buffer=self.buffer)
        kw.update(changes)
        return Scenario(**kw)


class Segment(NamedTuple):
    start: float
    end: float
    rate: float

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class RateSchedule:
    """Piecewise-constant rate function given as contiguous segments."""

    segments: tuple[Segment, ...]
    _times: tuple[float, ...] = field(init=False, repr=False, compare=False)
    _values: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        segs = tuple(Segment(float(a), float(b), float(r)) for a, b, r in self.segments)
        object.__setattr__(self, "segments", segs)
        for s in segs:
            if not s.end > s.start:
                raise ValueError(f"segment {s} has non-positive length")
            if s.rate < 0 or not math.isfinite(s.rate):
                raise ValueError(f"segment {s} has an invalid rate")
        for a, b in zip(segs, segs[1:]):
            if a.end != b.start:
                raise ValueError(f"segments {a} and {b} are not contiguous")
        times = [segs[0].start] if segs else []
        values = [0.0] if segs else []
        parts: list[float] = []
        for s in segs:
            parts.append(s.rate * s.duration)
            times.append(s.end)
            values.append(math.fsum(parts))
        object.__setattr__(self, "_times", tuple(times))
        object.__setattr__(self, "_values", tuple(values))

    @classmethod
    def from_vertices(cls, vertices: Sequence[tuple[float, float]], canonical: bool = True) -> "RateSchedule":
        """Schedule whose cumulative curve interpolates ``vertices``."""
        segs = []
        for (t0, v0), (t1, v1) in zip(vertices, vertices[1:]):
            if t1 <= t0:
                continue
            rate = (v1 - v0) / (t1 - t0)
            if rate < 0:
                if v0 - v1 > EPS_SLOPE * max(abs(v0), abs(v1), 1.0):
                    raise ValueError(f"decreasing cumulative curve between t={t0} and t={t1}")
                rate = 0.0
            segs.append(Segment(t0, t1, rate))
        sched = cls(tuple(segs))
        return sched.canonical() if canonical else sched

    @classmethod
    def concat(cls, *parts: "RateSchedule") -> "RateSchedule":
        segs: list[Segment] = []
        for p in parts:
            segs.extend(p.segments)
        return cls(tuple(segs))

    @property
    def start(self) -> float:
        return self.segments[0].start

    @property
    def end(self) -> float:
        return self.segments[-1].end

    @property
    def rates(self) -> np.ndarray:
        return np.array([s.rate for s in self.segments])

    @property
    def durations(self) -> np.ndarray:
        return np.array([s.duration for s in self.segments])

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return self._times

    @property
    def vertex_values(self) -> tuple[float, ...]:
        return self._values

    def total(self) -> float:
        return self._values[-1] if self._values else 0.0

    def cumulative(self, t):
        """Running integral of the rate from the schedule start to ``t``."""
        if not self.segments:
            return np.zeros_like(np.asarray(t, dtype=float)) if np.ndim(t) else 0.0
        out = np.interp(t, self._times, self._values)
        return float(out) if np.ndim(out) == 0 else out

    def rate_at(self, t: float) -> float:
        """Rate on the segment containing ``t`` (right-continuous)."""
        k = bisect.bisect_right(self._times, t) - 1
        k = min(max(k, 0), len(self.segments) - 1)
        return self.segments[k].rate

    def canonical(self) -> "RateSchedule":
        """Merge adjacent segments whose rates agree within the tie band."""
        merged: list[list[float]] = []
        for s in self.segments:
            if merged:
                a, _, r = merged[-1]
                if abs(s.rate - r) <= EPS_SLOPE * max(abs(s.rate), abs(r)):
                    area = r * (merged[-1][1] - a) + s.rate * s.duration
                    merged[-1] = [a, s.end, area / (s.end - a)]
                    continue
            merged.append([s.start, s.end, s.rate])
        return RateSchedule(tuple(Segment(*m) for m in merged))

    def as_rows(self) -> list[tuple[float, float, float]]:
        return [tuple(s) for s in self.segments]


@dataclass(frozen=True)
class EpochGrid:
    instants: tuple[float, ...]
    durations: tuple[float, ...]
    demands: tuple[float, ...]


def build_epoch_grid(scenario: Scenario) -> EpochGrid:
    """Merge task deadlines and busy endpoints into one sorted grid."""
    demand = {t.deadline: t.data for t in scenario.tasks}
    if scenario.busy is not None:
        for b in (scenario.busy.start, scenario.busy.end):
            demand.setdefault(b, 0.0)
    instants = tuple(sorted(demand))
    durations = tuple(b - a for a, b in zip((0.0,) + instants, instants))
    return EpochGrid(instants, durations, tuple(demand[t] for t in instants))


def sensing_energy(schedule: RateSchedule, params: PhysicalParams) -> float:
    c = params.sense_coeff
    return math.fsum(c * s.rate ** 2 * s.duration for s in schedule.segments)


def transmission_energy(schedule: RateSchedule, params: PhysicalParams) -> float:
    c, bw = params.tx_coeff, params.bandwidth
    # expm1 keeps full precision when r << B, which is the usual regime
    return math.fsum(c * math.expm1(s.rate / bw) * s.duration for s in schedule.segments)


class Violation(NamedTuple):
    time: float
    amount: float


@dataclass(frozen=True)
class FeasibilityReport:
    sensing_demand: Violation | None = None
    transmission_demand: Violation | None = None
    causality: Violation | None = None
    busy_sensing: Violation | None = None
    buffer: Violation | None = None
    span: str | None = None

    @property
    def ok(self) -> bool:
        return all(v is None for v in self.as_dict().values())

    def as_dict(self) -> dict:
        return {
            "span": self.span,
            "sensing_demand": self.sensing_demand,
            "transmission_demand": self.transmission_demand,
            "causality": self.causality,
            "busy_sensing": self.busy_sensing,
            "buffer": self.buffer,
        }

    def lines(self) -> list[str]:
        out = []
        for name, v in self.as_dict().items():
            if v is None:
                out.append(f"PASS {name}")
            elif isinstance(v, str):
                out.append(f"FAIL {name}: {v}")
            else:
                out.append(f"FAIL {name}: t={v.time:.9g} s, by {v.amount:.9g}")
        return out


def _first(points: Iterable[tuple[float, float]]) -> Violation | None:
    for t, amount in points:
        return Violation(t, amount)
    return None


def check_feasibility(scenario: Scenario, sensing: RateSchedule, transmission: RateSchedule,
                      rtol: float = FEAS_RTOL) -> FeasibilityReport:
    """Evaluate every constraint of the joint problem; violations are reported, not raised."""
    horizon = scenario.horizon
    tol = rtol * scenario.total_data
    for name, sched in (("sensing", sensing), ("transmission", transmission)):
        if not sched.segments or sched.start != 0.0 or not math.isclose(sched.end, horizon, rel_tol=1e-12):
            return FeasibilityReport(span=f"{name} schedule does not span [0, {horizon:g}]")

    deadlines = np.array(scenario.deadlines)
    need = np.array(scenario.cumulative_demand)
    s_at = sensing.cumulative(deadlines)
    r_at = transmission.cumulative(deadlines)
    sense_bad = _first((t, n - v) for t, v, n in zip(deadlines, s_at, need) if v < n - tol)
    tx_bad = _first((t, n - v) for t, v, n in zip(deadlines, r_at, need) if v < n - tol)

    # both curves are piecewise linear, so the gap is extremal at breakpoints
    grid = np.unique(np.concatenate([sensing.breakpoints, transmission.breakpoints, deadlines]))
    gap = sensing.cumulative(grid) - transmission.cumulative(grid)
    causal_bad = _first((t, -g) for t, g in zip(grid, gap) if g < -tol)

    busy_bad = None
    if scenario.busy is not None:
        b1, b2 = scenario.busy.start, scenario.busy.end
        rate_tol = tol / horizon
        for s in sensing.segments:
            overlap = min(s.end, b2) - max(s.start, b1)
            if overlap > 0 and s.rate > rate_tol:
                busy_bad = Violation(max(s.start, b1), s.rate)
                break

    buf_bad = None
    if scenario.buffer is not None:
        for t in build_epoch_grid(scenario).instants:
            excess = transmission.cumulative(t) - scenario.demand_before(t) - scenario.buffer
            if excess > tol:
                buf_bad = Violation(t, excess)
                break

    return FeasibilityReport(sense_bad, tx_bad, causal_bad, busy_bad, buf_bad)

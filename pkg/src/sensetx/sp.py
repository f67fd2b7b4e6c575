"""String-pulling kernels.

A cumulative curve that must stay above a staircase of demands (and, in the
tunnel case, below a set of caps) has minimal energy for *any* convex rate
cost when it is the taut string between its end points.  The kernels below
return the taut string as a canonical :class:`RateSchedule`.

``floor_vertices`` and ``tunnel_vertices`` work on plain float lists and are
what the height search calls in its inner loops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .model import EPS_SLOPE, InfeasibleBuffer, InfeasibleTunnel, RateSchedule

INF = math.inf
Point = tuple[float, float]


@dataclass(frozen=True)
class FloorSpec:
    """Demand staircase ``(time, cumulative bits)`` plus the string's end points.

    ``terminus`` defaults to the last breakpoint.
    """

    breakpoints: tuple[Point, ...]
    origin: Point = (0.0, 0.0)
    terminus: Point | None = None

    def __post_init__(self):
        bps = tuple((float(t), float(v)) for t, v in self.breakpoints)
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        for (ta, va), (tb, vb) in zip(bps, bps[1:]):
            if not tb > ta:
                raise ValueError("floor breakpoints must be strictly increasing in time")
            if vb < va:
                raise ValueError("floor demand must be nondecreasing")
        term = self.terminus
        if term is None:
            term = bps[-1] if bps else self.origin
        term = (float(term[0]), float(term[1]))
        object.__setattr__(self, "terminus", term)
        if bps:
            if term[0] < bps[-1][0]:
                raise ValueError("terminus precedes the last floor breakpoint")
            if term[1] < bps[-1][1] - EPS_SLOPE * max(abs(bps[-1][1]), 1.0):
                raise InfeasibleTunnel("terminus lies below the floor")

    @classmethod
    def from_tasks(cls, deadlines: Sequence[float], data: Sequence[float],
                   origin: Point = (0.0, 0.0), terminus: Point | None = None) -> "FloorSpec":
        acc, bps = [], []
        for t, d in zip(deadlines, data):
            acc.append(d)
            bps.append((t, origin[1] + math.fsum(acc)))
        return cls(tuple(bps), origin, terminus)


@dataclass(frozen=True)
class Tunnel:
    floor: FloorSpec
    ceiling: tuple[Point, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "ceiling", tuple((float(t), float(v)) for t, v in self.ceiling))


def _tol(x: float, scale: float) -> float:
    return EPS_SLOPE * (abs(x) + scale)


def floor_vertices(t0: float, v0: float, ts: Sequence[float], vs: Sequence[float]) -> list[Point]:
    """Greedy max-slope chain from ``(t0, v0)`` through the targets.

    ``ts`` must be strictly increasing and greater than ``t0``; the last
    target is the string's terminus.  Ties go to the latest target so that
    collinear spans collapse into one segment.
    """
    verts = [(t0, v0)]
    n = len(ts)
    if not n:
        return verts
    scale = abs(vs[-1] - v0) / (ts[-1] - t0)
    i = 0
    while i < n:
        best, best_j = -INF, i
        for j in range(i, n):
            slope = (vs[j] - v0) / (ts[j] - t0)
            if slope >= best - _tol(best if best > -INF else slope, scale):
                best_j = j
                if slope > best:
                    best = slope
        t0, v0 = ts[best_j], vs[best_j]
        verts.append((t0, v0))
        i = best_j + 1
    return verts


def tunnel_vertices(t0: float, v0: float, ts: Sequence[float], lo: Sequence[float],
                    hi: Sequence[float]) -> list[Point]:
    """Taut string from ``(t0, v0)`` through per-instant bounds ``lo <= X(t) <= hi``.

    The last instant must have ``lo == hi`` (the terminus).  From the current
    origin the feasible slope intervals are intersected instant by instant;
    when the next interval leaves the intersection the string bends at the
    binding floor point (interval below) or ceiling point (interval above).
    """
    verts = [(t0, v0)]
    n = len(ts)
    if not n:
        return verts
    scale = abs(lo[-1] - v0) / (ts[-1] - t0)
    i = 0
    while i < n:
        best_lo, lo_j = -INF, -1
        best_hi, hi_j = INF, -1
        nxt = None
        for j in range(i, n):
            dt = ts[j] - t0
            low = (lo[j] - v0) / dt
            up = (hi[j] - v0) / dt
            if up < best_lo - _tol(best_lo, scale):
                nxt = lo_j, (ts[lo_j], lo[lo_j])
                break
            if low > best_hi + _tol(best_hi, scale):
                nxt = hi_j, (ts[hi_j], hi[hi_j])
                break
            if low >= best_lo - _tol(best_lo if best_lo > -INF else low, scale):
                lo_j = j
                if low > best_lo:
                    best_lo = low
            if up <= best_hi + _tol(best_hi if best_hi < INF else up, scale):
                hi_j = j
                if up < best_hi:
                    best_hi = up
        if nxt is None:
            nxt = n - 1, (ts[-1], lo[-1])
        end, (t0, v0) = nxt
        verts.append((t0, v0))
        i = end + 1
    return verts


def _floor_targets(floor: FloorSpec) -> tuple[list[float], list[float]]:
    t0, v0 = floor.origin
    ts, vs = [], []
    for t, v in floor.breakpoints:
        if t <= t0:
            if v > v0 + _tol(v0, 1.0):
                raise InfeasibleTunnel(f"demand {v:g} at t={t:g} is not met at the origin")
            continue
        ts.append(t)
        vs.append(v)
    tt, tv = floor.terminus
    if tt > t0:
        if ts and ts[-1] == tt:
            vs[-1] = max(vs[-1], tv)
        else:
            ts.append(tt)
            vs.append(tv)
    return ts, vs


def pull_above_floor(floor: FloorSpec) -> RateSchedule:
    """Shortest cumulative curve above the floor; rates are non-increasing."""
    ts, vs = _floor_targets(floor)
    if not ts:
        return RateSchedule(())
    return RateSchedule.from_vertices(floor_vertices(*floor.origin, ts, vs))


def tunnel_bounds(tunnel: Tunnel) -> tuple[list[float], list[float], list[float]]:
    """Merge floor and ceiling into per-instant ``(times, lower, upper)`` lists."""
    floor = tunnel.floor
    t0, v0 = floor.origin
    tt, tv = floor.terminus
    caps: dict[float, float] = {}
    for t, a in tunnel.ceiling:
        if t <= t0:
            if a < v0 - _tol(v0, 1.0):
                raise InfeasibleTunnel(f"ceiling {a:g} at t={t:g} lies below the origin")
            continue
        if t > tt:
            continue
        caps[t] = min(a, caps.get(t, INF))
    ts_f, vs_f = _floor_targets(floor)
    floor_at = dict(zip(ts_f, vs_f))
    times = sorted(set(ts_f) | set(caps))
    lower, upper = [], []
    run = v0
    for t in times:
        run = max(run, floor_at.get(t, run))
        lower.append(run)
        upper.append(caps.get(t, INF))
    if times and times[-1] == tt:
        if upper[-1] < tv - _tol(tv, 1.0):
            raise InfeasibleTunnel("ceiling at the terminus lies below the terminus")
        upper[-1] = lower[-1]
    # a nondecreasing curve needs every later cap to clear every earlier floor
    suffix = INF
    for k in range(len(times) - 1, -1, -1):
        suffix = min(suffix, upper[k])
        if lower[k] > suffix + _tol(suffix, abs(lower[k])):
            raise InfeasibleTunnel(f"empty tunnel at t={times[k]:g}")
    return times, lower, upper


def pull_in_tunnel(tunnel: Tunnel) -> RateSchedule:
    """Shortest cumulative curve between floor and ceiling.

    Rates only drop where the curve touches the floor and only rise where it
    touches the ceiling.
    """
    times, lower, upper = tunnel_bounds(tunnel)
    if not times:
        return RateSchedule(())
    return RateSchedule.from_vertices(tunnel_vertices(*tunnel.floor.origin, times, lower, upper))


def buffer_ceiling(floor: FloorSpec, buffer: float) -> tuple[Point, ...]:
    """Caps ``demand already consumed + buffer`` at every floor instant."""
    caps = []
    consumed = floor.origin[1]
    for t, v in floor.breakpoints:
        caps.append((t, consumed + buffer))
        consumed = v
    tt, tv = floor.terminus
    if not floor.breakpoints or tt > floor.breakpoints[-1][0]:
        caps.append((tt, consumed + buffer))
    return tuple(caps)


def pull_with_buffer(floor: FloorSpec, buffer: float) -> RateSchedule:
    """Shortest cumulative curve above the floor that never overfills the receiver buffer."""
    if not buffer > 0:
        raise InfeasibleBuffer("buffer must be positive")
    if math.isinf(buffer):
        return pull_above_floor(floor)
    try:
        return pull_in_tunnel(Tunnel(floor, buffer_ceiling(floor, buffer)))
    except InfeasibleTunnel as exc:
        raise InfeasibleBuffer(str(exc)) from exc

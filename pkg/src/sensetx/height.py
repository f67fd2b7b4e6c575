"""Height search: bounds, critical heights and per-sub-area optimisation.

The height ``h`` is the amount of data sensed when the blackout begins.  For
a fixed ``h`` both schedules follow from string pulling; as ``h`` moves, only
the segments that end on ``(b1, h)`` or ``(b2, h)`` move with it, and the set
of floor/ceiling points they are anchored to changes at *critical heights*.
Between two consecutive critical heights the energy has one closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

from scipy.optimize import brentq

from .model import EPS_SLOPE, InfeasibleHeight, NoBusyInterval, Scenario
from .sp import INF, Point, floor_vertices, tunnel_vertices

H_RTOL = 1e-10
H_MAXITER = 200
DEDUPE_RTOL = 1e-9
PROBE_RTOL = 1e-6

SIDES = ("sense_pre", "sense_post", "tx_pre", "tx_post")


@dataclass(frozen=True)
class Core:
    """Scenario flattened into float tuples for the fixed-height kernels."""

    b1: float
    b2: float
    horizon: float
    total: float
    demand_b2: float
    pre_t: tuple[float, ...]   # sensing floor before the blackout
    pre_v: tuple[float, ...]
    post_t: tuple[float, ...]  # sensing floor after the blackout, ends at (horizon, total)
    post_v: tuple[float, ...]
    tx_t: tuple[float, ...]    # all instants, busy endpoints included
    tx_lo: tuple[float, ...]
    tx_cap: tuple[float, ...]  # buffer caps; inf when unbuffered
    i_b1: int
    i_b2: int

    def sensing_vertices(self, h: float) -> list[Point]:
        pre = floor_vertices(0.0, 0.0, self.pre_t + (self.b1,), self.pre_v + (h,))
        post = floor_vertices(self.b2, h, self.post_t, self.post_v)
        return pre + post

    def tx_upper(self, h: float) -> list[float]:
        hi = list(self.tx_cap)
        hi[self.i_b1] = min(h, hi[self.i_b1])
        hi[self.i_b2] = min(h, hi[self.i_b2])
        return hi

    def tx_vertices(self, h: float) -> list[Point]:
        return tunnel_vertices(0.0, 0.0, self.tx_t, self.tx_lo, self.tx_upper(h))

    def check_height(self, h: float) -> None:
        tol = EPS_SLOPE * self.total
        if not (self.demand_b2 - tol <= h <= self.total + tol):
            raise InfeasibleHeight(
                f"height {h:g} outside [{self.demand_b2:g}, {self.total:g}]")


@lru_cache(maxsize=256)
def prepare(scenario: Scenario, buffered: bool) -> Core:
    busy = scenario.busy
    if busy is None:
        raise NoBusyInterval("scenario has no busy interval")
    b1, b2 = busy.start, busy.end
    ts, cum = scenario.deadlines, scenario.cumulative_demand
    pre = [(t, v) for t, v in zip(ts, cum) if t < b1]
    post = [(t, v) for t, v in zip(ts, cum) if t > b2]
    buf = scenario.buffer if (buffered and scenario.buffer is not None) else INF
    instants = sorted(set(ts) | {b1, b2})
    lo = [scenario.demand_by(t) for t in instants]
    cap = [scenario.demand_before(t) + buf for t in instants]
    cap[-1] = lo[-1]
    return Core(
        b1=b1, b2=b2, horizon=scenario.horizon, total=scenario.total_data,
        demand_b2=scenario.demand_by(b2),
        pre_t=tuple(t for t, _ in pre), pre_v=tuple(v for _, v in pre),
        post_t=tuple(t for t, _ in post), post_v=tuple(v for _, v in post),
        tx_t=tuple(instants), tx_lo=tuple(lo), tx_cap=tuple(cap),
        i_b1=instants.index(b1), i_b2=instants.index(b2),
    )


def _interp(verts: Sequence[Point], t: float) -> float:
    for (t0, v0), (t1, v1) in zip(verts, verts[1:]):
        if t0 <= t <= t1:
            return v0 if t1 == t0 else v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    return verts[-1][1]


def vertex_energies(verts: Sequence[Point], scenario: Scenario) -> tuple[float, float]:
    """(sensing-style, transmission-style) energies of the curve through ``verts``."""
    p = scenario.params
    cs, ct, bw = p.sense_coeff, p.tx_coeff, p.bandwidth
    es, et = [], []
    for (t0, v0), (t1, v1) in zip(verts, verts[1:]):
        dt = t1 - t0
        if dt <= 0:
            continue
        dv = max(v1 - v0, 0.0)
        es.append(cs * dv * dv / dt)
        et.append(ct * dt * math.expm1(dv / dt / bw))
    return math.fsum(es), math.fsum(et)


def energy_at(scenario: Scenario, h: float, buffered: bool = False) -> tuple[float, float]:
    """(sensing, transmission) energy of the fixed-height optimum."""
    core = prepare(scenario, buffered)
    core.check_height(h)
    es, _ = vertex_energies(core.sensing_vertices(h), scenario)
    _, et = vertex_energies(core.tx_vertices(h), scenario)
    return es, et


# ---------------------------------------------------------------- bounds


@dataclass(frozen=True)
class SearchBounds:
    lower: float
    upper: float
    lower_clipped: bool

    @property
    def empty(self) -> bool:
        return self.lower >= self.upper


def _edge_rates(core: Core, h: float) -> float:
    """Last sensing rate before the blackout minus the first one after it."""
    pre = floor_vertices(0.0, 0.0, core.pre_t + (core.b1,), core.pre_v + (h,))
    (ta, va), (tb, vb) = pre[-2], pre[-1]
    post = floor_vertices(core.b2, h, core.post_t, core.post_v)
    (tc, vc), (td, vd) = post[0], post[1]
    return (vb - va) / (tb - ta) - (vd - vc) / (td - tc)


def search_bounds(scenario: Scenario, buffered: bool | None = None) -> SearchBounds:
    """Bracket the optimal height.

    The upper bound is where the transmission curve would sit at ``b2`` if
    sensing imposed nothing.  The lower bound is the height at which the
    sensing rates on either side of the blackout match, raised to the demand
    due by ``b2`` when that is larger.
    """
    if buffered is None:
        buffered = scenario.buffer is not None
    core = prepare(scenario, buffered)
    free = tunnel_vertices(0.0, 0.0, core.tx_t, core.tx_lo, core.tx_cap)
    upper = _interp(free, core.b2)

    floor = core.demand_b2
    if _edge_rates(core, floor) >= 0:
        return SearchBounds(floor, upper, True)
    lower = brentq(lambda h: _edge_rates(core, h), floor, core.total,
                   xtol=H_RTOL * core.total, maxiter=H_MAXITER)
    return SearchBounds(lower, upper, False)


def balanced_height(scenario: Scenario) -> float:
    """Height equalising single-segment sensing rates across the blackout."""
    busy = scenario.busy
    if busy is None:
        raise NoBusyInterval("scenario has no busy interval")
    b1, b2, tn = busy.start, busy.end, scenario.horizon
    return scenario.total_data * b1 / (b1 + tn - b2)


# ---------------------------------------------------------------- critical heights


@dataclass(frozen=True)
class CriticalHeight:
    height: float
    anchor: Point
    side: str
    unchanged_interval: tuple[float, float]


def _dedupe(found: list[CriticalHeight], bounds: SearchBounds, total: float) -> list[CriticalHeight]:
    tol = DEDUPE_RTOL * total
    lo, hi = min(bounds.lower, bounds.upper), max(bounds.lower, bounds.upper)
    inside = sorted((c for c in found if lo + tol < c.height < hi - tol),
                    key=lambda c: -c.height)
    out: list[CriticalHeight] = []
    for c in inside:
        if not out or out[-1].height - c.height > tol:
            out.append(c)
    return out


def _forward_sweep(ts: Sequence[float], vs: Sequence[float], b: float, side: str) -> list[CriticalHeight]:
    if not ts:
        return []
    chain = floor_vertices(0.0, 0.0, ts, vs)
    out = []
    for (t0, v0), (t1, v1) in zip(chain, chain[1:]):
        slope = (v1 - v0) / (t1 - t0)
        out.append(CriticalHeight(v0 + slope * (b - t0), (t1, v1), side, (t0, t1)))
    return out


def _backward_sweep(ts: Sequence[float], vs: Sequence[float], b: float) -> list[CriticalHeight]:
    """Min-slope chain walking back from the terminus, extended back to ``b``."""
    out = []
    k = len(ts) - 1
    while k > 0:
        ta, va = ts[k], vs[k]
        best, best_j = INF, -1
        for j in range(k):
            w = (va - vs[j]) / (ta - ts[j])
            # strict improvement only: the earliest of a tie wins so collinear points collapse
            if best_j < 0 or w < best - EPS_SLOPE * (abs(w) + abs(best)):
                best, best_j = w, j
        out.append(CriticalHeight(va - best * (ta - b), (ts[best_j], vs[best_j]), "post",
                                  (ts[best_j], ta)))
        k = best_j
    return out


def critical_heights(scenario: Scenario, bounds: SearchBounds) -> list[CriticalHeight]:
    """Critical heights strictly inside the bounds, infinite receiver buffer.

    Pools three sweeps: sensing before the blackout (extended to ``b1``),
    transmission before the blackout (extended to ``b2``) and the shared
    post-blackout curve (extended back to ``b2``).
    """
    core = prepare(scenario, False)
    found = _forward_sweep(core.pre_t, core.pre_v, core.b1, "pre-sensing")
    ts, cum = scenario.deadlines, scenario.cumulative_demand
    tx = [(t, v) for t, v in zip(ts, cum) if t < core.b2]
    found += _forward_sweep([t for t, _ in tx], [v for _, v in tx], core.b2, "pre-transmission")
    found += _backward_sweep(core.post_t, core.post_v, core.b2)
    return _dedupe(found, bounds, core.total)


# ---------------------------------------------------------------- local structure


@dataclass(frozen=True)
class Side:
    """The segment that moves with ``h`` on one side of the blackout.

    ``anchor`` is its fixed end; ``contact`` is the busy endpoint where it
    meets ``h``; ``neighbour_rate`` is the rate of the fixed segment beyond
    the anchor (None at the curve's origin or terminus).
    """

    anchor: Point
    contact: float
    pre: bool
    neighbour_rate: float | None

    def length(self) -> float:
        return abs(self.contact - self.anchor[0])

    def rate(self, h: float) -> float:
        diff = h - self.anchor[1] if self.pre else self.anchor[1] - h
        return diff / self.length()


@dataclass(frozen=True)
class Structure:
    sides: dict[str, Side | None]
    sensing: tuple[Point, ...]
    transmission: tuple[Point, ...]

    def signature(self) -> tuple:
        """Segment counts plus anchor set; changes exactly at critical heights."""
        key = []
        for name in SIDES:
            s = self.sides[name]
            key.append(None if s is None else (round(s.anchor[0], 9), s.contact))
        return (len(self.sensing), len(self.transmission), tuple(key))


def _rate(verts: Sequence[Point], k: int) -> float:
    (t0, v0), (t1, v1) = verts[k], verts[k + 1]
    return (v1 - v0) / (t1 - t0)


def _side_before(verts: Sequence[Point], b: float) -> Side:
    k = max(i for i, (t, _) in enumerate(verts) if t < b)
    return Side(verts[k], b, True, _rate(verts, k - 1) if k > 0 else None)


def _side_after(verts: Sequence[Point], b: float) -> Side:
    k = min(i for i, (t, _) in enumerate(verts) if t > b)
    return Side(verts[k], b, False, _rate(verts, k) if k + 1 < len(verts) else None)


def structure_at(scenario: Scenario, h: float, buffered: bool = False) -> Structure:
    core = prepare(scenario, buffered)
    core.check_height(h)
    sv = core.sensing_vertices(h)
    tv = core.tx_vertices(h)
    sides: dict[str, Side | None] = {
        "sense_pre": _side_before(sv, core.b1),
        "sense_post": _side_after(sv, core.b2),
        "tx_pre": None,
        "tx_post": None,
    }
    tol = EPS_SLOPE * core.total
    up = core.tx_upper(h)
    contacts = [b for b, i in ((core.b1, core.i_b1), (core.b2, core.i_b2))
                if up[i] == h and abs(_interp(tv, b) - h) <= tol]
    if contacts:
        sides["tx_pre"] = _side_before(tv, contacts[0])
        sides["tx_post"] = _side_after(tv, contacts[-1])
    return Structure(sides, tuple(sv), tuple(tv))


def _floor_points(core: Core, name: str) -> tuple[Sequence[float], Sequence[float]]:
    if name == "sense_pre":
        return core.pre_t, core.pre_v
    if name == "sense_post":
        return core.post_t, core.post_v
    return core.tx_t, core.tx_lo


def _side_event(side: Side, ts: Sequence[float], vs: Sequence[float], h: float) -> float:
    """Largest height below ``h`` at which this side's anchor set changes."""
    ta, va = side.anchor
    b = side.contact
    best = -INF
    if side.pre:
        # split: the falling segment meets a floor point between anchor and contact
        slopes = [(v - va) / (t - ta) for t, v in zip(ts, vs) if ta < t < b]
        if slopes:
            best = va + max(slopes) * (b - ta)
        # merge: a ceiling vertex disappears once the rates on both sides agree
        r2 = side.neighbour_rate
        if r2 is not None and side.rate(h) > r2:
            best = max(best, va + r2 * (b - ta))
    else:
        slopes = [(va - v) / (ta - t) for t, v in zip(ts, vs) if b < t < ta]
        if slopes:
            best = va - min(slopes) * (ta - b)
        r2 = side.neighbour_rate
        if r2 is not None and side.rate(h) < r2:
            best = max(best, va - r2 * (ta - b))
    return best if best < h else -INF


def _next_event(scenario: Scenario, h: float, buffered: bool) -> tuple[float, str | None, Structure]:
    core = prepare(scenario, buffered)
    st = structure_at(scenario, h, buffered)
    best, who = -INF, None
    for name in SIDES:
        side = st.sides[name]
        if side is None:
            continue
        cand = _side_event(side, *_floor_points(core, name), h)
        if cand > best:
            best, who = cand, name
    return best, who, st


def next_critical_height(scenario: Scenario, h: float, buffered: bool = True) -> tuple[float, Structure]:
    """Next height below ``h`` at which the string-pulling structure changes.

    Each of the four moving sides proposes the height of its own next event
    (a floor point being touched, or a ceiling vertex dissolving); the
    largest proposal wins.  Returns ``-inf`` when nothing changes below ``h``.
    """
    best, _, st = _next_event(scenario, h, buffered)
    return best, st


def critical_heights_iterative(scenario: Scenario, bounds: SearchBounds,
                               buffered: bool = True) -> list[CriticalHeight]:
    """Walk down from the upper bound, one structural event at a time."""
    core = prepare(scenario, buffered)
    delta = PROBE_RTOL * core.total
    found: list[CriticalHeight] = []
    h = bounds.upper
    for _ in range(10_000):
        probe = h - delta
        if probe <= bounds.lower:
            break
        nxt, who, st = _next_event(scenario, probe, buffered)
        if nxt <= bounds.lower:
            break
        side = st.sides[who]
        found.append(CriticalHeight(nxt, side.anchor, who,
                                    tuple(sorted((side.anchor[0], side.contact)))))
        h = nxt
    return _dedupe(found, bounds, core.total)


# ---------------------------------------------------------------- sub-areas


@dataclass(frozen=True)
class SubArea:
    hi: float
    lo: float
    sides: dict[str, Side | None] = field(compare=False)

    @property
    def anchors(self) -> dict[str, Point | None]:
        return {n: (s.anchor if s else None) for n, s in self.sides.items()}


def sub_areas(scenario: Scenario, bounds: SearchBounds, heights: Sequence[float],
              buffered: bool = False) -> list[SubArea]:
    edges = [bounds.upper, *heights, bounds.lower]
    out = []
    for hi, lo in zip(edges, edges[1:]):
        if not hi > lo:
            continue
        st = structure_at(scenario, 0.5 * (hi + lo), buffered)
        out.append(SubArea(hi, lo, st.sides))
    return out


def area_slope(area: SubArea, scenario: Scenario, h: float) -> float:
    """dE/dh under the sub-area's closed form."""
    p = scenario.params
    cs, ct, bw = p.sense_coeff, p.tx_coeff, p.bandwidth
    d = 0.0
    s = area.sides
    if s["sense_pre"] is not None:
        d += 2 * cs * s["sense_pre"].rate(h)
    if s["sense_post"] is not None:
        d -= 2 * cs * s["sense_post"].rate(h)
    a = s["tx_pre"].rate(h) / bw if s["tx_pre"] is not None else None
    b = s["tx_post"].rate(h) / bw if s["tx_post"] is not None else None
    if a is not None and b is not None:
        # exp(a) - exp(b) without cancellation
        d += ct / bw * math.exp(b) * math.expm1(a - b)
    elif a is not None:
        d += ct / bw * math.exp(a)
    elif b is not None:
        d -= ct / bw * math.exp(b)
    return d


def local_optimum(area: SubArea, scenario: Scenario, buffered: bool = False) -> tuple[float, float]:
    """Minimise the sub-area's convex closed form; returns ``(h*, E(h*))``."""
    lo, hi = area.lo, area.hi
    g_lo, g_hi = area_slope(area, scenario, lo), area_slope(area, scenario, hi)
    if g_lo >= 0:
        h = lo
    elif g_hi <= 0:
        h = hi
    else:
        h = brentq(lambda x: area_slope(area, scenario, x), lo, hi,
                   xtol=H_RTOL * scenario.total_data, maxiter=H_MAXITER)
    return h, sum(energy_at(scenario, h, buffered))

"""Independent reference solvers.

``solve_discretized`` splits the horizon into slots with constant rates and
solves the resulting convex program with a log-barrier interior-point method.
It shares no code with the string-pulling solver beyond the scenario types,
so agreement between the two is meaningful.  ``brute_force_tiny`` enumerates
a rate grid exhaustively on micro instances.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.linalg import solveh_banded

from .height import energy_at, search_bounds
from .model import InfeasibleHeight, RateSchedule, Scenario, Segment, build_epoch_grid

BUFFER_SLACK = 1e-10  # relative relaxation of buffer rows, keeps the start strictly interior
BARRIER_GROWTH = 50.0


class NotConverged(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3g})")
        self.residual = residual


class NoFeasiblePoint(RuntimeError):
    """The rate grid contains no feasible assignment."""


@dataclass(frozen=True)
class DiscretizedProblem:
    scenario: Scenario
    edges: np.ndarray        # slot boundaries, edges[0] = 0
    busy: np.ndarray         # True where sensing is forced to zero
    demand_slots: np.ndarray  # last slot index for each task deadline
    demand_values: np.ndarray  # cumulative demand at each deadline
    cap_slots: np.ndarray    # slot index ending at each buffer-checked instant
    cap_values: np.ndarray   # buffer cap at those instants (inf when unbuffered)

    @property
    def slot_count(self) -> int:
        return len(self.edges) - 1

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.edges)

    def schedule(self, rates: np.ndarray) -> RateSchedule:
        segs = [Segment(a, b, float(r)) for a, b, r in zip(self.edges[:-1], self.edges[1:], rates)]
        return RateSchedule(tuple(segs)).canonical()

    def energy(self, s: np.ndarray, r: np.ndarray) -> tuple[float, float]:
        p = self.scenario.params
        dt = self.lengths
        es = math.fsum(p.sense_coeff * s ** 2 * dt)
        et = math.fsum(p.tx_coeff * np.expm1(r / p.bandwidth) * dt)
        return es, et


def discretize(scenario: Scenario, slots: int) -> DiscretizedProblem:
    """Slot grid containing every instant; extra cuts go to the coarsest epochs."""
    grid = build_epoch_grid(scenario)
    bounds = (0.0,) + grid.instants
    lengths = np.diff(bounds)
    if slots < len(lengths):
        raise ValueError(f"need at least {len(lengths)} slots, got {slots}")
    counts = [1] * len(lengths)
    heap = [(-lengths[i], i) for i in range(len(lengths))]
    heapq.heapify(heap)
    for _ in range(slots - len(lengths)):
        _, i = heapq.heappop(heap)
        counts[i] += 1
        heapq.heappush(heap, (-lengths[i] / counts[i], i))
    edges = [0.0]
    for a, b, n in zip(bounds[:-1], bounds[1:], counts):
        edges.extend(np.linspace(a, b, n + 1)[1:-1].tolist())
        edges.append(b)
    edges = np.array(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    busy = np.zeros(len(mids), bool)
    if scenario.busy is not None:
        busy = (mids > scenario.busy.start) & (mids < scenario.busy.end)
    slot_of = {t: int(np.argmin(np.abs(edges - t))) - 1 for t in grid.instants}
    demand_slots = np.array([slot_of[t] for t in scenario.deadlines])
    demand_values = np.array(scenario.cumulative_demand)
    buf = math.inf if scenario.buffer is None else scenario.buffer
    cap_slots = np.array([slot_of[t] for t in grid.instants])
    cap_values = np.array([scenario.demand_before(t) + buf for t in grid.instants])
    return DiscretizedProblem(scenario, edges, busy, demand_slots, demand_values, cap_slots, cap_values)


# ---------------------------------------------------------------- barrier solver


@dataclass(frozen=True)
class OracleResult:
    energy: float
    sensing_energy: float
    transmission_energy: float
    s: np.ndarray
    r: np.ndarray
    gap: float
    newton_steps: int
    problem: DiscretizedProblem

    def schedules(self) -> tuple[RateSchedule, RateSchedule]:
        clean = lambda v: np.where(v < 1e-12 * max(v.max(), 1.0), 0.0, v)
        return self.problem.schedule(clean(self.s)), self.problem.schedule(clean(self.r))


class _Terms:
    """Scalar terms of the form ``u = z[i] - z[j] + c`` (index -1 reads as 0)."""

    def __init__(self, n: int):
        self.n = n
        self.i: list[np.ndarray] = []
        self.j: list[np.ndarray] = []
        self.c: list[np.ndarray] = []

    def add(self, i, j, c) -> slice:
        i, j, c = np.broadcast_arrays(np.atleast_1d(i), np.atleast_1d(j), np.asarray(c, float))
        start = sum(len(a) for a in self.i)
        self.i.append(i.astype(int))
        self.j.append(j.astype(int))
        self.c.append(c.astype(float))
        return slice(start, start + len(i))

    def freeze(self):
        self.i = np.concatenate(self.i)
        self.j = np.concatenate(self.j)
        self.c = np.concatenate(self.c)
        # index -1 becomes a trailing slot that always holds zero
        self.i[self.i < 0] = self.n
        self.j[self.j < 0] = self.n
        self.z = np.zeros(self.n + 1)

    def values(self, z: np.ndarray) -> np.ndarray:
        self.z[:-1] = z
        return self.z[self.i] - self.z[self.j] + self.c

    def deltas(self, dz: np.ndarray) -> np.ndarray:
        self.z[:-1] = dz
        return self.z[self.i] - self.z[self.j]


class _Barrier:
    """Newton systems for sums of scalar functions of ``u = z_i - z_j + c``."""

    BAND = 2

    def __init__(self, terms: _Terms, n: int):
        self.t = terms
        self.n = n
        i, j = terms.i, terms.j
        real = (i < n) & (j < n)
        self.far = real & (np.abs(i - j) > self.BAND)
        both = real & ~self.far
        self.lo = np.minimum(i, j)
        gap = np.abs(i - j)
        self.offdiag = {k: np.flatnonzero(both & (gap == k)) for k in range(1, self.BAND + 1)}

    def gradient(self, d1: np.ndarray) -> np.ndarray:
        size = self.n + 1
        g = np.bincount(self.t.i, d1, size) - np.bincount(self.t.j, d1, size)
        return g[:-1]

    def solve(self, d2: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        n, i, j = self.n, self.t.i, self.t.j
        near = ~self.far
        w = np.where(near, d2, 0.0)
        diag = np.bincount(i, w, n + 1) + np.bincount(j, w, n + 1)
        ab = np.zeros((self.BAND + 1, n))
        ab[0] = diag[:-1]
        for k in range(1, self.BAND + 1):
            sel = self.offdiag[k]
            ab[k] = -np.bincount(self.lo[sel], d2[sel], n)
        # far pairs enter as a low-rank update handled by Woodbury
        fi, fj, fw = i[self.far], j[self.far], d2[self.far]
        u = np.zeros((n, len(fi)))
        u[fi, np.arange(len(fi))] = 1.0
        u[fj, np.arange(len(fi))] = -1.0
        sol = solveh_banded(ab, np.column_stack([rhs, u]), lower=True, check_finite=False)
        x, ainv_u = sol[:, 0], sol[:, 1:]
        if len(fi):
            cap = np.diag(1.0 / fw) + u.T @ ainv_u
            x = x - ainv_u @ np.linalg.solve(cap, u.T @ x)
        return x


def solve_discretized(scenario: Scenario, M: int = 2000, tol: float = 1e-9,
                      max_newton: int = 2000) -> OracleResult:
    """Minimise slot-wise energy subject to demand, causality, blackout and buffer rows.

    Convergence is certified by the barrier duality gap ``m / t`` falling
    below ``tol`` times the (normalised) objective.
    """
    prob = discretize(scenario, M)
    p = scenario.params
    D, tn = scenario.total_data, scenario.horizon
    dt = prob.lengths
    K = prob.slot_count
    free = ~prob.busy

    # variables: cumulative sensed data at the end of each non-busy slot, then
    # cumulative transmitted data at the end of every slot; both scaled by D
    xs = np.full(K, -1)       # variable index of sensed data at end of slot k
    ys = np.zeros(K, int)
    pos = 0
    last_x = -1
    for k in range(K):
        if free[k]:
            last_x = pos
            pos += 1
        xs[k] = last_x
        ys[k] = pos
        pos += 1
    n = pos

    e_ref = tn * (p.sense_coeff * (D / tn) ** 2 + p.tx_coeff * math.expm1(D / tn / p.bandwidth))

    terms = _Terms(n)
    prev_x = np.concatenate([[-1], xs[:-1]])
    kf = np.flatnonzero(free)
    sense = terms.add(xs[kf], prev_x[kf], 0.0)
    prev_y = np.concatenate([[-1], ys[:-1]])
    send = terms.add(ys, prev_y, 0.0)
    rows = [terms.add(xs[prob.demand_slots], -1, -prob.demand_values / D),
            terms.add(ys[prob.demand_slots], -1, -prob.demand_values / D)]
    # causality: inside a blackout the sensed total is frozen, so only its last slot binds
    busy_next = np.concatenate([prob.busy[1:], [False]])
    keep = ~(prob.busy & busy_next)
    rows.append(terms.add(xs[keep], ys[keep], 0.0))
    finite = np.isfinite(prob.cap_values)
    if finite.any():
        rows.append(terms.add(-1, ys[prob.cap_slots[finite]],
                              prob.cap_values[finite] / D + BUFFER_SLACK))
    terms.freeze()
    m = len(terms.c)
    barrier = _Barrier(terms, n)

    sense_w = p.sense_coeff * D ** 2 / dt[kf] / e_ref
    send_scale = D / (dt * p.bandwidth)
    send_w = p.tx_coeff * dt / e_ref

    def objective(u):
        a = u[sense]
        b = u[send]
        return float(np.sum(sense_w * a * a) + np.sum(send_w * np.expm1(send_scale * b)))

    def derivs(u):
        d1 = np.zeros(m)
        d2 = np.zeros(m)
        a, b = u[sense], u[send]
        d1[sense] = 2 * sense_w * a
        d2[sense] = 2 * sense_w
        eb = np.exp(send_scale * b)
        d1[send] = send_w * send_scale * eb
        d2[send] = send_w * send_scale ** 2 * eb
        return d1, d2

    z = _start_point(prob, scenario, xs, ys, n)
    u = terms.values(z)
    if not np.all(u > 0):
        raise NotConverged("start point is not strictly feasible", float(-u.min()))

    tbar = 1.0
    steps = 0
    while True:
        # centering
        for _ in range(200):
            d1, d2 = derivs(u)
            d1 = tbar * d1 - 1.0 / u
            d2 = tbar * d2 + 1.0 / (u * u)
            g = barrier.gradient(d1)
            dz = -barrier.solve(d2, g)
            steps += 1
            lam2 = -float(g @ dz)
            if lam2 / 2 <= 1e-10:
                break
            du = terms.deltas(dz)
            neg = du < 0
            step = min(1.0, 0.99 * float(np.min(-u[neg] / du[neg]))) if neg.any() else 1.0
            phi0 = tbar * objective(u) - float(np.sum(np.log(u)))
            while step > 1e-14:
                un = u + step * du
                if np.all(un > 0):
                    phi = tbar * objective(un) - float(np.sum(np.log(un)))
                    if phi <= phi0 - 0.25 * step * lam2:
                        break
                step *= 0.5
            z = z + step * dz
            u = terms.values(z)
            if steps > max_newton:
                raise NotConverged("Newton iteration budget exhausted", m / tbar)
        f = objective(u)
        if m / tbar <= tol * f:
            break
        tbar *= BARRIER_GROWTH

    X = np.zeros(K)
    has = xs >= 0
    X[has] = z[xs[has]]
    Y = z[ys]
    s = np.maximum(np.diff(np.concatenate([[0.0], X])) * D / dt, 0.0)
    s[prob.busy] = 0.0
    r = np.maximum(np.diff(np.concatenate([[0.0], Y])) * D / dt, 0.0)
    es, et = prob.energy(s, r)
    return OracleResult(es + et, es, et, s, r, m / tbar * e_ref, steps, prob)


def _start_point(prob: DiscretizedProblem, scenario: Scenario, xs, ys, n) -> np.ndarray:
    D, tn = scenario.total_data, scenario.horizon
    tau = prob.edges[1:]
    buffered = np.isfinite(prob.cap_values).any()
    margin = BUFFER_SLACK / 2 if buffered else 1e-3
    knots_t = np.concatenate([[0.0], scenario.deadlines])
    knots_v = np.concatenate([[0.0], np.array(scenario.cumulative_demand) / D + margin])
    y = np.interp(tau, knots_t, knots_v) + 0.5 * margin * tau / tn
    x = 1.0 + 2 * margin + 0.01 + 0.01 * tau / tn
    z = np.zeros(n)
    z[ys] = y
    z[xs[xs >= 0]] = x[xs >= 0]
    return z


# ---------------------------------------------------------------- brute force


def rate_grid(scenario: Scenario, rate_levels: int) -> np.ndarray:
    step = scenario.total_data / scenario.horizon * 2.0 / rate_levels
    return step * np.arange(rate_levels + 1)


def brute_force_tiny(scenario: Scenario, slots: int, rate_levels: int) -> float:
    """Exhaustive minimum over rate vectors drawn from a uniform grid."""
    if slots > 6 or rate_levels > 12:
        raise ValueError("brute force is limited to 6 slots and 12 rate levels")
    prob = discretize(scenario, slots)
    p = scenario.params
    dt = prob.lengths
    grid = rate_grid(scenario, rate_levels)
    tol = 1e-9 * scenario.total_data

    def candidates(busy_mask):
        choices = [[0.0] if b else grid for b in busy_mask]
        v = np.array(list(product(*choices)))
        cum = np.cumsum(v * dt, axis=1)
        ok = np.all(cum[:, prob.demand_slots] >= prob.demand_values - tol, axis=1)
        return v[ok], cum[ok]

    s, S = candidates(prob.busy)
    r, R = candidates(np.zeros(slots, bool))
    caps = np.isfinite(prob.cap_values)
    if caps.any():
        ok = np.all(R[:, prob.cap_slots[caps]] <= prob.cap_values[caps] + tol, axis=1)
        r, R = r[ok], R[ok]
    if not len(s) or not len(r):
        raise NoFeasiblePoint("no grid point meets the demands")
    es = (p.sense_coeff * s ** 2 * dt).sum(axis=1)
    et = (p.tx_coeff * np.expm1(r / p.bandwidth) * dt).sum(axis=1)
    # visit both lists in energy order; pairs that cannot beat the incumbent are skipped
    so, ro = np.argsort(es), np.argsort(et)
    es, S, et, R = es[so], S[so], et[ro], R[ro]
    best = math.inf
    for a in range(0, len(R), 64):
        lead = et[a]
        if lead + es[0] >= best:
            break
        cut = int(np.searchsorted(es, best - lead, side="right"))
        Rc = R[a:a + 64]
        ok = np.all(S[None, :cut, :] >= Rc[:, None, :] - tol, axis=2)
        tot = np.where(ok, es[None, :cut] + et[a:a + 64, None], np.inf)
        if tot.size:
            best = min(best, float(tot.min()))
    if not math.isfinite(best):
        raise NoFeasiblePoint("no grid pair satisfies causality")
    return best


def grid_rounding_energy(result: OracleResult, rate_levels: int) -> float:
    """Energy of a feasible grid point built by rounding the continuous optimum.

    Transmission rates are rounded up; sensing rates are then chosen slot by
    slot as the smallest grid value that keeps sensing ahead of transmission
    (looking across any blackout that follows) and meets every demand.
    The difference to the continuous optimum bounds the brute-force gap.
    """
    prob = result.problem
    sc = prob.scenario
    grid = rate_grid(sc, rate_levels)
    dt = prob.lengths
    K = prob.slot_count
    r = np.array([grid[min(np.searchsorted(grid, x - 1e-12 * grid[-1]), len(grid) - 1)]
                  for x in result.r])
    if np.any(r < result.r - 1e-9 * grid[-1]):
        return math.inf
    R = np.cumsum(r * dt)
    need = R.copy()
    need[prob.demand_slots] = np.maximum(need[prob.demand_slots], prob.demand_values)
    # sensed data is frozen across a blackout, so it must cover needs until it ends
    for k in range(K - 2, -1, -1):
        if prob.busy[k + 1]:
            need[k] = max(need[k], need[k + 1])
    s = np.zeros(K)
    S = 0.0
    for k in range(K):
        if prob.busy[k]:
            continue
        want = (need[k] - S) / dt[k]
        idx = np.searchsorted(grid, want - 1e-12 * grid[-1])
        if idx >= len(grid):
            return math.inf
        s[k] = grid[max(idx, 0)]
        S += s[k] * dt[k]
    if np.any(np.cumsum(s * dt) < need - 1e-9 * sc.total_data):
        return math.inf
    return sum(prob.energy(s, r))


# ---------------------------------------------------------------- height sweep


@dataclass(frozen=True)
class SweepRow:
    height: float
    total: float
    sensing: float
    transmission: float
    feasible: bool


def height_sweep(scenario: Scenario, points: int, buffered: bool | None = None) -> list[SweepRow]:
    """E(h) on a uniform grid spanning the search bounds."""
    if buffered is None:
        buffered = scenario.buffer is not None
    b = search_bounds(scenario, buffered)
    lo, hi = sorted((b.lower, b.upper))
    rows = []
    for h in np.linspace(lo, hi, points) if points > 1 else [lo]:
        h = float(h)
        try:
            es, et = energy_at(scenario, h, buffered)
        except InfeasibleHeight:
            rows.append(SweepRow(h, math.nan, math.nan, math.nan, False))
            continue
        rows.append(SweepRow(h, es + et, es, et, True))
    return rows

"""Command-line front end: solve, verify, sweep and bench scenario files."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .height import energy_at, search_bounds
from .model import (BusyInterval, InfeasibleError, NoBusyInterval, PhysicalParams, RateSchedule,
                    Scenario, ScenarioError, Segment, Task, check_feasibility, sensing_energy,
                    transmission_energy)
from .oracle import height_sweep
from .solve import SCHEMES, Solution, baseline, solve

EXIT_OK, EXIT_VERIFY, EXIT_PARSE, EXIT_INFEASIBLE, EXIT_INAPPLICABLE = 0, 1, 2, 3, 4
SCHEMA = 1
BUNDLED = "five_task_busy.json"


def fmt(x: float) -> str:
    return format(x, ".9g")


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


# ---------------------------------------------------------------- scenario files


@dataclass(frozen=True)
class ScenarioFile:
    scenario: Scenario
    mean_gain: float
    seed: int = 0


def _require(doc: dict, key: str):
    if key not in doc:
        raise ScenarioError(f"missing field {key!r}")
    return doc[key]


def parse_scenario(doc: dict) -> ScenarioFile:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    schema = doc.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ScenarioError(f"unsupported schema {schema!r}")
    tasks_doc = _require(doc, "tasks")
    if not isinstance(tasks_doc, list) or not tasks_doc:
        raise ScenarioError("tasks must be a non-empty list")
    tasks = tuple(Task(float(_require(t, "deadline_s")), float(_require(t, "data_bits")))
                  for t in tasks_doc)
    busy_doc = doc.get("busy")
    busy = None if busy_doc is None else BusyInterval(float(_require(busy_doc, "start_s")),
                                                      float(_require(busy_doc, "end_s")))
    par = _require(doc, "params")
    mean_gain = float(_require(par, "mean_gain"))
    params = PhysicalParams(
        alpha=float(_require(par, "alpha")),
        cycles_per_bit=float(_require(par, "cycles_per_bit")),
        noise_power=dbm_to_watts(float(_require(par, "noise_dbm"))),
        channel_gain=mean_gain,
        bandwidth=float(_require(par, "bandwidth_hz")),
    )
    buf = doc.get("buffer_bits")
    scenario = Scenario(tasks, params, busy, None if buf is None else float(buf))
    return ScenarioFile(scenario, mean_gain, int(doc.get("seed", 0)))


def load_scenario(path: str | Path) -> ScenarioFile:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    except (TypeError, AttributeError) as exc:
        raise ScenarioError(f"{path}: malformed document ({exc})") from exc
    try:
        return parse_scenario(doc)
    except (TypeError, AttributeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"{path}: {exc}") from exc


def bundled_scenario_text() -> str:
    return resources.files("sensetx.data").joinpath(BUNDLED).read_text()


# ---------------------------------------------------------------- outputs


def schedule_rows(sensing: RateSchedule, tx: RateSchedule) -> list[tuple[float, float, float, float]]:
    cuts = sorted(set(sensing.breakpoints) | set(tx.breakpoints))
    return [(a, b, sensing.rate_at(a), tx.rate_at(a)) for a, b in zip(cuts, cuts[1:])]


def schedule_csv(sensing: RateSchedule, tx: RateSchedule) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t_start_s", "t_end_s", "sense_rate_bps", "tx_rate_bps"])
    for row in schedule_rows(sensing, tx):
        w.writerow([fmt(x) for x in row])
    return buf.getvalue()


def solution_json(sol: Solution) -> str:
    doc = {"schema": SCHEMA, **sol.as_dict()}
    return json.dumps(doc, indent=2) + "\n"


def _schedule_from(rows) -> RateSchedule:
    return RateSchedule(tuple(Segment(*map(float, r)) for r in rows))


# ---------------------------------------------------------------- commands


def cmd_solve(args) -> int:
    sf = load_scenario(args.scenario)
    sc = sf.scenario
    if args.buffered and sc.buffer is None:
        raise ScenarioError("--buffered needs buffer_bits in the scenario file")
    sol = solve(sc, buffered=args.buffered or sc.buffer is not None)
    js, table = solution_json(sol), schedule_csv(sol.sensing, sol.transmission)
    if args.out:
        out = Path(args.out)
        out.write_text(js)
        out.with_suffix(".csv").write_text(table)
    else:
        sys.stdout.write(table if args.csv else js)
    return EXIT_OK


def _check(lines: list[str], name: str, ok: bool, detail: str = "") -> bool:
    lines.append(f"{'PASS' if ok else 'FAIL'} {name}" + (f": {detail}" if detail else ""))
    return ok


def verify_solution(sc: Scenario, doc: dict, points: int = 1000) -> tuple[bool, list[str]]:
    """Re-check a stored solution from scratch; returns (ok, ledger lines)."""
    lines: list[str] = []
    sensing = _schedule_from(doc["sensing"])
    tx = _schedule_from(doc["transmission"])
    buffered = bool(doc.get("buffered", sc.buffer is not None))
    checked = sc if buffered else sc.replace(buffer=None)
    report = check_feasibility(checked, sensing, tx)
    lines.extend(report.lines())
    ok = report.ok
    es, et = sensing_energy(sensing, sc.params), transmission_energy(tx, sc.params)
    stored = float(doc["total_energy_j"])
    ok &= _check(lines, "energy", math.isclose(es + et, stored, rel_tol=1e-9),
                 f"recomputed {fmt(es + et)} J, stored {fmt(stored)} J")
    h = doc.get("height_bits")
    if sc.busy is None:
        ok &= _check(lines, "height", h is None, "no busy interval, no height")
        return ok, lines
    h = float(h)
    b = search_bounds(sc, buffered)
    tol = 1e-9 * sc.total_data
    ok &= _check(lines, "bounds", b.lower - tol <= h <= max(b.lower, b.upper) + tol,
                 f"h={fmt(h)} in [{fmt(b.lower)}, {fmt(max(b.lower, b.upper))}]")
    at_b1 = sensing.cumulative(sc.busy.start)
    ok &= _check(lines, "height matches schedule", abs(at_b1 - h) <= tol,
                 f"sensed by b1 {fmt(at_b1)}")
    rows = [r for r in height_sweep(sc, points, buffered) if r.feasible]
    best = min(rows, key=lambda r: r.total)
    ok &= _check(lines, "sweep", best.total >= stored * (1 - 1e-6),
                 f"best grid point h={fmt(best.height)} E={fmt(best.total)} J")
    try:
        claimed = sum(energy_at(sc, h, buffered))
    except InfeasibleError:
        claimed = math.inf
    ok &= _check(lines, "sweep at stored height", claimed <= best.total * (1 + 1e-6),
                 f"E(h)={fmt(claimed)} J")
    return ok, lines


def cmd_verify(args) -> int:
    sf = load_scenario(args.scenario)
    try:
        doc = json.loads(Path(args.solution).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{args.solution}: {exc}") from exc
    try:
        ok, lines = verify_solution(sf.scenario, doc, args.points)
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"{args.solution}: malformed solution ({exc})") from exc
    print("\n".join(lines))
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_sweep(args) -> int:
    sf = load_scenario(args.scenario)
    sc = sf.scenario
    if sc.busy is None:
        print("no height dimension: scenario has no busy interval", file=sys.stderr)
        return EXIT_INAPPLICABLE
    buffered = args.buffered or sc.buffer is not None
    sol = solve(sc, buffered=buffered)
    b = sol.bounds
    buf = io.StringIO()
    buf.write(f"# h_l={fmt(b.lower)}\n# h_u={fmt(b.upper)}\n")
    buf.write("# criticals=" + ";".join(fmt(c.height) for c in sol.critical_heights) + "\n")
    buf.write(f"# h_opt={fmt(sol.height)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["h_bits", "total_energy_j", "sensing_energy_j", "transmission_energy_j"])
    for r in height_sweep(sc, args.points, buffered):
        if r.feasible:
            w.writerow([fmt(r.height), fmt(r.total), fmt(r.sensing), fmt(r.transmission)])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- bench


AXES = ("total_data", "horizon", "buffer")


@dataclass(frozen=True)
class BenchConfig:
    scenario: ScenarioFile
    axis: str
    values: tuple[float, ...]
    realizations: int = 100
    baselines: tuple[str, ...] = ("UB", "LB", "RH")
    seed: int = 0
    output: str | None = None

    def __post_init__(self):
        if self.axis not in AXES:
            raise ScenarioError(f"axis must be one of {AXES}")
        if self.realizations < 1:
            raise ScenarioError("realizations must be >= 1")
        vals = self.values
        if not vals or any(v <= 0 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ScenarioError("axis values must be positive and increasing")
        for s in self.baselines:
            if s not in SCHEMES or s == "JSTRC":
                raise ScenarioError(f"unknown baseline {s!r}")


def load_bench_config(path: str | Path) -> BenchConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
        scen = doc.get("scenario", "builtin")
        if scen == "builtin":
            sf = parse_scenario(json.loads(bundled_scenario_text()))
        elif isinstance(scen, dict):
            sf = parse_scenario(scen)
        else:
            sf = load_scenario(path.parent / scen)
        return BenchConfig(
            scenario=sf, axis=_require(doc, "axis"),
            values=tuple(float(v) for v in _require(doc, "values")),
            realizations=int(doc.get("realizations", 100)),
            baselines=tuple(doc.get("baselines", ("UB", "LB", "RH"))),
            seed=int(doc.get("seed", sf.seed)),
            output=doc.get("output"),
        )
    except (json.JSONDecodeError, TypeError, AttributeError, KeyError) as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def scaled(sc: Scenario, axis: str, value: float) -> Scenario:
    if axis == "total_data":
        k = value / sc.total_data
        return sc.replace(tasks=tuple(Task(t.deadline, t.data * k) for t in sc.tasks))
    if axis == "horizon":
        busy = None if sc.busy is None else BusyInterval(sc.busy.start * value, sc.busy.end * value)
        return sc.replace(tasks=tuple(Task(t.deadline * value, t.data) for t in sc.tasks), busy=busy)
    return sc.replace(buffer=None if math.isinf(value) else value)


@dataclass
class BenchResult:
    schemes: tuple[str, ...]
    values: tuple[float, ...]
    energies: np.ndarray        # [value, scheme, realization], nan where infeasible
    failures: dict = field(default_factory=dict)

    def rows(self):
        for vi, v in enumerate(self.values):
            for si, s in enumerate(self.schemes):
                e = self.energies[vi, si]
                e = e[np.isfinite(e)]
                n = len(e)
                yield (v, s, float(e.mean()) if n else math.nan,
                       float(e.std(ddof=1)) if n > 1 else 0.0, n)

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["axis", "scheme", "mean_energy_j", "std_energy_j", "n"])
        for v, s, m, sd, n in self.rows():
            w.writerow([fmt(v), s, fmt(m), fmt(sd), n])
        return buf.getvalue()


def run_bench(cfg: BenchConfig) -> BenchResult:
    """Monte-Carlo over channel gains with common random numbers across schemes and axis values."""
    base = cfg.scenario.scenario
    schemes = ("JSTRC",) + tuple(cfg.baselines)
    root = np.random.SeedSequence(cfg.seed)
    gain_seq, rh_seq = root.spawn(2)
    gains = np.random.default_rng(gain_seq).exponential(cfg.scenario.mean_gain, cfg.realizations)
    rh_seeds = rh_seq.spawn(cfg.realizations)
    out = np.full((len(cfg.values), len(schemes), cfg.realizations), np.nan)
    failures: dict = {}
    for vi, v in enumerate(cfg.values):
        try:
            sc_v = scaled(base, cfg.axis, v)
        except (InfeasibleError, ScenarioError) as exc:
            failures[v] = (cfg.realizations, str(exc))
            continue
        for k, g in enumerate(gains):
            sc = sc_v.replace(params=sc_v.params.with_gain(float(g)))
            for si, s in enumerate(schemes):
                try:
                    sol = baseline(sc, s, np.random.default_rng(rh_seeds[k]))
                except InfeasibleError as exc:
                    n, _ = failures.get(v, (0, ""))
                    failures[v] = (n + 1, str(exc))
                    continue
                out[vi, si, k] = sol.total_energy
    return BenchResult(schemes, cfg.values, out, failures)


def cmd_bench(args) -> int:
    cfg = load_bench_config(args.config)
    if args.seed is not None:
        cfg = BenchConfig(cfg.scenario, cfg.axis, cfg.values, cfg.realizations, cfg.baselines,
                          args.seed, cfg.output)
    res = run_bench(cfg)
    for v, (n, why) in sorted(res.failures.items()):
        print(f"axis value {fmt(v)}: {n} infeasible solves ({why})", file=sys.stderr)
    _emit(res.csv(), args.out or cfg.output)
    return EXIT_OK


def cmd_example(args) -> int:
    _emit(bundled_scenario_text(), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sensetx",
                                 description="Energy-optimal sensing and transmission schedules.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a scenario file")
    p.add_argument("scenario")
    p.add_argument("--buffered", action="store_true", help="enforce the receiver buffer")
    fmt_group = p.add_mutually_exclusive_group()
    fmt_group.add_argument("--json", action="store_true", help="print the solution JSON (default)")
    fmt_group.add_argument("--csv", action="store_true", help="print the schedule table")
    p.add_argument("--out", help="write PATH (JSON) and PATH with .csv suffix (schedule)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="re-check a stored solution")
    p.add_argument("scenario")
    p.add_argument("solution")
    p.add_argument("--points", type=int, default=1000)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="tabulate energy against the height")
    p.add_argument("scenario")
    p.add_argument("--points", type=int, default=1000)
    p.add_argument("--buffered", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="Monte-Carlo benchmark over random channel gains")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("example", help="print the bundled reference scenario")
    p.add_argument("--out")
    p.set_defaults(func=cmd_example)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())

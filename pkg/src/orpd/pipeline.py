"""Batch driver: relax, recover, round, re-solve, and tabulate bounds and gaps."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import acopf
from .conic import SolverOptions, solve
from .errors import ConfigError, OrpdError
from .network import load_network
from .recovery import RelaxationSolution, optimality_gap, recover_continuous, round_assignment
from .relaxations import Model, Objective, RelaxationKind, build_relaxation

SCHEMA = "orpd-report/1"
KIND_ORDER = ("sdr1", "tcr1", "sdr2", "tcr2")
OBJECTIVES = ("cost", "loss")
UNITS = {"cost": "$/h", "loss": "MW"}
CSV_COLUMNS = (
    "case", "objective", "kind", "chordal", "lower", "upper", "gap_pct",
    "normalized_lower", "normalized_upper", "relaxation_status", "subproblem_status",
    "failed", "build_time", "solve_time", "subproblem_time",
)
NORM_TOL = 1e-6


@dataclass
class RunConfig:
    cases: list[str]
    kinds: list[str] = field(default_factory=lambda: list(KIND_ORDER))
    objectives: list[str] = field(default_factory=lambda: ["cost"])
    chordal: bool = False
    tolerance: float = 1e-8
    time_limit: float = 600.0  # per cell, seconds
    output: str | None = None
    format: str = "json"
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.cases, str):
            self.cases = [self.cases]
        if isinstance(self.kinds, str):
            self.kinds = [self.kinds]
        if isinstance(self.objectives, str):
            self.objectives = [self.objectives]
        self.kinds = [k.lower() for k in self.kinds]
        if "all" in self.kinds:
            self.kinds = list(KIND_ORDER)
        self.objectives = [o.lower() for o in self.objectives]
        if "both" in self.objectives:
            self.objectives = list(OBJECTIVES)

    def validate(self) -> "RunConfig":
        if not self.cases:
            raise ConfigError("at least one case is required")
        if not self.kinds:
            raise ConfigError("at least one relaxation kind is required")
        bad = [k for k in self.kinds if k not in KIND_ORDER]
        if bad:
            raise ConfigError(f"unknown kinds {bad}; choose from {list(KIND_ORDER)}")
        bad = [o for o in self.objectives if o not in OBJECTIVES]
        if bad or not self.objectives:
            raise ConfigError(f"objectives must be drawn from {list(OBJECTIVES)}")
        if self.format not in ("json", "csv", "md"):
            raise ConfigError(f"unknown format {self.format!r}")
        if not (self.tolerance > 0 and self.time_limit > 0 and self.workers >= 1):
            raise ConfigError("tolerance and time_limit must be positive, workers >= 1")
        return self

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        if "cases" not in data:
            raise ConfigError("config needs a 'cases' list")
        return cls(**data).validate()

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            if p.suffix == ".json":
                data = json.loads(text)
            else:
                import yaml

                data = yaml.safe_load(text)
        except Exception as exc:  # noqa: BLE001 - any parse error is a config error
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        return cls.from_mapping(data)


@dataclass
class CellResult:
    case: str
    objective: str
    kind: str
    chordal: bool
    lower: float | None = None
    upper: float | None = None
    gap_pct: float | None = None
    normalized_lower: float | None = None
    normalized_upper: float | None = None
    relaxation_status: str = ""
    subproblem_status: str = ""
    failed: bool = False
    reason: str = ""
    assignment: dict = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)
    volatile: dict = field(default_factory=dict)


@dataclass
class OrpdReport:
    cells: list[CellResult]
    best: dict = field(default_factory=dict)       # "case/objective" -> {lower, upper}
    averages: dict = field(default_factory=dict)   # objective -> kind -> means
    config: dict = field(default_factory=dict)
    schema: str = SCHEMA
    notes: list[str] = field(default_factory=lambda: [
        "averages skip failed cells",
        "normalized values use only successfully solved kinds of the same case and objective",
    ])

    def to_dict(self, include_volatile: bool = True) -> dict:
        d = asdict(self)
        if not include_volatile:
            for c in d["cells"]:
                c.pop("volatile", None)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OrpdReport":
        d = dict(d)
        d["cells"] = [CellResult(**c) for c in d["cells"]]
        return cls(**d)


def _kind(label: str, objective: str, chordal: bool) -> RelaxationKind:
    model = Model(label)
    return RelaxationKind(model, Objective(objective), chordal=chordal and model.is_sdr)


def run_cell(case: str, kind_label: str, objective: str, cfg: RunConfig) -> CellResult:
    """One (case, kind, objective) run; failures are recorded, never raised."""
    kind = _kind(kind_label, objective, cfg.chordal)
    cell = CellResult(case=Path(case).stem, objective=objective, kind=kind.label,
                      chordal=kind.chordal)
    start = time.perf_counter()
    try:
        net = load_network(case)
        t0 = time.perf_counter()
        prog, lifted = build_relaxation(net, kind)
        build_time = time.perf_counter() - t0
        remaining = cfg.time_limit - (time.perf_counter() - start)
        res = solve(prog, SolverOptions(tolerance=cfg.tolerance, time_limit=max(remaining, 1.0)))
        cell.relaxation_status = res.status
        cell.volatile.update(build_time=build_time, solve_time=res.solve_time,
                             relaxation_iterations=res.iterations)
        if res.reduced_accuracy:
            cell.diagnostics.append("relaxation accepted at reduced accuracy")
        if not res.ok:
            cell.failed, cell.reason = True, f"relaxation {res.status} ({res.backend_status})"
            return cell
        sol = RelaxationSolution.from_result(lifted, res)
        cell.lower = sol.bound
        assignment = round_assignment(net, recover_continuous(net, sol))
        cell.assignment = assignment.to_dict()
        cell.diagnostics += assignment.diagnostics
        remaining = cfg.time_limit - (time.perf_counter() - start)
        if remaining <= 0:
            cell.failed, cell.reason = True, "time limit reached before the subproblem"
            return cell
        sub = acopf.solve_subproblem(net, assignment, objective,
                                     warm=acopf.warm_start(net, sol),
                                     options=acopf.AcopfOptions(time_limit=remaining))
        cell.subproblem_status = sub.status
        cell.volatile.update(subproblem_time=sub.time, subproblem_iterations=sub.iterations)
        if not sub.feasible:
            cell.failed, cell.reason = True, f"subproblem {sub.status}: {sub.message}"
            return cell
        cell.upper = sub.objective
        cell.gap_pct = optimality_gap(cell.lower, cell.upper)
    except (OrpdError, ValueError, ArithmeticError, RuntimeError) as exc:
        cell.failed, cell.reason = True, f"{type(exc).__name__}: {exc}"
    finally:
        elapsed = time.perf_counter() - start
        cell.volatile["cell_time"] = elapsed
        if elapsed > cfg.time_limit and not cell.failed:
            cell.failed, cell.reason = True, f"time limit {cfg.time_limit:g} s exceeded"
    return cell


def _finish(cells: list[CellResult], cfg: RunConfig) -> OrpdReport:
    best = {}
    for c in cells:
        key = f"{c.case}/{c.objective}"
        b = best.setdefault(key, {"lower": None, "upper": None})
        if c.lower is not None and c.relaxation_status == "Optimal":
            b["lower"] = c.lower if b["lower"] is None else max(b["lower"], c.lower)
        if c.upper is not None:
            b["upper"] = c.upper if b["upper"] is None else min(b["upper"], c.upper)
    for c in cells:
        b = best[f"{c.case}/{c.objective}"]
        if c.lower is not None and b["lower"]:
            c.normalized_lower = c.lower / b["lower"]
        if c.upper is not None and b["upper"]:
            c.normalized_upper = c.upper / b["upper"]

    averages: dict = {}
    for obj in cfg.objectives:
        for kind in {c.kind for c in cells if c.objective == obj}:
            ok = [c for c in cells if c.objective == obj and c.kind == kind and not c.failed]
            entry = {"cells": len(ok)}
            for name in ("normalized_lower", "normalized_upper", "gap_pct"):
                vals = [getattr(c, name) for c in ok if getattr(c, name) is not None]
                entry[name] = sum(vals) / len(vals) if vals else None
            averages.setdefault(obj, {})[kind] = entry

    conf = asdict(cfg)
    conf.pop("output", None)
    conf.pop("workers", None)
    conf["cases"] = [Path(p).stem for p in cfg.cases]
    return OrpdReport(cells=cells, best=best, averages=averages, config=conf)


def run_pipeline(config: RunConfig) -> OrpdReport:
    """Run every (case, kind, objective) cell and assemble the report.

    Unreadable cases are fatal (ConfigError); everything else becomes a
    failed cell.
    """
    cfg = config.validate()
    for case in cfg.cases:
        try:
            load_network(case)
        except FileNotFoundError as exc:
            raise ConfigError(f"case not found: {case}") from exc
        except OrpdError as exc:
            raise ConfigError(f"case {case} is unusable: {exc}") from exc
    grid = [(case, obj, kind) for case in cfg.cases for obj in cfg.objectives for kind in cfg.kinds]
    if cfg.workers > 1 and len(grid) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(run_cell, case, kind, obj, cfg) for case, obj, kind in grid]
            cells = [f.result() for f in futures]
    else:
        cells = [run_cell(case, kind, obj, cfg) for case, obj, kind in grid]
    return _finish(cells, cfg)


# -- output ---------------------------------------------------------------------

def _f(x, digits: int) -> str:
    return "--" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.{digits}f}"


def _json(report: OrpdReport, include_volatile: bool = True) -> str:
    return json.dumps(report.to_dict(include_volatile), sort_keys=True, indent=1) + "\n"


def stable_json(report: OrpdReport) -> str:
    """JSON without the volatile (timing/iteration) fields."""
    return _json(report, include_volatile=False)


def _csv(report: OrpdReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for c in report.cells:
        v = c.volatile
        w.writerow([
            c.case, c.objective, c.kind, int(c.chordal), _f(c.lower, 2), _f(c.upper, 2),
            _f(c.gap_pct, 2), _f(c.normalized_lower, 4), _f(c.normalized_upper, 4),
            c.relaxation_status, c.subproblem_status, int(c.failed),
            _f(v.get("build_time"), 2), _f(v.get("solve_time"), 2), _f(v.get("subproblem_time"), 2),
        ])
    return buf.getvalue()


def _markdown(report: OrpdReport) -> str:
    out = []
    cases = list(dict.fromkeys(c.case for c in report.cells))
    for obj in dict.fromkeys(c.objective for c in report.cells):
        kinds = [k for k in dict.fromkeys(c.kind for c in report.cells if c.objective == obj)]
        cell = {(c.case, c.kind): c for c in report.cells if c.objective == obj}
        unit = UNITS[obj]
        out.append(f"### Normalized optimal values ({obj}, {unit})\n")
        head = ["case", "best lower", "best upper"] + [f"{k} lower" for k in kinds] + \
               [f"{k} upper" for k in kinds]
        out.append("| " + " | ".join(head) + " |")
        out.append("|" + "---|" * len(head))
        for case in cases:
            b = report.best.get(f"{case}/{obj}", {})
            row = [case, _f(b.get("lower"), 2), _f(b.get("upper"), 2)]
            row += [_f(getattr(cell.get((case, k)), "normalized_lower", None), 4) for k in kinds]
            row += [_f(getattr(cell.get((case, k)), "normalized_upper", None), 4) for k in kinds]
            out.append("| " + " | ".join(row) + " |")
        avg = report.averages.get(obj, {})
        row = ["average", "", ""]
        row += [_f(avg.get(k, {}).get("normalized_lower"), 4) for k in kinds]
        row += [_f(avg.get(k, {}).get("normalized_upper"), 4) for k in kinds]
        out.append("| " + " | ".join(row) + " |")
        out.append("")
        out.append(f"### Optimality gaps (%) and relaxation solve times (s), {obj}\n")
        head = ["case"] + [f"{k} gap" for k in kinds] + [f"{k} time" for k in kinds]
        out.append("| " + " | ".join(head) + " |")
        out.append("|" + "---|" * len(head))
        for case in cases:
            row = [case]
            row += [_f(getattr(cell.get((case, k)), "gap_pct", None), 2) for k in kinds]
            row += [_f(cell[(case, k)].volatile.get("solve_time") if (case, k) in cell else None, 2)
                    for k in kinds]
            out.append("| " + " | ".join(row) + " |")
        out.append("")
    return "\n".join(out)


def format_report(report: OrpdReport, fmt: str = "json") -> str:
    if fmt == "json":
        return _json(report)
    if fmt == "csv":
        return _csv(report)
    if fmt == "md":
        return _markdown(report)
    raise ConfigError(f"unknown format {fmt!r}")


def emit_report(report: OrpdReport, fmt: str = "json", path: str | Path | None = None) -> str:
    """Render the report; also write it to ``path`` when given.  Raises OSError on write failure."""
    text = format_report(report, fmt)
    if path is not None:
        Path(path).write_text(text)
    return text


def load_report(text: str) -> OrpdReport:
    return OrpdReport.from_dict(json.loads(text))

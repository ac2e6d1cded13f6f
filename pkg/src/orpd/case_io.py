"""Reading, writing and validating MATPOWER case files.

Only the subset of the format needed for optimal power flow is handled:
``mpc.baseMVA``, ``mpc.bus``, ``mpc.gen``, ``mpc.branch`` and the polynomial
rows of ``mpc.gencost``.  Matrices are kept exactly as written in the file
(external bus numbers are not renumbered here).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import MalformedRow, MissingMatrix, NonNumericEntry

# MATPOWER column indices (0-based)
BUS_I, BUS_TYPE, PD, QD, GS, BS, BUS_AREA, VM, VA, BASE_KV, ZONE, VMAX, VMIN = range(13)
GEN_BUS, PG, QG, QMAX, QMIN, VG, MBASE, GEN_STATUS, PMAX, PMIN = range(10)
(F_BUS, T_BUS, BR_R, BR_X, BR_B, RATE_A, RATE_B, RATE_C,
 TAP, SHIFT, BR_STATUS, ANGMIN, ANGMAX) = range(13)
MODEL, STARTUP, SHUTDOWN, NCOST, COST = range(5)

REF_BUS_TYPE = 3
POLYNOMIAL = 2

_MIN_COLS = {"bus": 13, "gen": 10, "branch": 11, "gencost": 4}
_REQUIRED = ("bus", "gen", "branch")

_ASSIGN = re.compile(r"^\s*mpc\.(\w+)\s*=\s*(.*)$")
_SCALAR = re.compile(r"^\s*([-+0-9.eE]+|Inf|-Inf|NaN)\s*;?\s*$")


@dataclass
class RawCase:
    """Numeric content of a MATPOWER case, one array per matrix."""

    base_mva: float
    bus: np.ndarray
    gen: np.ndarray
    branch: np.ndarray
    gencost: np.ndarray | None = None
    name: str = ""

    @property
    def bus_rows(self) -> np.ndarray:
        return self.bus

    @property
    def gen_rows(self) -> np.ndarray:
        return self.gen

    @property
    def branch_rows(self) -> np.ndarray:
        return self.branch

    @property
    def gencost_rows(self) -> np.ndarray | None:
        return self.gencost


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    severity: str = "error"  # "error", "warning" or "info"
    where: tuple = field(default=())

    def __str__(self) -> str:
        return f"[{self.severity}] {self.code}: {self.message}"


def _strip_comment(line: str) -> str:
    # '%' inside a quoted string (e.g. case names) must survive
    quoted = False
    for i, ch in enumerate(line):
        if ch == "'":
            quoted = not quoted
        elif ch == "%" and not quoted:
            return line[:i]
    return line


def _parse_number(tok: str, matrix: str, line: int, col: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise NonNumericEntry(matrix, line, col, tok) from None


def _read_matrix(name: str, lines: list[tuple[int, str]], start: int, first: str):
    """Collect rows of ``mpc.<name> = [ ... ];`` beginning at ``lines[start]``.

    Returns (rows, index of the line holding the closing bracket).
    """
    rows: list[tuple[int, list[float]]] = []
    tokens: list[str] = []
    row_line = lines[start][0]
    text = first
    i = start
    while True:
        lineno = lines[i][0]
        continued = False
        if "..." in text:
            text = text.split("...", 1)[0]
            continued = True
        closing = "]" in text
        if closing:
            text = text.split("]", 1)[0]
        for piece_no, piece in enumerate(text.split(";")):
            if piece_no > 0:
                if tokens:
                    rows.append((row_line, tokens))
                tokens = []
                row_line = lineno
            for tok in piece.replace(",", " ").split():
                if not tokens:
                    row_line = lineno
                tokens.append(tok)
        if closing:
            if tokens:
                rows.append((row_line, tokens))
            break
        if not continued and tokens:
            # a newline inside brackets also ends a row
            rows.append((row_line, tokens))
            tokens = []
        i += 1
        if i >= len(lines):
            raise MalformedRow(name, lineno, "unterminated matrix")
        text = lines[i][1]

    values = [[_parse_number(t, name, ln, c + 1) for c, t in enumerate(toks)]
              for ln, toks in rows]
    return rows, values, i


def parse_case(text: str, name: str = "") -> RawCase:
    """Parse MATPOWER case text into a :class:`RawCase`."""
    lines = [(no + 1, _strip_comment(raw)) for no, raw in enumerate(text.splitlines())]
    matrices: dict[str, np.ndarray] = {}
    scalars: dict[str, float] = {}
    if not name:
        m = re.search(r"function\s+\w+\s*=\s*(\w+)", text)
        name = m.group(1) if m else ""

    i = 0
    while i < len(lines):
        lineno, line = lines[i]
        m = _ASSIGN.match(line)
        if not m:
            i += 1
            continue
        key, rhs = m.group(1), m.group(2)
        if rhs.lstrip().startswith("["):
            body = rhs.split("[", 1)[1]
            rows, values, i = _read_matrix(key, lines, i, body)
            if key in _MIN_COLS:
                ncol = max((len(v) for v in values), default=_MIN_COLS[key])
                for (ln, _), v in zip(rows, values):
                    if key != "gencost" and len(v) != ncol:
                        raise MalformedRow(key, ln, f"expected {ncol} columns, got {len(v)}")
                    if len(v) < _MIN_COLS[key]:
                        raise MalformedRow(
                            key, ln, f"need at least {_MIN_COLS[key]} columns, got {len(v)}")
                if key == "gencost":
                    # rows may legitimately differ in length (mixed NCOST)
                    padded = [v + [0.0] * (ncol - len(v)) for v in values]
                    matrices[key] = np.array(padded, dtype=float).reshape(len(values), ncol)
                else:
                    matrices[key] = np.array(values, dtype=float).reshape(len(values), ncol)
        else:
            sm = _SCALAR.match(rhs)
            if sm:
                scalars[key] = float(sm.group(1))
        i += 1

    if "baseMVA" not in scalars:
        raise MissingMatrix("baseMVA")
    for key in _REQUIRED:
        if key not in matrices:
            raise MissingMatrix(key)

    branch = matrices["branch"]
    if branch.shape[1] < 13:
        # older files omit ANGMIN/ANGMAX
        pad = np.tile([-360.0, 360.0], (branch.shape[0], 1))[:, : 13 - branch.shape[1]]
        branch = np.hstack([branch, pad])
    return RawCase(
        base_mva=scalars["baseMVA"],
        bus=matrices["bus"],
        gen=matrices["gen"],
        branch=branch,
        gencost=matrices.get("gencost"),
        name=name,
    )


def read_case(path: str | Path) -> RawCase:
    """Read a case from disk, or a bundled case by name (e.g. ``"case14"``)."""
    p = Path(path)
    if not p.exists():
        bundled = resources.files("orpd") / "data" / f"{p.stem}.m"
        if p.suffix in ("", ".m") and bundled.is_file():
            return parse_case(bundled.read_text(), name=p.stem)
        raise FileNotFoundError(str(path))
    return parse_case(p.read_text(), name=p.stem)


def bundled_cases() -> list[str]:
    root = resources.files("orpd") / "data"
    return sorted(f.name[:-2] for f in root.iterdir() if f.name.endswith(".m"))


def _fmt_rows(mat: np.ndarray) -> str:
    return "\n".join("\t" + "\t".join(repr(float(x)) for x in row) + ";" for row in mat)


def format_case(raw: RawCase) -> str:
    """Serialize a RawCase back to MATPOWER text (full float precision)."""
    fname = raw.name or "case"
    parts = [
        f"function mpc = {fname}",
        "mpc.version = '2';",
        f"mpc.baseMVA = {raw.base_mva!r};",
        "mpc.bus = [", _fmt_rows(raw.bus), "];",
        "mpc.gen = [", _fmt_rows(raw.gen), "];",
        "mpc.branch = [", _fmt_rows(raw.branch), "];",
    ]
    if raw.gencost is not None:
        parts += ["mpc.gencost = [", _fmt_rows(raw.gencost), "];"]
    return "\n".join(p for p in parts if p) + "\n"


def validate_case(raw: RawCase) -> list[Diagnostic]:
    """Check a parsed case for inconsistencies; an empty list means clean.

    Severity ``error`` blocks network construction; warnings and infos are
    informational (out-of-service elements are dropped downstream).
    """
    diags: list[Diagnostic] = []
    if not raw.base_mva > 0:
        diags.append(Diagnostic("NonpositiveBase", f"baseMVA = {raw.base_mva}"))

    ids = raw.bus[:, BUS_I].astype(int)
    seen: set[int] = set()
    for b in ids:
        if b in seen:
            diags.append(Diagnostic("DuplicateBus", f"bus {b} defined twice", where=(int(b),)))
        seen.add(b)

    for k, row in enumerate(raw.bus):
        if row[VMIN] > row[VMAX]:
            diags.append(Diagnostic(
                "InvertedBound", f"bus {int(row[BUS_I])}: Vmin {row[VMIN]} > Vmax {row[VMAX]}",
                where=("bus", int(row[BUS_I]))))

    for g, row in enumerate(raw.gen):
        if int(row[GEN_BUS]) not in seen:
            diags.append(Diagnostic(
                "UnknownBus", f"generator {g + 1} at unknown bus {int(row[GEN_BUS])}",
                where=("gen", g)))
        if row[GEN_STATUS] <= 0:
            diags.append(Diagnostic(
                "OutOfService", f"generator {g + 1} is out of service and dropped",
                severity="info", where=("gen", g)))
            continue
        if row[PMIN] > row[PMAX]:
            diags.append(Diagnostic(
                "InvertedBound", f"generator {g + 1}: Pmin {row[PMIN]} > Pmax {row[PMAX]}",
                where=("gen", g)))
        if row[QMIN] > row[QMAX]:
            diags.append(Diagnostic(
                "InvertedBound", f"generator {g + 1}: Qmin {row[QMIN]} > Qmax {row[QMAX]}",
                where=("gen", g)))

    for l, row in enumerate(raw.branch):
        f, t = int(row[F_BUS]), int(row[T_BUS])
        for end in (f, t):
            if end not in seen:
                diags.append(Diagnostic(
                    "UnknownBus", f"branch {l + 1} ({f},{t}) references unknown bus {end}",
                    where=("branch", l)))
        if row[BR_STATUS] <= 0:
            diags.append(Diagnostic(
                "OutOfService", f"branch {l + 1} is out of service and dropped",
                severity="info", where=("branch", l)))
            continue
        if row[BR_R] < 0:
            diags.append(Diagnostic(
                "NegativeResistance", f"branch {l + 1} has r = {row[BR_R]}",
                severity="warning", where=("branch", l)))
        if row[SHIFT] != 0:
            diags.append(Diagnostic(
                "PhaseShift", f"branch {l + 1} has phase shift {row[SHIFT]} deg (unsupported)",
                where=("branch", l)))

    if raw.gencost is not None:
        ng = raw.gen.shape[0]
        nc = raw.gencost.shape[0]
        if nc not in (ng, 2 * ng):
            diags.append(Diagnostic(
                "CostRowCount", f"{nc} gencost rows for {ng} generators"))
        elif nc == 2 * ng:
            diags.append(Diagnostic(
                "ReactiveCostIgnored", "reactive power cost rows are ignored",
                severity="info"))
        for g, row in enumerate(raw.gencost[: min(ng, nc)]):
            if int(row[MODEL]) != POLYNOMIAL:
                diags.append(Diagnostic(
                    "UnsupportedCost", f"generator {g + 1}: piecewise-linear cost model",
                    where=("gencost", g)))
            elif int(row[NCOST]) > 3:
                diags.append(Diagnostic(
                    "UnsupportedCost",
                    f"generator {g + 1}: polynomial cost of degree {int(row[NCOST]) - 1}",
                    where=("gencost", g)))
    return diags


def errors_only(diags: list[Diagnostic]) -> list[Diagnostic]:
    return [d for d in diags if d.severity == "error"]

"""Sparse conic-program IR and the solver contract.

A :class:`ConeProgram` is a linear objective plus a list of constraints of
the form ``A_i x + b_i in K_i`` where ``K_i`` is one of the zero cone, the
nonnegative orthant, a second-order cone ``{(t, u): ||u|| <= t}`` or the PSD
cone.  PSD constraints are given by the scaled lower-triangular vectorization
of the matrix (row-major, off-diagonals multiplied by sqrt(2)), which keeps
inner products intact.

The default backend is Clarabel; any solver able to take the
``(c, A, b, cones)`` data of :meth:`ConeProgram.matrices` can be swapped in.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import NegativeQuadCoefficient

SQRT2 = math.sqrt(2.0)

ZERO, NONNEG, SOC, PSD = "zero", "nonneg", "soc", "psd"
_KIND_ORDER = {ZERO: 0, NONNEG: 1, SOC: 2, PSD: 3}

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"
NUMERICAL_FAILURE = "NumericalFailure"
ITER_LIMIT = "IterLimit"


class Expr:
    """Affine expression ``sum(coef * x[var]) + const`` over program variables."""

    __slots__ = ("terms", "const")

    def __init__(self, terms: dict[int, float] | None = None, const: float = 0.0):
        self.terms = terms if terms is not None else {}
        self.const = float(const)

    @classmethod
    def var(cls, index: int) -> "Expr":
        return cls({index: 1.0})

    def copy(self) -> "Expr":
        return Expr(dict(self.terms), self.const)

    def _iadd(self, other, scale=1.0) -> "Expr":
        if isinstance(other, Expr):
            terms = self.terms
            for k, v in other.terms.items():
                terms[k] = terms.get(k, 0.0) + scale * v
            self.const += scale * other.const
        else:
            self.const += scale * float(other)
        return self

    def __add__(self, other):
        return self.copy()._iadd(other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.copy()._iadd(other, -1.0)

    def __rsub__(self, other):
        return (-self)._iadd(other)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, a):
        a = float(a)
        return Expr({k: a * v for k, v in self.terms.items()}, a * self.const)

    __rmul__ = __mul__

    def __truediv__(self, a):
        return self * (1.0 / float(a))

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(v * x[k] for k, v in self.terms.items())

    def __repr__(self):
        body = " + ".join(f"{v:g}*x{k}" for k, v in sorted(self.terms.items()))
        return f"Expr({body or '0'} + {self.const:g})"


def as_expr(a) -> Expr:
    return a if isinstance(a, Expr) else Expr(const=float(a))


def lincomb(pairs, const: float = 0.0) -> Expr:
    """Sum of ``coef * expr`` over ``pairs``; zero coefficients are skipped."""
    out = Expr(const=const)
    for coef, e in pairs:
        if coef != 0.0:
            out._iadd(e, coef)
    return out


@dataclass(frozen=True)
class Cone:
    kind: str
    size: int  # vector dimension, or matrix side for PSD

    @property
    def dim(self) -> int:
        if self.kind == PSD:
            return self.size * (self.size + 1) // 2
        return self.size

    def __str__(self):
        names = {ZERO: "Zero", NONNEG: "NonNeg", SOC: "SecondOrder", PSD: "PSD"}
        return f"{names[self.kind]}({self.size})"


@dataclass
class Constraint:
    cone: Cone
    rows: list[Expr]
    tag: str = ""

    def values(self, x: np.ndarray) -> np.ndarray:
        return np.array([r.value(x) for r in self.rows])


def svec_index(side: int) -> list[tuple[int, int]]:
    """(row, col) pairs in scaled-svec order: lower triangle, row-major."""
    return [(r, c) for r in range(side) for c in range(r + 1)]


def svec(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    return np.array([a[r, c] * (1.0 if r == c else SQRT2) for r, c in svec_index(n)])


def smat(v: np.ndarray, side: int | None = None) -> np.ndarray:
    if side is None:
        side = int(round((math.sqrt(8 * len(v) + 1) - 1) / 2))
    m = np.zeros((side, side))
    for val, (r, c) in zip(v, svec_index(side)):
        if r == c:
            m[r, r] = val
        else:
            m[r, c] = m[c, r] = val / SQRT2
    return m


def cone_violation(cone: Cone, v: np.ndarray) -> np.ndarray:
    """Per-row distance-like violation of ``v`` from ``cone`` (0 when inside)."""
    if cone.kind == ZERO:
        return np.abs(v)
    if cone.kind == NONNEG:
        return np.maximum(-v, 0.0)
    if cone.kind == SOC:
        return np.array([max(np.linalg.norm(v[1:]) - v[0], 0.0)])
    lam = np.linalg.eigvalsh(smat(v, cone.size))
    return np.array([max(-lam[0], 0.0)])


def dual_cone_violation(cone: Cone, z: np.ndarray) -> float:
    if cone.kind == ZERO:
        return 0.0
    return float(np.max(cone_violation(cone, z), initial=0.0))


@dataclass
class HermitianBlock:
    """A Hermitian matrix whose lower-triangle entries are affine expressions.

    ``re[i][j]`` (j <= i) is the real part of entry (i, j); ``im[i][j]``
    (j < i) its imaginary part.  Diagonal entries are real by construction.
    """

    side: int
    re: list[list[Expr]]
    im: list[list[Expr]]

    @classmethod
    def from_entries(cls, side: int, entry) -> "HermitianBlock":
        """Build from ``entry(i, j) -> (re, im)`` evaluated for ``i >= j``."""
        re, im = [], []
        for i in range(side):
            rrow, irow = [], []
            for j in range(i + 1):
                a, b = entry(i, j)
                rrow.append(as_expr(a))
                irow.append(as_expr(b) if i != j else Expr())
            re.append(rrow)
            im.append(irow)
        return cls(side, re, im)

    def entry(self, i: int, j: int) -> tuple[Expr, Expr]:
        if i >= j:
            return self.re[i][j], self.im[i][j]
        return self.re[j][i], -self.im[j][i]

    def value(self, x: np.ndarray) -> np.ndarray:
        m = np.zeros((self.side, self.side), dtype=complex)
        for i in range(self.side):
            for j in range(i + 1):
                val = complex(self.re[i][j].value(x), self.im[i][j].value(x) if i != j else 0.0)
                m[i, j] = val
                m[j, i] = val.conjugate()
        return m


class HermitianVariable:
    """Hermitian matrix variable whose entries are created on first use.

    Only entries that some constraint touches become program variables, so a
    clique-decomposed matrix never allocates the entries outside its cliques.
    """

    def __init__(self, program: "ConeProgram", side: int, name: str):
        self.program = program
        self.side = side
        self.name = name
        self._re: dict[tuple[int, int], Expr] = {}
        self._im: dict[tuple[int, int], Expr] = {}

    def entry(self, i: int, j: int) -> tuple[Expr, Expr]:
        a, b = (i, j) if i >= j else (j, i)
        if (a, b) not in self._re:
            self._re[a, b] = self.program.add_var(f"Re{self.name}[{a},{b}]")
            self._im[a, b] = (self.program.add_var(f"Im{self.name}[{a},{b}]")
                              if a != b else Expr())
        re, im = self._re[a, b], self._im[a, b]
        return (re, im) if i >= j else (re, -im)

    def re(self, i: int, j: int) -> Expr:
        return self.entry(i, j)[0]

    def im(self, i: int, j: int) -> Expr:
        return self.entry(i, j)[1]

    def has_entry(self, i: int, j: int) -> bool:
        return (max(i, j), min(i, j)) in self._re

    def full_block(self) -> HermitianBlock:
        return HermitianBlock.from_entries(self.side, self.entry)

    def value(self, x: np.ndarray) -> np.ndarray:
        """Matrix value with untouched entries left at zero."""
        m = np.zeros((self.side, self.side), dtype=complex)
        for (a, b), re in self._re.items():
            val = complex(re.value(x), self._im[a, b].value(x))
            m[a, b] = val
            m[b, a] = val.conjugate()
        return m

    def assign(self, x: np.ndarray, m: np.ndarray) -> None:
        """Write the entries of Hermitian ``m`` into ``x`` for every allocated entry."""
        for (a, b), re in self._re.items():
            (k,) = re.terms
            x[k] = m[a, b].real
            im = self._im[a, b]
            if im.terms:
                (k,) = im.terms
                x[k] = m[a, b].imag


def real_embedding(m: np.ndarray) -> np.ndarray:
    """Real symmetric ``[[Re M, -Im M], [Im M, Re M]]`` of a Hermitian ``M``."""
    return np.block([[m.real, -m.imag], [m.imag, m.real]])


def embed_hermitian_psd(block: HermitianBlock, tag: str = "") -> Constraint:
    """PSD constraint on the real embedding of ``block`` (side doubles).

    The embedding is PSD iff the Hermitian matrix is; its eigenvalues are
    those of the Hermitian matrix, each repeated twice.
    """
    s = block.side
    rows = []
    for r in range(2 * s):
        for c in range(r + 1):
            if r < s:
                e = block.re[r][c]
            elif c >= s:
                e = block.re[r - s][c - s]
            else:
                i, j = r - s, c
                if i > j:
                    e = block.im[i][j]
                elif i == j:
                    e = Expr()
                else:
                    e = -block.im[j][i]
            rows.append(e if r == c else e * SQRT2)
    return Constraint(Cone(PSD, 2 * s), rows, tag)


class ConeProgram:
    """Mutable builder; call :meth:`matrices` or :func:`solve` once complete."""

    def __init__(self, name: str = ""):
        self.name = name
        self.var_names: list[str] = []
        self.objective = Expr()
        self.constraints: list[Constraint] = []

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    def add_var(self, name: str) -> Expr:
        self.var_names.append(name)
        return Expr.var(len(self.var_names) - 1)

    def add(self, kind: str, rows, tag: str = "", size: int | None = None) -> Constraint:
        rows = [as_expr(r) for r in rows]
        if kind == PSD:
            side = size if size is not None else int(round((math.sqrt(8 * len(rows) + 1) - 1) / 2))
            cone = Cone(PSD, side)
        else:
            cone = Cone(kind, len(rows))
        if cone.dim != len(rows):
            raise ValueError(f"{cone} needs {cone.dim} rows, got {len(rows)}")
        con = Constraint(cone, rows, tag)
        self.constraints.append(con)
        return con

    def add_constraint(self, con: Constraint) -> Constraint:
        self.constraints.append(con)
        return con

    def add_zero(self, rows, tag=""):
        return self.add(ZERO, rows, tag)

    def add_nonneg(self, rows, tag=""):
        return self.add(NONNEG, rows, tag)

    def add_soc(self, rows, tag=""):
        return self.add(SOC, rows, tag)

    def minimize(self, expr: Expr):
        self.objective = as_expr(expr)

    def var_index(self, name: str) -> int:
        return self.var_names.index(name)

    def objective_value(self, x: np.ndarray) -> float:
        return self.objective.value(x)

    def matrices(self):
        """Stacked data ``(c, c0, A, b, cones)`` with ``A x + b`` in the product cone.

        Rows appear in constraint order.
        """
        n = self.num_vars
        c = np.zeros(n)
        for k, v in self.objective.terms.items():
            c[k] += v
        ii, jj, vv, b = [], [], [], []
        row = 0
        for con in self.constraints:
            for e in con.rows:
                for k, v in e.terms.items():
                    if v != 0.0:
                        ii.append(row)
                        jj.append(k)
                        vv.append(v)
                b.append(e.const)
                row += 1
        A = sp.csr_matrix((vv, (ii, jj)), shape=(row, n))
        return c, self.objective.const, A, np.array(b), [con.cone for con in self.constraints]

    def row_violations(self, x: np.ndarray) -> list[tuple[str, np.ndarray]]:
        """Per-constraint violation vectors at ``x`` (no solver involved)."""
        return [(con.tag, cone_violation(con.cone, con.values(x))) for con in self.constraints]

    def max_violation(self, x: np.ndarray) -> float:
        return max((float(v.max(initial=0.0)) for _, v in self.row_violations(x)), default=0.0)

    def dump(self) -> str:
        """Text listing of the program (format ``orpd-coneprogram 1``)."""
        out = ["# orpd-coneprogram 1", f"name {self.name}", f"vars {self.num_vars}"]
        out += [f"var {i} {nm}" for i, nm in enumerate(self.var_names)]
        out.append(f"objective {len(self.objective.terms)} {self.objective.const!r}")
        out += [f"c {k} {v!r}" for k, v in sorted(self.objective.terms.items())]
        for ci, con in enumerate(self.constraints):
            out.append(f"cone {ci} {con.cone.kind} {con.cone.size} {con.tag}")
            for r, e in enumerate(con.rows):
                out += [f"a {r} {k} {v!r}" for k, v in sorted(e.terms.items())]
                if e.const != 0.0:
                    out.append(f"b {r} {e.const!r}")
        return "\n".join(out) + "\n"


def quad_cost_epigraph(program: ConeProgram, c2: float, c1: float, c0: float, p: Expr,
                       name: str = "r") -> tuple[Expr | None, Expr]:
    """Objective contribution ``r + c1 p + c0`` with ``r >= c2 p^2``.

    The bound is imposed as ``||(r - 1, 2 sqrt(c2) p)|| <= r + 1``.  With
    ``c2 == 0`` no variable or cone is created and ``r`` is returned as None.
    """
    if c2 < 0:
        raise NegativeQuadCoefficient(f"c2 = {c2} < 0")
    lin = p * c1 + c0
    if c2 == 0:
        return None, lin
    r = program.add_var(name)
    program.add_soc([r + 1.0, r - 1.0, p * (2.0 * math.sqrt(c2))], tag=f"epigraph[{name}]")
    return r, r + lin


@dataclass
class SolverOptions:
    tolerance: float = 1e-8
    max_iter: int = 200
    time_limit: float = float("inf")
    verbose: bool = False
    direct_solve_method: str = "faer"
    equilibrate: bool = True
    # the default 1e-8 stalls on the lifted power-flow SDPs (rank-deficient
    # optima); 1e-7 converges to full accuracy on every bundled case
    static_regularization: float = 1e-7
    max_step_fraction: float = 0.99
    # when no attempt certifies at ``tolerance``, the best one is still
    # accepted (flagged reduced_accuracy) if it certifies at this multiple
    acceptable_factor: float = 10.0
    # (static_regularization, dynamic_regularization, max_step_fraction)
    # tried in order when a solve ends short of the tolerance
    retries: tuple = ((1e-7, True, 0.95), (1e-6, True, 0.99), (1e-6, False, 0.9))


@dataclass
class Certificate:
    primal_residual: float
    dual_residual: float
    gap: float
    primal_cone: float
    dual_cone: float

    @property
    def worst(self) -> float:
        return max(self.primal_residual, self.dual_residual, self.gap,
                   self.primal_cone, self.dual_cone)

    def within(self, tol: float) -> bool:
        return self.worst <= tol


@dataclass
class SolverResult:
    status: str
    primal: np.ndarray | None
    dual: np.ndarray | None
    objective: float | None
    solve_time: float
    iterations: int
    backend_status: str = ""
    certificate: Certificate | None = None
    reduced_accuracy: bool = False

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def check_certificate(program: ConeProgram, x: np.ndarray, z: np.ndarray,
                      s: np.ndarray | None = None) -> Certificate:
    """Recompute optimality residuals from primal ``x``, dual ``z`` and slack ``s``.

    Dual problem: maximize ``-b.z + c0`` s.t. ``A^T z = c``, ``z in K*``.
    The primal residual is ``A x + b - s`` with ``s`` checked for cone
    membership; without ``s`` the slack is taken as ``A x + b`` itself, so
    all infeasibility shows up as cone violation.  Residuals are normalized
    like the usual IPM stopping tests.
    """
    c, c0, A, b, cones = program.matrices()
    ax = A @ x + b
    if s is None:
        s = ax.copy()
        for off, cone in _offsets(cones):
            if cone.kind == ZERO:
                s[off:off + cone.dim] = 0.0
    eq = ax - s
    pviol, dviol = 0.0, 0.0
    for off, cone in _offsets(cones):
        seg = slice(off, off + cone.dim)
        if cone.kind == ZERO:
            pviol = max(pviol, float(np.abs(s[seg]).max(initial=0.0)))
        else:
            pviol = max(pviol, float(cone_violation(cone, s[seg]).max(initial=0.0)))
        dviol = max(dviol, dual_cone_violation(cone, z[seg]))
    scale_p = max(1.0, np.abs(b).max(initial=0.0) + np.abs(x).max(initial=0.0)
                  + np.abs(s).max(initial=0.0))
    scale_d = max(1.0, np.abs(c).max(initial=0.0) + np.abs(x).max(initial=0.0)
                  + np.abs(z).max(initial=0.0))
    pres = np.abs(eq).max(initial=0.0) / scale_p
    dres = np.abs(A.T @ z - c).max(initial=0.0) / scale_d
    pobj = float(c @ x)
    dobj = float(-b @ z)
    gap = abs(pobj - dobj) / max(1.0, min(abs(pobj), abs(dobj)))
    return Certificate(pres, dres, gap, pviol / scale_p, dviol / scale_d)


def _offsets(cones):
    o = 0
    for k in cones:
        yield o, k
        o += k.dim


def _clarabel_cones(cones):
    import clarabel

    merged: list[Cone] = []
    for k in cones:
        # adjacent zero/nonneg blocks are merged to keep the cone list short
        if merged and k.kind in (ZERO, NONNEG) and merged[-1].kind == k.kind:
            merged[-1] = Cone(k.kind, merged[-1].size + k.size)
        else:
            merged.append(k)
    make = {
        ZERO: lambda k: clarabel.ZeroConeT(k.dim),
        NONNEG: lambda k: clarabel.NonnegativeConeT(k.dim),
        SOC: lambda k: clarabel.SecondOrderConeT(k.dim),
        PSD: lambda k: clarabel.PSDTriangleConeT(k.size),
    }
    return [make[k.kind](k) for k in merged]


def solve(program: ConeProgram, options: SolverOptions | None = None) -> SolverResult:
    """Solve ``program`` with Clarabel and verify the returned certificate.

    When the first attempt is not certified optimal, the solve is repeated
    with each ``(static_regularization, dynamic_regularization,
    max_step_fraction)`` triple in ``options.retries``; the first certified
    result wins.  Failing that, the attempt with the smallest certificate is
    accepted with ``reduced_accuracy`` set when it is within
    ``acceptable_factor * tolerance``; otherwise the last attempt is returned.
    Iterations and time accumulate over attempts.
    """
    opts = options or SolverOptions()
    attempts = [(opts.static_regularization, True, opts.max_step_fraction), *opts.retries]
    total_time, total_iter = 0.0, 0
    res = best = None
    for reg, dyn, step in attempts:
        res, x, z = _solve_once(program, opts, reg, dyn, step)
        total_time += res.solve_time
        total_iter += res.iterations
        if res.status in (OPTIMAL, INFEASIBLE, UNBOUNDED):
            break
        if res.certificate is not None and (best is None or res.certificate.worst < best[0].certificate.worst):
            best = (res, x, z)
    else:
        if best is not None and best[0].certificate.within(opts.acceptable_factor * opts.tolerance):
            res, x, z = best
            c, c0 = program.matrices()[:2]
            res.status, res.primal, res.dual = OPTIMAL, x, z
            res.objective = float(c @ x + c0)
            res.reduced_accuracy = True
    res.solve_time, res.iterations = total_time, total_iter
    return res


def _solve_once(program: ConeProgram, opts: SolverOptions, static_reg: float,
                dynamic_reg: bool, step: float = 0.99) -> SolverResult:
    import clarabel

    c, c0, A, b, cones = program.matrices()
    order = sorted(range(len(cones)), key=lambda i: _KIND_ORDER[cones[i].kind])
    offs = list(_offsets(cones))
    perm = np.concatenate([np.arange(offs[i][0], offs[i][0] + cones[i].dim) for i in order]) \
        if cones else np.zeros(0, dtype=int)
    perm = perm.astype(int)
    A_s = A[perm]
    b_s = b[perm]
    cones_s = [cones[i] for i in order]

    settings = clarabel.DefaultSettings()
    settings.verbose = opts.verbose
    settings.max_iter = opts.max_iter
    settings.tol_gap_abs = opts.tolerance
    settings.tol_gap_rel = opts.tolerance
    settings.tol_feas = opts.tolerance
    settings.equilibrate_enable = opts.equilibrate
    settings.chordal_decomposition_enable = False
    settings.presolve_enable = False
    if math.isfinite(opts.time_limit):
        settings.time_limit = opts.time_limit
    settings.direct_solve_method = opts.direct_solve_method
    settings.static_regularization_constant = static_reg
    settings.dynamic_regularization_enable = dynamic_reg
    settings.max_step_fraction = step

    n = program.num_vars
    start = time.perf_counter()
    solver = clarabel.DefaultSolver(
        sp.csc_matrix((n, n)), c, sp.csc_matrix(-A_s), b_s, _clarabel_cones(cones_s), settings)
    sol = solver.solve()
    elapsed = time.perf_counter() - start

    bstatus = str(sol.status).split(".")[-1]
    x = np.asarray(sol.x, dtype=float)
    z = np.zeros(len(perm))
    z[perm] = np.asarray(sol.z, dtype=float)
    slack = np.zeros(len(perm))
    slack[perm] = np.asarray(sol.s, dtype=float)

    status = {
        "Solved": OPTIMAL,
        "PrimalInfeasible": INFEASIBLE,
        "AlmostPrimalInfeasible": INFEASIBLE,
        "DualInfeasible": UNBOUNDED,
        "AlmostDualInfeasible": UNBOUNDED,
        "MaxIterations": ITER_LIMIT,
        "MaxTime": ITER_LIMIT,
    }.get(bstatus, NUMERICAL_FAILURE)

    cert = None
    if status in (OPTIMAL, ITER_LIMIT) or bstatus in ("AlmostSolved", "InsufficientProgress"):
        cert = check_certificate(program, x, z, slack)
        # optimality is decided by the independent certificate, not the backend
        if status in (OPTIMAL, NUMERICAL_FAILURE):
            status = OPTIMAL if cert.within(opts.tolerance) else NUMERICAL_FAILURE

    has_primal = status in (OPTIMAL, ITER_LIMIT)
    return SolverResult(
        status=status,
        primal=x if has_primal else None,
        dual=z if has_primal else None,
        objective=float(c @ x + c0) if has_primal else None,
        solve_time=elapsed,
        iterations=int(sol.iterations),
        backend_status=bstatus,
        certificate=cert,
    ), x, z

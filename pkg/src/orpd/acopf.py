"""Continuous ACOPF with fixed shunt switches and tap ratios.

A primal-dual interior-point method in rectangular voltage coordinates
``v = e + j f`` with exact first and second derivatives.  The iteration
follows the usual MIPS scheme: slacks ``z > 0`` for ``h(x) <= 0``, a
barrier parameter driven by the complementarity ``z.mu``, and fraction-to-
the-boundary steps.  Flows are evaluated from the voltages, never carried
as variables.
"""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NoFeasibleUpperBound
from .network import Network, admittance_matrices

LOCAL_OPTIMAL = "LocalOptimal"
FEASIBLE_ONLY = "FeasibleOnly"
INFEASIBLE = "Infeasible"
DIVERGED = "Diverged"


@dataclass
class OperatingPoint:
    v: np.ndarray
    pg: np.ndarray
    qg: np.ndarray
    pf: np.ndarray = field(default_factory=lambda: np.zeros(0))
    qf: np.ndarray = field(default_factory=lambda: np.zeros(0))
    pt: np.ndarray = field(default_factory=lambda: np.zeros(0))
    qt: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def build(cls, net: Network, u: dict, t: dict, v, pg, qg) -> "OperatingPoint":
        """Point with flows computed from ``v`` and the reference angle rotated to zero."""
        v = np.asarray(v, dtype=complex)
        ref = net.reference_bus
        if abs(v[ref]) > 0:
            v = v * (abs(v[ref]) / v[ref])
        _, Yf, Yt, Cf, Ct = admittance_matrices(net, taps=t, shunt_on=u)
        sf = (Cf @ v) * np.conj(Yf @ v)
        st = (Ct @ v) * np.conj(Yt @ v)
        return cls(v=v, pg=np.asarray(pg, dtype=float), qg=np.asarray(qg, dtype=float),
                   pf=sf.real, qf=sf.imag, pt=st.real, qt=st.imag)


@dataclass
class LocalSolveResult:
    point: OperatingPoint | None
    objective: float | None
    status: str
    max_violation: float
    iterations: int
    time: float
    stationarity: float = math.inf
    start: str = ""
    message: str = ""

    @property
    def feasible(self) -> bool:
        return self.status in (LOCAL_OPTIMAL, FEASIBLE_ONLY)


@dataclass(frozen=True)
class AcopfOptions:
    feas_tol: float = 1e-6
    grad_tol: float = 1e-6
    comp_tol: float = 1e-6
    cost_tol: float = 1e-6
    max_iter: int = 400
    # equality residual the returned point is polished to; well below feas_tol
    # so the point lifts into the relaxations with tight row residuals
    polish_tol: float = 1e-11
    sigma: float = 0.1
    xi: float = 0.99995
    z0: float = 1.0
    alpha_min: float = 1e-8
    time_limit: float = math.inf  # seconds, over all starts


def _fixed_discretes(assignment) -> tuple[dict, dict]:
    """``(u, t)`` from a DiscreteAssignment or an explicit pair of dicts."""
    if isinstance(assignment, tuple):
        return assignment
    return dict(assignment.u_round), dict(assignment.t_round)


@dataclass
class Residuals:
    """Violation of each ORPD constraint family; zero everywhere iff feasible.

    Balance entries are signed mismatches (injection minus generation plus
    demand); inequality entries are ``max(0, excess)``.
    """

    balance_p: np.ndarray
    balance_q: np.ndarray
    flows: np.ndarray
    voltage: np.ndarray
    generator: np.ndarray
    thermal: np.ndarray
    ref_angle: float

    @property
    def vector(self) -> np.ndarray:
        return np.r_[self.balance_p, self.balance_q, self.flows, self.voltage,
                     self.generator, self.thermal, self.ref_angle]

    @property
    def max(self) -> float:
        return float(np.abs(self.vector).max(initial=0.0))


def residuals(net: Network, assignment, point: OperatingPoint) -> Residuals:
    u, t = _fixed_discretes(assignment)
    Ybus, Yf, Yt, Cf, Ct = admittance_matrices(net, taps=t, shunt_on=u)
    v = np.asarray(point.v, dtype=complex)
    s = v * np.conj(Ybus @ v)
    sg = np.zeros(net.n_bus, dtype=complex)
    for g, gen in enumerate(net.generators):
        sg[gen.bus] += complex(point.pg[g], point.qg[g])
    sd = np.array([complex(b.p_demand, b.q_demand) for b in net.buses])
    mis = s + sd - sg
    sf = (Cf @ v) * np.conj(Yf @ v)
    st = (Ct @ v) * np.conj(Yt @ v)
    if len(point.pf) == net.n_branch:
        flows = np.r_[point.pf - sf.real, point.qf - sf.imag, point.pt - st.real, point.qt - st.imag]
    else:
        flows = np.zeros(0)
    vm = np.abs(v)
    vmin = np.array([b.v_min for b in net.buses])
    vmax = np.array([b.v_max for b in net.buses])
    volt = np.maximum(np.maximum(vmin - vm, vm - vmax), 0.0)
    gl = []
    for g, gen in enumerate(net.generators):
        gl.append(max(gen.p_min - point.pg[g], point.pg[g] - gen.p_max, 0.0))
        gl.append(max(gen.q_min - point.qg[g], point.qg[g] - gen.q_max, 0.0))
    th = []
    for i, br in enumerate(net.branches):
        if br.thermal_limit is not None:
            th.append(max(abs(sf[i]) - br.thermal_limit, 0.0))
            th.append(max(abs(st[i]) - br.thermal_limit, 0.0))
    ref = net.reference_bus
    return Residuals(mis.real, mis.imag, flows, volt, np.array(gl), np.array(th),
                     float(np.angle(v[ref])) if abs(v[ref]) > 0 else 0.0)


def objective_value(net: Network, objective: str, pg) -> float:
    """Generation cost in $/h or total generation (= losses + demand) in MW."""
    pg = np.asarray(pg, dtype=float)
    if objective == "cost":
        return float(sum(g.cost_c2 * p * p + g.cost_c1 * p + g.cost_c0
                         for g, p in zip(net.generators, pg)))
    return float(net.base_mva * pg.sum())


class _Problem:
    """Constraint and derivative evaluation for one fixed (u, t)."""

    def __init__(self, net: Network, u: dict, t: dict, objective: str):
        self.net = net
        self.objective = objective
        n, ng = net.n_bus, net.n_gen
        self.n, self.ng = n, ng
        self.nx = 2 * n + 2 * ng
        self.Y, Yf, Yt, Cf, Ct = admittance_matrices(net, taps=t, shunt_on=u)
        lim = [i for i, br in enumerate(net.branches) if br.thermal_limit is not None]
        self.smax2 = np.array([net.branches[i].thermal_limit ** 2 for i in lim])
        self.Yf, self.Yt = Yf[lim], Yt[lim]
        self.Cf, self.Ct = Cf[lim], Ct[lim]
        self.Cg = sp.csr_matrix((np.ones(ng), ([g.bus for g in net.generators], range(ng))),
                                shape=(n, ng))
        self.sd = np.array([complex(b.p_demand, b.q_demand) for b in net.buses])
        self.ref = net.reference_bus
        self.c2 = np.array([g.cost_c2 for g in net.generators])
        self.c1 = np.array([g.cost_c1 for g in net.generators])
        self.c0 = np.array([g.cost_c0 for g in net.generators])

        vmin = np.array([b.v_min for b in net.buses])
        vmax = np.array([b.v_max for b in net.buses])
        self.vfix = np.flatnonzero(vmin == vmax)
        self.vfree = np.flatnonzero(vmin != vmax)
        self.vmin2, self.vmax2 = vmin**2, vmax**2

        # generator bounds as (index into x, lo, hi); equal bounds become equalities
        lo = np.r_[[g.p_min for g in net.generators], [g.q_min for g in net.generators]]
        hi = np.r_[[g.p_max for g in net.generators], [g.q_max for g in net.generators]]
        idx = 2 * n + np.arange(2 * ng)
        eq = lo == hi
        self.gfix_idx, self.gfix_val = idx[eq], lo[eq]
        self.gb_idx, self.gb_lo, self.gb_hi = idx[~eq], lo[~eq], hi[~eq]
        self.lo, self.hi = lo, hi

        self.neq = 2 * n + 1 + len(self.vfix) + len(self.gfix_idx)
        self.niq = 2 * len(self.vfree) + 2 * len(lim) + 2 * len(self.gb_idx)

    def split(self, x):
        n, ng = self.n, self.ng
        return x[:n] + 1j * x[n:2 * n], x[2 * n:2 * n + ng], x[2 * n + ng:]

    # objective ---------------------------------------------------------------
    def f(self, x):
        pg = x[2 * self.n:2 * self.n + self.ng]
        if self.objective == "cost":
            return float(np.sum(self.c2 * pg**2 + self.c1 * pg + self.c0))
        return float(self.net.base_mva * pg.sum())

    def df(self, x):
        g = np.zeros(self.nx)
        sl = slice(2 * self.n, 2 * self.n + self.ng)
        if self.objective == "cost":
            g[sl] = 2 * self.c2 * x[sl] + self.c1
        else:
            g[sl] = self.net.base_mva
        return g

    def d2f(self):
        d = np.zeros(self.nx)
        if self.objective == "cost":
            d[2 * self.n:2 * self.n + self.ng] = 2 * self.c2
        return sp.diags(d)

    # power-flow pieces ---------------------------------------------------------
    @staticmethod
    def _dS(V, A, C):
        """Jacobians of ``S = (C V) * conj(A V)`` w.r.t. ``e`` and ``f``."""
        I = A @ V
        CV = C @ V
        dA = sp.diags(np.conj(I)) @ C
        dB = sp.diags(CV) @ A.conj()
        return (dA + dB).tocsr(), (1j * (dA - dB)).tocsr()

    @staticmethod
    def _bilinear_hess(M):
        """Hessian in (e, f) of ``Re(v^T M conj(v))``."""
        M = sp.csr_matrix(M)
        S = M + M.T
        K = 1j * (M.T - M)
        return sp.bmat([[S.real, K.real], [K.real.T, S.real]]).tocsr()

    def gh(self, x):
        n = self.n
        V, pg, qg = self.split(x)
        s = V * np.conj(self.Y @ V) + self.sd - self.Cg @ (pg + 1j * qg)
        vm2 = x[:n] ** 2 + x[n:2 * n] ** 2
        g = np.r_[s.real, s.imag, x[n + self.ref], vm2[self.vfix] - self.vmin2[self.vfix],
                  x[self.gfix_idx] - self.gfix_val]
        sf = (self.Cf @ V) * np.conj(self.Yf @ V)
        st = (self.Ct @ V) * np.conj(self.Yt @ V)
        vf = self.vfree
        h = np.r_[self.vmin2[vf] - vm2[vf], vm2[vf] - self.vmax2[vf],
                  np.abs(sf) ** 2 - self.smax2, np.abs(st) ** 2 - self.smax2,
                  self.gb_lo - x[self.gb_idx], x[self.gb_idx] - self.gb_hi]
        return g, h

    def jac(self, x):
        n, ng, nx = self.n, self.ng, self.nx
        V, _, _ = self.split(x)
        e, fv = x[:n], x[n:2 * n]
        dSe, dSf = self._dS(V, self.Y, sp.identity(n, format="csr"))
        Cg = self.Cg
        Z = sp.csr_matrix((n, ng))
        Jp = sp.hstack([dSe.real, dSf.real, -Cg, Z])
        Jq = sp.hstack([dSe.imag, dSf.imag, Z, -Cg])
        rows = [Jp, Jq, sp.csr_matrix(([1.0], ([0], [n + self.ref])), shape=(1, nx))]
        vf = self.vfix
        if len(vf):
            rows.append(sp.csr_matrix(
                (np.r_[2 * e[vf], 2 * fv[vf]], (np.r_[np.arange(len(vf)), np.arange(len(vf))],
                                               np.r_[vf, n + vf])), shape=(len(vf), nx)))
        if len(self.gfix_idx):
            k = len(self.gfix_idx)
            rows.append(sp.csr_matrix((np.ones(k), (np.arange(k), self.gfix_idx)), shape=(k, nx)))
        Jg = sp.vstack(rows).tocsr()

        free = self.vfree
        k = len(free)
        r = np.arange(k)
        Jv = sp.csr_matrix((np.r_[2 * e[free], 2 * fv[free]], (np.r_[r, r], np.r_[free, n + free])),
                           shape=(k, nx))
        parts = [-Jv, Jv]
        for A, C in ((self.Yf, self.Cf), (self.Yt, self.Ct)):
            if A.shape[0] == 0:
                continue
            S = (C @ V) * np.conj(A @ V)
            de, dfj = self._dS(V, A, C)
            P = sp.diags(S.real)
            Q = sp.diags(S.imag)
            J = 2 * (P @ sp.hstack([de.real, dfj.real]) + Q @ sp.hstack([de.imag, dfj.imag]))
            parts.append(sp.hstack([J, sp.csr_matrix((A.shape[0], 2 * ng))]))
        kb = len(self.gb_idx)
        if kb:
            G = sp.csr_matrix((np.ones(kb), (np.arange(kb), self.gb_idx)), shape=(kb, nx))
            parts += [-G, G]
        Jh = sp.vstack(parts).tocsr() if parts else sp.csr_matrix((0, nx))
        return Jg, Jh

    def hess(self, x, lam, mu, fscale):
        """Hessian of ``fscale f + lam.g + mu.h`` (the lagrangian)."""
        n, ng = self.n, self.ng
        V, _, _ = self.split(x)
        H = self.d2f() * fscale
        # power balance
        c = lam[:n] - 1j * lam[n:2 * n]
        Hv = self._bilinear_hess(sp.diags(c) @ self.Y.conj())
        # |v|^2 rows: fixed-magnitude equalities and magnitude bounds
        a = np.zeros(n)
        nf = len(self.vfix)
        a[self.vfix] += lam[2 * n + 1:2 * n + 1 + nf]
        k = len(self.vfree)
        a[self.vfree] += mu[k:2 * k] - mu[:k]
        Hv = Hv + sp.diags(np.r_[2 * a, 2 * a])
        off = 2 * k
        for A, C in ((self.Yf, self.Cf), (self.Yt, self.Ct)):
            nl = A.shape[0]
            if nl == 0:
                continue
            nu = mu[off:off + nl]
            off += nl
            S = (C @ V) * np.conj(A @ V)
            de, dfj = self._dS(V, A, C)
            Jp = sp.hstack([de.real, dfj.real]).tocsr()
            Jq = sp.hstack([de.imag, dfj.imag]).tocsr()
            Nu = sp.diags(2 * nu)
            Hv = Hv + Jp.T @ Nu @ Jp + Jq.T @ Nu @ Jq
            w = 2 * nu * (S.real - 1j * S.imag)
            Hv = Hv + self._bilinear_hess(C.T @ sp.diags(w) @ A.conj())
        full = sp.block_diag([Hv, sp.csr_matrix((2 * ng, 2 * ng))])
        return (H + full).tocsr()


def _conds(prob, x, z, lam, mu, f, f0, g, h, Lx):
    feas = max(np.abs(g).max(initial=0.0), h.max(initial=0.0)) / (
        1 + max(np.abs(x).max(initial=0.0), np.abs(z).max(initial=0.0)))
    grad = np.abs(Lx).max(initial=0.0) / (
        1 + max(np.abs(lam).max(initial=0.0), np.abs(mu).max(initial=0.0)))
    comp = float(z @ mu) / (1 + np.abs(x).max(initial=0.0))
    cost = abs(f - f0) / (1 + abs(f0))
    return feas, grad, comp, cost


def _ipm(prob: _Problem, x0: np.ndarray, opts: AcopfOptions, deadline: float = math.inf):
    """Primal-dual interior point iterations; returns (x, converged, iters, gradcond, msg)."""
    x = x0.copy()
    fscale = 1.0 / max(1.0, np.abs(prob.df(x)).max())
    f = prob.f(x) * fscale
    g, h = prob.gh(x)
    Jg, Jh = prob.jac(x)
    niq, neq = prob.niq, prob.neq
    gamma = 1.0
    z = np.full(niq, opts.z0)
    mu = z.copy()
    k = h < -opts.z0
    z[k] = -h[k]
    k = gamma / z > opts.z0
    mu[k] = gamma / z[k]
    lam = np.zeros(neq)
    Lx = prob.df(x) * fscale + Jg.T @ lam + Jh.T @ mu
    f0 = f
    grad = math.inf
    for it in range(1, opts.max_iter + 1):
        Lxx = prob.hess(x, lam, mu, fscale)
        zinv = 1.0 / z
        DhZ = Jh.T @ sp.diags(zinv)
        M = Lxx + DhZ @ sp.diags(mu) @ Jh
        N = Lx + DhZ @ (mu * h + gamma)
        K = sp.bmat([[M, Jg.T], [Jg, None]]).tocsc()
        try:
            sol = spla.spsolve(K, -np.r_[N, g])
        except RuntimeError as exc:  # singular factorization
            return x, False, it, grad, f"linear solve failed: {exc}"
        if not np.all(np.isfinite(sol)):
            return x, False, it, grad, "non-finite Newton step"
        dx, dlam = sol[:prob.nx], sol[prob.nx:]
        dz = -h - z - Jh @ dx
        dmu = -mu + zinv * (gamma - mu * dz)
        neg = dz < 0
        ap = min(opts.xi * np.min(z[neg] / -dz[neg]), 1.0) if neg.any() else 1.0
        neg = dmu < 0
        ad = min(opts.xi * np.min(mu[neg] / -dmu[neg]), 1.0) if neg.any() else 1.0
        x = x + ap * dx
        z = z + ap * dz
        lam = lam + ad * dlam
        mu = mu + ad * dmu
        if niq:
            gamma = opts.sigma * float(z @ mu) / niq
        f0, f = f, prob.f(x) * fscale
        g, h = prob.gh(x)
        Jg, Jh = prob.jac(x)
        Lx = prob.df(x) * fscale + Jg.T @ lam + Jh.T @ mu
        feas, grad, comp, cost = _conds(prob, x, z, lam, mu, f, f0, g, h, Lx)
        if not np.all(np.isfinite(x)) or not math.isfinite(f):
            return x, False, it, grad, "non-finite iterate"
        if (feas < opts.feas_tol and grad < opts.grad_tol
                and comp < opts.comp_tol and cost < opts.cost_tol):
            return x, True, it, grad, "converged"
        if ap < opts.alpha_min or ad < opts.alpha_min or gamma < 1e-15 or gamma > 1e15:
            return x, False, it, grad, "step size or barrier parameter collapsed"
        if time.perf_counter() > deadline:
            return x, False, it, grad, "time limit"
    return x, False, opts.max_iter, grad, "iteration limit"


def _polish(prob: _Problem, x: np.ndarray, tol: float, steps: int = 5) -> np.ndarray:
    """Minimum-norm Newton corrections on the equalities and any violated inequalities.

    Violated inequality rows are driven onto their boundary.
    """
    def worst(g, h):
        return max(np.abs(g).max(initial=0.0), h.max(initial=0.0))

    g, h = prob.gh(x)
    for _ in range(steps):
        if worst(g, h) <= tol:
            break
        bad = np.flatnonzero(h > 0)
        Jg, Jh = prob.jac(x)
        J = sp.vstack([Jg, Jh[bad]]).tocsr()
        dx = spla.lsqr(J, -np.r_[g, h[bad]], atol=1e-15, btol=1e-15, iter_lim=10 * prob.nx)[0]
        g2, h2 = prob.gh(x + dx)
        if not worst(g2, h2) < worst(g, h):
            break
        x, g, h = x + dx, g2, h2
    return x


def _x_from(prob: _Problem, v, pg, qg) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    return np.r_[v.real, v.imag, pg, qg]


def flat_start(net: Network) -> OperatingPoint:
    """Unit-magnitude voltages (clipped into bounds) at zero angle, mid-range dispatch."""
    vm = np.array([min(max(1.0, b.v_min), b.v_max) for b in net.buses])
    pg = np.array([(g.p_min + g.p_max) / 2 for g in net.generators])
    qg = np.array([(g.q_min + g.q_max) / 2 for g in net.generators])
    return OperatingPoint(v=vm.astype(complex), pg=pg, qg=qg)


def dc_angle_start(net: Network, t: dict) -> OperatingPoint:
    """Flat magnitudes with angles from a lossless DC power flow at mid-range dispatch."""
    base = flat_start(net)
    n = net.n_bus
    B = sp.lil_matrix((n, n))
    for br in net.branches:
        x = -1.0 / br.series_admittance.imag if br.series_admittance.imag != 0 else 1e6
        b = 1.0 / (x * (t.get(br.id, 1.0) if br.has_tap else 1.0))
        k, m = br.from_bus, br.to_bus
        B[k, k] += b
        B[m, m] += b
        B[k, m] -= b
        B[m, k] -= b
    p = -np.array([b.p_demand for b in net.buses])
    for g, gen in enumerate(net.generators):
        p[gen.bus] += base.pg[g]
    ref = net.reference_bus
    keep = [k for k in range(n) if k != ref]
    theta = np.zeros(n)
    if keep:
        Bk = B.tocsr()[keep][:, keep]
        theta[keep] = spla.spsolve(Bk.tocsc(), p[keep] - p.sum() / n)
    return OperatingPoint(v=np.abs(base.v) * np.exp(1j * theta), pg=base.pg, qg=base.qg)


def warm_start(net: Network, sol) -> OperatingPoint:
    """Start from a relaxation solution: ``|v_k| = sqrt(V_kk)``, angles from branch ``V_km`` phases.

    Angles propagate outward from the reference bus over a breadth-first
    spanning tree; buses the tree cannot reach keep angle zero.
    """
    n = net.n_bus
    vm = np.sqrt(np.clip(sol.vkk, 0.0, None))
    nbrs: list[list[tuple[int, complex]]] = [[] for _ in range(n)]
    for (k, m), vkm in sol.vkm.items():
        nbrs[k].append((m, vkm))
        nbrs[m].append((k, np.conj(vkm)))
    theta = np.zeros(n)
    seen = [False] * n
    ref = net.reference_bus
    seen[ref] = True
    queue = deque([ref])
    while queue:
        k = queue.popleft()
        for m, vkm in nbrs[k]:
            if not seen[m]:
                # V_km = |.| exp(j (theta_k - theta_m))
                theta[m] = theta[k] - np.angle(vkm)
                seen[m] = True
                queue.append(m)
    return OperatingPoint(v=vm * np.exp(1j * theta), pg=np.array(sol.pg), qg=np.array(sol.qg))


def _better(a: LocalSolveResult, b: LocalSolveResult) -> bool:
    if a.feasible != b.feasible:
        return a.feasible
    if a.feasible:
        return a.objective < b.objective
    return a.max_violation < b.max_violation


def solve_subproblem(net: Network, assignment, objective: str = "cost",
                     warm: OperatingPoint | None = None,
                     options: AcopfOptions | None = None) -> LocalSolveResult:
    """Local ACOPF with the discretes of ``assignment`` held fixed.

    Starts are tried in order (the given warm start, a DC-angle start, a flat
    start) until one converges; if none does, the best feasible iterate is
    returned as FeasibleOnly, or the attempt is reported Infeasible/Diverged.
    """
    opts = options or AcopfOptions()
    u, t = _fixed_discretes(assignment)
    prob = _Problem(net, u, t, objective)
    starts = []
    if warm is not None:
        starts.append(("warm", warm))
    starts += [("dc", dc_angle_start(net, t)), ("flat", flat_start(net))]

    t0 = time.perf_counter()
    total_iter = 0
    fallback: LocalSolveResult | None = None
    deadline = t0 + opts.time_limit
    for name, pt in starts:
        if time.perf_counter() > deadline and fallback is not None:
            break
        x0 = _x_from(prob, pt.v, pt.pg, pt.qg)
        x, ok, iters, grad, msg = _ipm(prob, x0, opts, deadline)
        total_iter += iters
        if not np.all(np.isfinite(x)):
            cand = LocalSolveResult(None, None, DIVERGED, math.inf, iters, 0.0, grad, name, msg)
        else:
            x = _polish(prob, x, opts.polish_tol)
            V, pg, qg = prob.split(x)
            point = OperatingPoint.build(net, u, t, V, pg, qg)
            viol = residuals(net, (u, t), point).max
            if ok and viol <= opts.feas_tol:
                status = LOCAL_OPTIMAL
            elif viol <= opts.feas_tol:
                status = FEASIBLE_ONLY
            elif msg in ("iteration limit", "time limit") or np.abs(x).max() < 1e3:
                status = INFEASIBLE
            else:
                status = DIVERGED
            cand = LocalSolveResult(point, objective_value(net, objective, pg), status,
                                    viol, iters, 0.0, grad, name, msg)
        if cand.status == LOCAL_OPTIMAL:
            fallback = cand
            break
        if fallback is None or _better(cand, fallback):
            fallback = cand
    fallback.iterations = total_iter
    fallback.time = time.perf_counter() - t0
    return fallback


def upper_bound_select(results) -> LocalSolveResult:
    """Feasible result with the smallest objective."""
    feas = [r for r in results if r.feasible and r.objective is not None]
    if not feas:
        raise NoFeasibleUpperBound(f"none of {len(results)} subproblem results is feasible")
    return min(feas, key=lambda r: r.objective)

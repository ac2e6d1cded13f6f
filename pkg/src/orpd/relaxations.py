"""Conic relaxations of optimal reactive power dispatch.

Four models are built over the lifted variables ``V = v v^H`` and, per
tap-changer branch ``l = (k, m)``, the block

    W_l = [[V_kk, W_kl, V_km], [W_kl, W_ll, W_lm], [V_km^*, W_lm^*, V_mm]]

that lifts ``(v_k, w_l = v_k / t_l, v_m)``:

* SDR1: ``V >= 0``, ``W_l >= 0`` and one-sided tap bounds
  ``W_kl >= V_kk / t_max``, ``W_ll <= V_kk / t_min^2``.
* TCR1: 3x3 corner blocks ``[[1, v^H], [v, V]] >= 0`` per line, 4x4 corner
  blocks per tap branch, a reference-bus cut and two-sided tap bounds.
* SDR2 / TCR2: as above with the tap bounds replaced by the convex-hull row
  ``V_kk + t_min t_max W_ll <= (t_min + t_max) W_kl``.

Shunt switching is linearized with ``xi_k = u_k V_kk``, ``0 <= xi_k <= V_kk``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import chordal
from .conic import (
    ConeProgram,
    Expr,
    HermitianBlock,
    HermitianVariable,
    embed_hermitian_psd,
    lincomb,
    quad_cost_epigraph,
)
from .errors import DegenerateTapRange, InfeasibleSeedPoint
from .network import Network, admittance_matrices


class Model(enum.Enum):
    SDR1 = "sdr1"
    TCR1 = "tcr1"
    SDR2 = "sdr2"
    TCR2 = "tcr2"

    @property
    def is_sdr(self) -> bool:
        return self in (Model.SDR1, Model.SDR2)

    @property
    def uses_hull(self) -> bool:
        return self in (Model.SDR2, Model.TCR2)


class Objective(enum.Enum):
    COST = "cost"
    LOSS = "loss"


@dataclass(frozen=True)
class RelaxationKind:
    model: Model
    objective: Objective = Objective.COST
    chordal: bool = False

    def __post_init__(self):
        if self.chordal and not self.model.is_sdr:
            raise ValueError("chordal decomposition applies to SDR models only")

    @property
    def label(self) -> str:
        return self.model.value + ("+chordal" if self.chordal else "")


@dataclass(frozen=True)
class BuildOptions:
    merge: chordal.MergeConfig = field(default_factory=chordal.MergeConfig)
    # keep the two-sided W_kl bounds in TCR2 as well (not part of the base model)
    tcr2_keep_wkl_bounds: bool = False


@dataclass
class TapVars:
    wll: Expr
    wkl: Expr
    wlm_re: Expr
    wlm_im: Expr


@dataclass
class LiftedVars:
    """Handles of every lifted quantity in a built program."""

    kind: RelaxationKind
    V: HermitianVariable
    W: dict[int, TapVars]
    xi: dict[int, Expr]
    pg: list[Expr]
    qg: list[Expr]
    flows: dict[int, tuple[Expr, Expr, Expr, Expr]]
    r: list[Expr | None]
    v: list[tuple[Expr, Expr]] | None = None
    w: dict[int, tuple[Expr, Expr]] | None = None
    cover: chordal.CliqueCover | None = None
    branch_pairs: tuple[tuple[int, int], ...] = ()

    def point_vector(self, point: "LiftedPoint", num_vars: int) -> np.ndarray:
        """Variable vector of this program at a rank-one lifted point."""
        x = np.zeros(num_vars)

        def put(e: Expr, val: float):
            if e.terms:
                (k,) = e.terms
                x[k] = val

        self.V.assign(x, point.V)
        for l, tv in self.W.items():
            put(tv.wll, point.wll[l])
            put(tv.wkl, point.wkl[l])
            put(tv.wlm_re, point.wlm[l].real)
            put(tv.wlm_im, point.wlm[l].imag)
        for k, e in self.xi.items():
            put(e, point.xi[k])
        for g, (ep, eq) in enumerate(zip(self.pg, self.qg)):
            put(ep, point.pg[g])
            put(eq, point.qg[g])
        for g, e in enumerate(self.r):
            if e is not None:
                put(e, point.r[g])
        if self.v is not None:
            for k, (re, im) in enumerate(self.v):
                put(re, point.v[k].real)
                put(im, point.v[k].imag)
        if self.w is not None:
            for l, (re, im) in self.w.items():
                put(re, point.w[l].real)
                put(im, point.w[l].imag)
        return x


def tap_envelope_rows(t_min: float, t_max: float, vkk: Expr, wkl: Expr, wll: Expr,
                      model: Model, keep_wkl_bounds: bool = False) -> list[Expr]:
    """Rows ``>= 0`` linking ``V_kk, W_kl, W_ll`` for a tap range ``[t_min, t_max]``."""
    if t_min == t_max:
        raise DegenerateTapRange(f"t_min = t_max = {t_min}")
    if not 0 < t_min < t_max:
        raise ValueError(f"invalid tap range [{t_min}, {t_max}]")
    if model.uses_hull:
        rows = [wkl * (t_min + t_max) - vkk - wll * (t_min * t_max)]
        if model is Model.TCR2 and keep_wkl_bounds:
            rows += [wkl - vkk / t_max, vkk / t_min - wkl]
        return rows
    if model is Model.SDR1:
        return [wkl - vkk / t_max, vkk / t_min**2 - wll]
    return [
        wkl - vkk / t_max,
        vkk / t_min - wkl,
        wll - vkk / t_max**2,
        vkk / t_min**2 - wll,
    ]


def _flow_exprs(y: complex, b_total: float, a: Expr, b_re: Expr, b_im: Expr, vmm: Expr):
    """(p_f, q_f, p_t, q_t) from ``A`` (from-side |.|^2) and ``B = (from) (to)^*``."""
    g, bs = y.real, y.imag
    half = b_total / 2
    pf = lincomb([(g, a), (-g, b_re), (-bs, b_im)])
    qf = lincomb([(-(bs + half), a), (-g, b_im), (bs, b_re)])
    pt = lincomb([(g, vmm), (-g, b_re), (bs, b_im)])
    qt = lincomb([(-(bs + half), vmm), (g, b_im), (bs, b_re)])
    return pf, qf, pt, qt


def build_relaxation(net: Network, kind: RelaxationKind,
                     options: BuildOptions | None = None) -> tuple[ConeProgram, LiftedVars]:
    opts = options or BuildOptions()
    model = kind.model
    prog = ConeProgram(f"{net.name}:{kind.label}:{kind.objective.value}")
    n = net.n_bus
    V = HermitianVariable(prog, n, "V")
    vkk = [V.re(k, k) for k in range(n)]

    pg = [prog.add_var(f"pg[{g.id}]") for g in net.generators]
    qg = [prog.add_var(f"qg[{g.id}]") for g in net.generators]
    xi = {s.bus: prog.add_var(f"xi[{s.bus}]") for s in net.shunts}

    W: dict[int, TapVars] = {}
    for l in net.tap_branches:
        W[l] = TapVars(
            wll=prog.add_var(f"Wll[{l}]"),
            wkl=prog.add_var(f"Wkl[{l}]"),
            wlm_re=prog.add_var(f"ReWlm[{l}]"),
            wlm_im=prog.add_var(f"ImWlm[{l}]"),
        )

    flows = {}
    for br in net.branches:
        k, m = br.from_bus, br.to_bus
        if br.has_tap:
            tv = W[br.id]
            a, b_re, b_im = tv.wll, tv.wlm_re, tv.wlm_im
        else:
            a = vkk[k]
            b_re, b_im = V.entry(k, m)
        flows[br.id] = _flow_exprs(br.series_admittance, br.shunt_susceptance_total,
                                   a, b_re, b_im, vkk[m])

    # power balance
    p_out: list[list] = [[] for _ in range(n)]
    q_out: list[list] = [[] for _ in range(n)]
    for br in net.branches:
        pf, qf, pt, qt = flows[br.id]
        p_out[br.from_bus] += [pf]
        q_out[br.from_bus] += [qf]
        p_out[br.to_bus] += [pt]
        q_out[br.to_bus] += [qt]
    shunts = net.shunt_by_bus
    p_rows, q_rows = [], []
    for bus in net.buses:
        k = bus.id
        gens = net.gens_by_bus.get(k, [])
        p = lincomb([(1.0, pg[g]) for g in gens], -bus.p_demand)
        q = lincomb([(1.0, qg[g]) for g in gens], -bus.q_demand)
        if k in shunts:
            p = p - xi[k] * shunts[k].g_shunt
            q = q + xi[k] * shunts[k].b_shunt
        p_rows.append(p - lincomb([(1.0, e) for e in p_out[k]]))
        q_rows.append(q - lincomb([(1.0, e) for e in q_out[k]]))
    prog.add_zero(p_rows, tag="balance_p")
    prog.add_zero(q_rows, tag="balance_q")

    if xi:
        rows = []
        for k, e in xi.items():
            rows += [e, vkk[k] - e]
        prog.add_nonneg(rows, tag="shunt_xi")

    # equal limits become equalities: a pair of opposite inequalities leaves
    # no strict interior, which stalls interior-point solvers
    gen_rows, gen_fixed = [], []
    for g, gen in enumerate(net.generators):
        for var, lo, hi in ((pg[g], gen.p_min, gen.p_max), (qg[g], gen.q_min, gen.q_max)):
            if lo == hi:
                gen_fixed.append(var - lo)
            else:
                gen_rows += [var - lo, hi - var]
    if gen_rows:
        prog.add_nonneg(gen_rows, tag="gen_limits")
    if gen_fixed:
        prog.add_zero(gen_fixed, tag="gen_fixed")

    for br in net.branches:
        if br.thermal_limit is None:
            continue
        pf, qf, pt, qt = flows[br.id]
        prog.add_soc([br.thermal_limit, pf, qf], tag=f"thermal_from[{br.id}]")
        prog.add_soc([br.thermal_limit, pt, qt], tag=f"thermal_to[{br.id}]")

    volt, volt_fixed = [], []
    for bus in net.buses:
        if bus.v_min == bus.v_max:
            volt_fixed.append(vkk[bus.id] - bus.v_min**2)
        else:
            volt += [vkk[bus.id] - bus.v_min**2, bus.v_max**2 - vkk[bus.id]]
    if volt:
        prog.add_nonneg(volt, tag="voltage")
    if volt_fixed:
        prog.add_zero(volt_fixed, tag="voltage_fixed")

    env_rows, fixed_rows = [], []
    for l in net.tap_branches:
        br = net.branches[l]
        tv = W[l]
        try:
            env_rows += tap_envelope_rows(br.tap.t_min, br.tap.t_max, vkk[br.from_bus],
                                          tv.wkl, tv.wll, model, opts.tcr2_keep_wkl_bounds)
        except DegenerateTapRange:
            t = br.tap.t_min
            fixed_rows += [tv.wkl - vkk[br.from_bus] / t, tv.wll - vkk[br.from_bus] / t**2]
    if env_rows:
        prog.add_nonneg(env_rows, tag="tap_envelope")
    if fixed_rows:
        prog.add_zero(fixed_rows, tag="tap_fixed")

    lifted = LiftedVars(kind=kind, V=V, W=W, xi=xi, pg=pg, qg=qg, flows=flows,
                        r=[None] * net.n_gen,
                        branch_pairs=tuple((br.from_bus, br.to_bus) for br in net.branches))
    if model.is_sdr:
        _sdr_psd(prog, net, lifted, kind, opts)
    else:
        _tcr_blocks(prog, net, lifted)

    if kind.objective is Objective.COST:
        obj = Expr()
        for g, gen in enumerate(net.generators):
            r, contrib = quad_cost_epigraph(prog, gen.cost_c2, gen.cost_c1, gen.cost_c0,
                                            pg[g], name=f"r[{g}]")
            lifted.r[g] = r
            obj = obj + contrib
    else:
        obj = lincomb([(net.base_mva, e) for e in pg])
    prog.minimize(obj)
    return prog, lifted


def _w_block(V: HermitianVariable, k: int, m: int, tv: TapVars) -> list[list]:
    """Entry table of W_l in the order (v_k, w_l, v_m)."""
    z = Expr()
    vkm = V.entry(m, k)  # lower-triangle entry (m, k) holds V_mk = conj(V_km)
    return [
        [V.entry(k, k)],
        [(tv.wkl, z), (tv.wll, z)],
        [vkm, (tv.wlm_re, -tv.wlm_im), V.entry(m, m)],
    ]


def _sdr_psd(prog, net, lifted: LiftedVars, kind: RelaxationKind, opts: BuildOptions):
    V = lifted.V
    if kind.chordal:
        cover = chordal.chordal_extension(chordal.build_graph(net), opts.merge)
        lifted.cover = cover
        for con in chordal.decompose_psd(V, cover):
            prog.add_constraint(con)
    else:
        prog.add_constraint(embed_hermitian_psd(V.full_block(), tag="V"))
    for l, tv in lifted.W.items():
        br = net.branches[l]
        tbl = _w_block(V, br.from_bus, br.to_bus, tv)
        block = HermitianBlock.from_entries(3, lambda i, j: tbl[i][j])
        prog.add_constraint(embed_hermitian_psd(block, tag=f"W[{l}]"))


def _tcr_blocks(prog, net, lifted: LiftedVars):
    V = lifted.V
    one, z = Expr(const=1.0), Expr()
    v = [(prog.add_var(f"Rev[{k}]"), prog.add_var(f"Imv[{k}]")) for k in range(net.n_bus)]
    w = {l: (prog.add_var(f"Rew[{l}]"), prog.add_var(f"Imw[{l}]")) for l in net.tap_branches}
    lifted.v, lifted.w = v, w
    covered = set()

    seen_pairs = set()
    for br in net.branches:
        if br.has_tap:
            continue
        k, m = br.from_bus, br.to_bus
        pair = (min(k, m), max(k, m))
        if pair in seen_pairs:
            continue
        seen_pairs.add(pair)
        tbl = [
            [(one, z)],
            [v[k], V.entry(k, k)],
            [v[m], V.entry(m, k), V.entry(m, m)],
        ]
        block = HermitianBlock.from_entries(3, lambda i, j: tbl[i][j])
        prog.add_constraint(embed_hermitian_psd(block, tag=f"corner[{k},{m}]"))
        covered.update(pair)

    for l, tv in lifted.W.items():
        br = net.branches[l]
        k, m = br.from_bus, br.to_bus
        inner = _w_block(V, k, m, tv)
        tbl = [
            [(one, z)],
            [v[k], *inner[0]],
            [w[l], *inner[1]],
            [v[m], *inner[2]],
        ]
        block = HermitianBlock.from_entries(4, lambda i, j: tbl[i][j])
        prog.add_constraint(embed_hermitian_psd(block, tag=f"corner_tap[{l}]"))
        covered.update((k, m))

    for k in range(net.n_bus):
        if k not in covered:
            tbl = [[(one, z)], [v[k], V.entry(k, k)]]
            block = HermitianBlock.from_entries(2, lambda i, j: tbl[i][j])
            prog.add_constraint(embed_hermitian_psd(block, tag=f"corner_bus[{k}]"))

    ref = net.reference_bus
    bus = net.buses[ref]
    lo, hi = bus.v_min, bus.v_max
    prog.add_nonneg([v[ref][0] - (V.re(ref, ref) + lo * hi) / (lo + hi)], tag="ref_cut")
    prog.add_zero([v[ref][1]], tag="ref_angle")


@dataclass
class LiftedPoint:
    """Rank-one lifting of an operating point with fixed discretes."""

    v: np.ndarray
    V: np.ndarray
    w: dict[int, complex]
    wll: dict[int, float]
    wkl: dict[int, float]
    wlm: dict[int, complex]
    xi: dict[int, float]
    pg: np.ndarray
    qg: np.ndarray
    r: np.ndarray


def seed_violations(net: Network, u: dict[int, float], t: dict[int, float], v: np.ndarray,
                    pg: np.ndarray, qg: np.ndarray) -> dict[str, float]:
    """Largest violation of each ORPD constraint family at a point (0 if satisfied)."""
    Ybus, Yf, Yt, _, _ = admittance_matrices(net, taps=t, shunt_on=u)
    s_inj = v * np.conj(Ybus @ v)
    sg = np.zeros(net.n_bus, dtype=complex)
    for g, gen in enumerate(net.generators):
        sg[gen.bus] += complex(pg[g], qg[g])
    sd = np.array([complex(b.p_demand, b.q_demand) for b in net.buses])
    mis = sg - sd - s_inj
    out = {"balance": float(np.abs(np.r_[mis.real, mis.imag]).max(initial=0.0))}
    vm = np.abs(v)
    vmin = np.array([b.v_min for b in net.buses])
    vmax = np.array([b.v_max for b in net.buses])
    out["voltage"] = float(np.maximum(np.maximum(vmin - vm, vm - vmax), 0).max(initial=0.0))
    gl = [0.0]
    for g, gen in enumerate(net.generators):
        gl += [gen.p_min - pg[g], pg[g] - gen.p_max, gen.q_min - qg[g], qg[g] - gen.q_max]
    out["generator"] = max(0.0, max(gl))
    sf = (Yf @ v).conj() * v[[b.from_bus for b in net.branches]]
    st = (Yt @ v).conj() * v[[b.to_bus for b in net.branches]]
    th = [0.0]
    for i, br in enumerate(net.branches):
        if br.thermal_limit is not None:
            th += [abs(sf[i]) - br.thermal_limit, abs(st[i]) - br.thermal_limit]
    out["thermal"] = max(0.0, max(th))
    dv = [0.0]
    for l in net.tap_branches:
        grid = net.branches[l].tap
        tl = t.get(l, 1.0)
        dv += [grid.t_min - tl, tl - grid.t_max]
    for s in net.shunts:
        uk = u.get(s.bus, 0.0)
        dv += [-uk, uk - 1.0]
    out["discrete"] = max(0.0, max(dv))
    return out


def feasibility_embed(net: Network, u: dict[int, float], t: dict[int, float], v: np.ndarray,
                      pg: np.ndarray, qg: np.ndarray, tol: float = 1e-6) -> LiftedPoint:
    """Rank-one lifting of a feasible point; rejects points violating ORPD by more than ``tol``.

    Voltages are rotated so the reference bus has zero angle.
    """
    v = np.asarray(v, dtype=complex)
    pg = np.asarray(pg, dtype=float)
    qg = np.asarray(qg, dtype=float)
    viol = seed_violations(net, u, t, v, pg, qg)
    bad = {k: x for k, x in viol.items() if x > tol}
    if bad:
        raise InfeasibleSeedPoint(
            "; ".join(f"{k} violated by {x:.3e}" for k, x in sorted(bad.items())))
    ref = net.reference_bus
    if abs(v[ref]) > 0:
        v = v * (abs(v[ref]) / v[ref])
    V = np.outer(v, v.conj())
    w, wll, wkl, wlm = {}, {}, {}, {}
    for l in net.tap_branches:
        br = net.branches[l]
        tl = t.get(l, 1.0)
        wl = v[br.from_bus] / tl
        w[l] = wl
        wll[l] = float(abs(wl) ** 2)
        wkl[l] = float((v[br.from_bus] * wl.conjugate()).real)
        wlm[l] = complex(wl * v[br.to_bus].conjugate())
    xi = {s.bus: u.get(s.bus, 0.0) * float(V[s.bus, s.bus].real) for s in net.shunts}
    r = np.array([gen.cost_c2 * pg[g] ** 2 for g, gen in enumerate(net.generators)])
    return LiftedPoint(v=v, V=V, w=w, wll=wll, wkl=wkl, wlm=wlm, xi=xi, pg=pg, qg=qg, r=r)

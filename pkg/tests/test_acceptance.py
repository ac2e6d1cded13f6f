"""Acceptance criteria, one test each.

Every test records a ``PASS``/``FAIL`` line (printed live and repeated in the
terminal summary) before asserting, so a failing criterion still reports the
numbers it was judged on.  Reference values are the published optima of the
bundled cases; tolerances are relative unless stated.
"""

import os
import time

import numpy as np
import pytest

from orpd.conic import (
    Expr,
    HermitianBlock,
    SolverOptions,
    embed_hermitian_psd,
    smat,
    solve,
)
from orpd.relaxations import (
    Model,
    Objective,
    RelaxationKind,
    build_relaxation,
    feasibility_embed,
    tap_envelope_rows,
)

from cached import MODELS, SMALL_CASES, cells, network, relaxation, report, round_off

VERDICTS: list[str] = []

SOLVER_TOL = 1e-8
REL_5BP = 5e-4  # 0.05 %

CASE14_COST = (8078.62, 8078.75)
CASE14_LOSS = 259.49
CASE30 = {"cost": 576.89, "loss": 191.09}
CASE30_NORMALIZED = {
    "cost": {"sdr1": 1.0, "sdr2": 1.0, "tcr1": 0.9993, "tcr2": 0.9993},
    "loss": {"sdr1": 1.0, "sdr2": 1.0, "tcr1": 0.9999, "tcr2": 0.9999},
}
IEEE30_COST = (8902.67, 8902.75)
CASE57_GAPS = {"sdr1": 0.05, "tcr1": 0.05, "sdr2": 0.02, "tcr2": 0.03}


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    VERDICTS.append(line)
    print(line)
    assert ok, line


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b)


def _gaps(cs: dict) -> str:
    return " ".join(f"{k}={c.gap_pct:.4f}%" for k, c in cs.items())


def test_case14_cost_bounds():
    cs = cells("case14", "cost")
    _, elapsed = report("case14", "cost")
    lo, up = cs["sdr2"].lower, cs["sdr2"].upper
    ok = (_rel(lo, CASE14_COST[0]) <= REL_5BP and _rel(up, CASE14_COST[1]) <= REL_5BP
          and all(c.gap_pct <= 0.05 for c in cs.values()) and elapsed < 30.0)
    verdict(1, ok, f"case14 cost sdr2 lower={lo:.4f} upper={up:.4f} {_gaps(cs)} "
                   f"time={elapsed:.1f}s")


def test_case14_loss_bounds():
    rep, _ = report("case14", "loss")
    cs = cells("case14", "loss")
    best = rep.best["case14/loss"]["lower"]
    ok = (_rel(best, CASE14_LOSS) <= REL_5BP
          and cs["sdr1"].gap_pct <= 0.01 and cs["sdr2"].gap_pct <= 0.01)
    verdict(2, ok, f"case14 loss best lower={best:.4f} {_gaps(cs)}")


def _structure(prog):
    return prog.dump().split("\n", 2)[2]


def test_case30_bounds_and_coinciding_kinds():
    net = network("case30")
    same = []
    for a, b in ((Model.SDR1, Model.SDR2), (Model.TCR1, Model.TCR2)):
        pa, _ = build_relaxation(net, RelaxationKind(a))
        pb, _ = build_relaxation(net, RelaxationKind(b))
        same.append(_structure(pa) == _structure(pb))
    # the reference pair is the best bound over kinds; each kind's own lower
    # bound is checked against its published normalized value
    worst, norm_ok = {}, True
    for obj, ref in CASE30.items():
        rep, _ = report("case30", obj)
        best = rep.best[f"case30/{obj}"]
        worst[obj] = max(_rel(best["lower"], ref), _rel(best["upper"], ref))
        for k, c in cells("case30", obj).items():
            norm_ok &= abs(c.normalized_lower - CASE30_NORMALIZED[obj][k]) <= 5e-4
    ok = all(same) and norm_ok and all(w <= REL_5BP for w in worst.values())
    verdict(3, ok, f"case30 best-bound rel dev cost={worst['cost']:.2e} loss={worst['loss']:.2e} "
                   f"per-kind normalized={norm_ok} "
                   f"identical programs sdr1/sdr2={same[0]} tcr1/tcr2={same[1]}")


def test_ieee30_cost_bounds():
    rep, _ = report("case_ieee30", "cost")
    best = rep.best["case_ieee30/cost"]
    ok = _rel(best["lower"], IEEE30_COST[0]) <= REL_5BP and _rel(best["upper"], IEEE30_COST[1]) <= REL_5BP
    verdict(4, ok, f"case_ieee30 cost lower={best['lower']:.4f} upper={best['upper']:.4f}")


def test_case57_cost_gaps():
    cs = cells("case57", "cost")
    ok = all(cs[k].gap_pct <= CASE57_GAPS[k] + 0.05 for k in MODELS)
    verdict(5, ok, f"case57 cost {_gaps(cs)}")


def test_case118_cost_gaps_and_time():
    cs = cells("case118", "cost")
    times = {k: c.volatile["cell_time"] for k, c in cs.items()}
    ok = cs["sdr2"].gap_pct <= 0.2 and cs["tcr1"].gap_pct <= 0.4 and max(times.values()) <= 60.0
    verdict(6, ok, f"case118 cost {_gaps(cs)} slowest kind {max(times.values()):.1f}s")


def test_bound_ordering():
    bad = []
    for case in SMALL_CASES:
        for obj in ("cost", "loss"):
            lb = {m: relaxation(case, m, obj)[2].objective for m in MODELS}
            for a, b in (("tcr1", "tcr2"), ("tcr2", "sdr2"), ("tcr1", "sdr1"), ("sdr1", "sdr2")):
                if lb[a] > lb[b] + 10 * SOLVER_TOL * max(1.0, abs(lb[b])):
                    bad.append(f"{case}/{obj} {a}={lb[a]:.6f} > {b}={lb[b]:.6f}")
    n = 2 * len(SMALL_CASES)
    verdict(7, not bad, f"ordering on {n} case/objective pairs"
                        + (": " + "; ".join(bad) if bad else " holds"))


def _hull_values(x, t, lo=0.9, hi=1.1):
    (row,) = tap_envelope_rows(lo, hi, Expr.var(0), Expr.var(1), Expr.var(2), Model.SDR2)
    c = [row.terms.get(k, 0.0) for k in range(3)]
    return c[0] * x + c[1] * x / t + c[2] * x / t**2 + row.const


def test_hull_oracle():
    rng = np.random.default_rng(2024)
    x = rng.uniform(0.81, 1.21, 10_000)
    t = rng.uniform(0.9, 1.1, 10_000)
    t[:50], t[50:100] = 0.9, 1.1  # both ends must be hit exactly
    val = _hull_values(x, t)
    at_end = (np.abs(t - 0.9) < 1e-12) | (np.abs(t - 1.1) < 1e-12)
    tight = np.abs(val) <= 1e-14
    outside_t = np.concatenate([rng.uniform(0.8, 0.9, 500), rng.uniform(1.1 + 1e-9, 1.2, 500)])
    outside = _hull_values(rng.uniform(0.81, 1.21, 1000), outside_t)
    ok = val.min() >= -1e-14 and np.array_equal(tight, at_end) and (outside < 0).any()
    verdict(8, ok, f"hull min={val.min():.2e} tight={tight.sum()} ends={at_end.sum()} "
                   f"cut outside={(outside < 0).sum()}/1000")


def test_chordal_matches_full_psd():
    worst, detail = 0.0, []
    for case in ("case14", "case30", "case57"):
        for m in (Model.SDR1, Model.SDR2):
            obj = []
            for chordal in (True, False):
                prog, _ = build_relaxation(network(case), RelaxationKind(m, Objective.COST, chordal))
                res = solve(prog, SolverOptions(tolerance=1e-9))
                obj.append(res.objective if res.ok else float("nan"))
            d = _rel(obj[0], obj[1])
            worst = max(worst, d) if d == d else float("inf")
            detail.append(f"{case}/{m.value}={d:.1e}")
    verdict(9, worst <= 1e-6, "chordal vs full " + " ".join(detail))


def test_hermitian_embedding_spectrum():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 7))
        a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        h = (a + a.conj().T) / 2
        block = HermitianBlock.from_entries(n, lambda i, j: (h[i, j].real, h[i, j].imag))
        con = embed_hermitian_psd(block)
        emb = smat(np.array([r.const for r in con.rows]), 2 * n)
        want = np.repeat(np.linalg.eigvalsh(h), 2)
        worst = max(worst, np.abs(np.linalg.eigvalsh(emb) - want).max())
    verdict(10, worst <= 1e-10, f"1000 random Hermitian matrices, worst eigenvalue error {worst:.1e}")


def test_rank_one_containment():
    worst, count = 0.0, 0
    for case in ("case14", "case_ieee30", "case57"):
        net = network(case)
        for obj in ("cost", "loss"):
            _, assignment, sub = round_off(case, "sdr2", obj)
            p = sub.point
            point = feasibility_embed(net, assignment.u_round, assignment.t_round, p.v, p.pg, p.qg)
            for m in Model:
                for chordal in ((False, True) if m.is_sdr else (False,)):
                    prog, lifted = build_relaxation(net, RelaxationKind(m, Objective(obj), chordal))
                    worst = max(worst, prog.max_violation(lifted.point_vector(point, prog.num_vars)))
                    count += 1
    verdict(11, worst <= 1e-8, f"{count} lifted ACOPF points, worst row residual {worst:.1e}")


@pytest.mark.skipif(not os.environ.get("ORPD_STRESS"), reason="set ORPD_STRESS=1 for the large-case run")
def test_large_case_stress():
    net = network("case300")
    times = {}
    for kind in (RelaxationKind(Model.TCR1), RelaxationKind(Model.SDR2, chordal=True)):
        prog, _ = build_relaxation(net, kind)
        start = time.perf_counter()
        res = solve(prog)
        times[kind.label] = time.perf_counter() - start
        assert res.ok, res.status
    # informational only: large cases are not targets
    print(f"INFO criterion 12: case300 cost solve times {times}")

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orpd import case_io as cio
from orpd.conic import Expr, solve
from orpd.errors import DegenerateTapRange, InfeasibleSeedPoint
from orpd.network import build_network
from orpd.relaxations import (
    BuildOptions,
    Model,
    Objective,
    RelaxationKind,
    build_relaxation,
    feasibility_embed,
    tap_envelope_rows,
)

from cached import network, relaxation

# three buses, lossless and unloaded: a line 1-2, a tap changer 2-3, a shunt at bus 2
TOY = """function mpc = toy
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t135\t1\t1.1\t0.9;
\t2\t1\t0\t0\t0\t10\t1\t1\t0\t135\t1\t1.1\t0.9;
\t3\t1\t0\t0\t0\t0\t1\t1\t0\t135\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t0\t0\t100\t-100\t1\t100\t1\t200\t0;
];
mpc.branch = [
\t1\t2\t0\t0.1\t0\t120\t0\t0\t0\t0\t1\t-360\t360;
\t2\t3\t0\t0.2\t0\t0\t0\t0\t1\t0\t1\t-360\t360;
];
mpc.gencost = [
\t2\t0\t0\t3\t0.01\t20\t0;
];
"""

ALL_MODELS = list(Model)


def _toy():
    return build_network(cio.parse_case(TOY))


def _value(rows, x=np.zeros(0)):
    return [r.value(x) for r in rows]


def _hull(x, z1, z2, lo=0.9, hi=1.1):
    (row,) = tap_envelope_rows(lo, hi, Expr(const=x), Expr(const=z1), Expr(const=z2), Model.SDR2)
    return row.value(np.zeros(0))


def test_hull_tight_at_upper_tap():
    assert _hull(1.0, 1 / 1.1, 1 / 1.21) == pytest.approx(0.0, abs=1e-15)


def test_hull_at_unit_tap():
    # 2.0 * 1 - (1 + 0.99 * 1)
    assert _hull(1.0, 1.0, 1.0) == pytest.approx(0.01, abs=1e-15)


def test_hull_cuts_taps_outside_the_box():
    assert _hull(1.0, 1 / 0.95, 1 / 0.95**2) > 1e-4
    assert _hull(1.0, 1 / 0.8, 1 / 0.64) < -1e-2


@settings(max_examples=500)
@given(st.floats(0.81, 1.21), st.floats(0.9, 1.1))
def test_hull_contains_the_lifted_set(x, t):
    val = _hull(x, x / t, x / t**2)
    # x (t - lo)(hi - t) / t^2 >= 0, zero only at the ends
    assert val == pytest.approx(x * (t - 0.9) * (1.1 - t) / t**2, abs=1e-13)
    assert val >= -1e-14


@pytest.mark.parametrize("model, count", [(Model.SDR1, 2), (Model.TCR1, 4),
                                          (Model.SDR2, 1), (Model.TCR2, 1)])
def test_envelope_row_counts(model, count):
    rows = tap_envelope_rows(0.9, 1.1, Expr.var(0), Expr.var(1), Expr.var(2), model)
    assert len(rows) == count


def test_two_sided_bounds_hold_inside_the_box():
    rows = tap_envelope_rows(0.9, 1.1, Expr(const=1.0), Expr(const=1 / 1.05),
                             Expr(const=1 / 1.05**2), Model.TCR1)
    assert min(_value(rows)) > 0


def test_tcr2_optional_bounds():
    rows = tap_envelope_rows(0.9, 1.1, Expr.var(0), Expr.var(1), Expr.var(2), Model.TCR2,
                             keep_wkl_bounds=True)
    assert len(rows) == 3


def test_degenerate_tap_range():
    with pytest.raises(DegenerateTapRange):
        tap_envelope_rows(1.0, 1.0, Expr.var(0), Expr.var(1), Expr.var(2), Model.SDR2)


def test_case30_has_no_tap_blocks():
    prog, lifted = build_relaxation(network("case30"), RelaxationKind(Model.SDR1))
    assert lifted.W == {}
    assert len(lifted.xi) == 2
    assert sum(n.startswith("xi[") for n in prog.var_names) == 2
    assert not any(n.startswith("W") for n in prog.var_names)


def _structure(prog):
    return prog.dump().split("\n", 2)[2]  # drop the header and the name line


def test_case30_kinds_coincide_structurally():
    net = network("case30")
    for a, b in ((Model.SDR1, Model.SDR2), (Model.TCR1, Model.TCR2)):
        pa, _ = build_relaxation(net, RelaxationKind(a))
        pb, _ = build_relaxation(net, RelaxationKind(b))
        assert _structure(pa) == _structure(pb)


def test_tcr_has_no_dense_matrix():
    net = network("case57")
    _, lifted = build_relaxation(net, RelaxationKind(Model.TCR1))
    pairs = {(min(b.from_bus, b.to_bus), max(b.from_bus, b.to_bus)) for b in net.branches}
    for k in range(net.n_bus):
        for m in range(k):
            assert lifted.V.has_entry(k, m) == ((m, k) in pairs)
    assert len(lifted.v) == net.n_bus and set(lifted.w) == set(net.tap_branches)


def test_chordal_flag_only_for_sdr():
    with pytest.raises(ValueError):
        RelaxationKind(Model.TCR1, chordal=True)


def test_parallel_lines_share_one_corner_block():
    net = network("case57")
    prog, _ = build_relaxation(net, RelaxationKind(Model.TCR1))
    tags = [c.tag for c in prog.constraints if c.tag.startswith("corner[")]
    assert len(tags) == len(set(tags))
    plain = {(min(b.from_bus, b.to_bus), max(b.from_bus, b.to_bus))
             for b in net.branches if not b.has_tap}
    assert len(tags) == len(plain)


def test_loss_objective_in_megawatts():
    net = _toy()
    prog, lifted = build_relaxation(net, RelaxationKind(Model.SDR2, Objective.LOSS))
    x = np.zeros(prog.num_vars)
    (k,) = lifted.pg[0].terms
    x[k] = 0.5
    assert prog.objective_value(x) == pytest.approx(50.0)


@pytest.mark.parametrize("model", ALL_MODELS)
@pytest.mark.parametrize("objective", list(Objective))
def test_flat_point_lifts_into_every_relaxation(model, objective):
    net = _toy()
    point = feasibility_embed(net, {1: 0.0}, {1: 1.0}, np.ones(3), np.zeros(1), np.zeros(1))
    prog, lifted = build_relaxation(net, RelaxationKind(model, objective))
    x = lifted.point_vector(point, prog.num_vars)
    assert prog.max_violation(x) <= 1e-12


def test_voltage_violation_rejected():
    net = _toy()
    v = np.array([1.0, 1.0, 1.2])
    with pytest.raises(InfeasibleSeedPoint, match="voltage"):
        feasibility_embed(net, {1: 0.0}, {1: 1.0}, v, np.zeros(1), np.zeros(1))


def test_embedding_rotates_reference_angle():
    net = _toy()
    v = np.exp(0.3j) * np.ones(3)
    point = feasibility_embed(net, {1: 0.0}, {1: 1.0}, v, np.zeros(1), np.zeros(1))
    np.testing.assert_allclose(point.v, np.ones(3), atol=1e-15)
    assert point.xi[1] == 0.0 and point.wkl[1] == pytest.approx(1.0)


def test_toy_relaxations_solve():
    net = _toy()
    for model in ALL_MODELS:
        prog, _ = build_relaxation(net, RelaxationKind(model))
        res = solve(prog)
        assert res.ok and res.objective == pytest.approx(0.0, abs=1e-6)


def test_case14_cost_bound():
    _, _, res = relaxation("case14", "sdr2")
    assert res.objective == pytest.approx(8078.62, rel=5e-4)


def test_case14_loss_bound_tcr2():
    _, _, res = relaxation("case14", "tcr2", "loss")
    assert res.objective == pytest.approx(259.49, rel=1e-4)


def test_extra_tcr2_bounds_only_tighten():
    net = network("case14")
    base = relaxation("case14", "tcr2")[2].objective
    prog, _ = build_relaxation(net, RelaxationKind(Model.TCR2),
                               BuildOptions(tcr2_keep_wkl_bounds=True))
    res = solve(prog)
    assert res.ok and res.objective >= base - 1e-6 * abs(base)

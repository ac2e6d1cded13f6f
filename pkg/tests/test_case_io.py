import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orpd import case_io as cio
from orpd.errors import MalformedRow, MissingMatrix, NonNumericEntry

TINY = """function mpc = tiny
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t135\t1\t1.1\t0.9;
\t2\t1\t50\t10\t0\t5\t1\t1\t0\t135\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t0\t0\t100\t-100\t1\t100\t1\t200\t0;
];
mpc.branch = [
\t1\t2\t0.01\t0.1\t0.02\t0\t0\t0\t0\t0\t1\t-360\t360;
];
mpc.gencost = [
\t2\t0\t0\t3\t0.01\t20\t0;
];
"""


def _case(text=TINY):
    return cio.parse_case(text)


def test_case14_dimensions():
    raw = cio.read_case("case14")
    assert raw.bus.shape[0] == 14
    assert raw.branch.shape[0] == 20
    assert raw.gen.shape[0] == 5
    assert raw.base_mva == 100.0


def test_case30_dimensions():
    raw = cio.read_case("case30")
    assert raw.bus.shape[0] == 30
    assert raw.branch.shape[0] == 41


def test_missing_gen_matrix():
    with pytest.raises(MissingMatrix) as exc:
        cio.parse_case("mpc.baseMVA = 100;\nmpc.bus = [];\n")
    assert exc.value.name == "gen"


def test_missing_base():
    with pytest.raises(MissingMatrix):
        cio.parse_case(TINY.replace("mpc.baseMVA = 100;", ""))


def test_short_row_is_malformed():
    text = TINY.replace("\t1\t0\t0\t100\t-100\t1\t100\t1\t200\t0;", "\t1\t0\t0\t100;")
    with pytest.raises(MalformedRow) as exc:
        _case(text)
    assert exc.value.matrix == "gen"


def test_non_numeric_entry_location():
    text = TINY.replace("0.01\t0.1", "0.01\tabc")
    with pytest.raises(NonNumericEntry) as exc:
        _case(text)
    assert (exc.value.matrix, exc.value.line, exc.value.col) == ("branch", 11, 4)


def test_bus_ids_are_kept():
    raw = _case(TINY.replace("\t2\t1\t50", "\t7\t1\t50").replace("\t1\t2\t0.01", "\t1\t7\t0.01"))
    assert list(raw.bus[:, cio.BUS_I]) == [1, 7]


def test_short_branch_rows_get_angle_limits():
    text = TINY.replace("\t0\t0\t1\t-360\t360;", "\t0\t0\t1;")
    raw = _case(text)
    assert raw.branch.shape == (1, 13)
    assert list(raw.branch[0, 11:]) == [-360.0, 360.0]


def test_case14_validates_clean():
    assert cio.validate_case(cio.read_case("case14")) == []


def test_unknown_branch_endpoint():
    raw = _case()
    raw.branch[0, cio.T_BUS] = 99
    diags = cio.validate_case(raw)
    assert [d.code for d in diags] == ["UnknownBus"]


def test_inverted_voltage_bound():
    raw = _case()
    raw.bus[1, cio.VMIN], raw.bus[1, cio.VMAX] = 1.1, 0.9
    diags = cio.validate_case(raw)
    assert [d.code for d in diags] == ["InvertedBound"]


def test_duplicate_bus_and_inverted_gen_limits():
    raw = _case()
    raw.bus[1, cio.BUS_I] = 1
    raw.gen[0, cio.PMIN] = 300
    codes = sorted(d.code for d in cio.validate_case(raw))
    assert "DuplicateBus" in codes and "InvertedBound" in codes


def test_negative_resistance_is_a_warning():
    raw = _case()
    raw.branch[0, cio.BR_R] = -0.01
    (d,) = cio.validate_case(raw)
    assert (d.code, d.severity) == ("NegativeResistance", "warning")
    assert cio.errors_only([d]) == []


def test_out_of_service_elements_are_reported():
    raw = _case()
    raw.branch[0, cio.BR_STATUS] = 0
    raw.gen[0, cio.GEN_STATUS] = 0
    diags = cio.validate_case(raw)
    assert {d.code for d in diags} == {"OutOfService"}
    assert all(d.severity == "info" for d in diags)


def test_piecewise_cost_rejected():
    raw = _case()
    raw.gencost[0, cio.MODEL] = 1
    assert [d.code for d in cio.validate_case(raw)] == ["UnsupportedCost"]


def test_cubic_cost_rejected():
    raw = _case(TINY.replace("\t2\t0\t0\t3\t0.01\t20\t0;", "\t2\t0\t0\t4\t1\t0.01\t20\t0;"))
    assert [d.code for d in cio.validate_case(raw)] == ["UnsupportedCost"]


def test_phase_shift_flagged():
    raw = _case()
    raw.branch[0, cio.SHIFT] = -5
    assert [d.code for d in cio.validate_case(raw)] == ["PhaseShift"]


def test_percent_inside_quoted_string():
    text = TINY.replace("function mpc = tiny", "function mpc = tiny\nmpc.note = '50% load';")
    assert _case(text).bus.shape == (2, 13)


def _assert_same(a: cio.RawCase, b: cio.RawCase):
    assert a.base_mva == b.base_mva
    for name in ("bus", "gen", "branch", "gencost"):
        x, y = getattr(a, name), getattr(b, name)
        if x is None:
            assert y is None
            continue
        assert x.shape == y.shape
        np.testing.assert_allclose(y, x, rtol=1e-12, atol=0)


@pytest.mark.parametrize("case", ["case14", "case30", "case57", "case118"])
def test_bundled_round_trip(case):
    raw = cio.read_case(case)
    _assert_same(raw, cio.parse_case(cio.format_case(raw)))


finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)


@st.composite
def raw_cases(draw):
    nb = draw(st.integers(1, 5))
    ng = draw(st.integers(1, 3))
    nl = draw(st.integers(1, 6))

    def mat(rows, cols):
        return np.array(draw(st.lists(st.lists(finite, min_size=cols, max_size=cols),
                                      min_size=rows, max_size=rows)))
    gencost = draw(st.one_of(st.none(), st.just(ng)))
    return cio.RawCase(
        base_mva=draw(st.floats(1, 1e4)),
        bus=mat(nb, 13), gen=mat(ng, 10), branch=mat(nl, 13),
        gencost=mat(gencost, 7) if gencost else None,
    )


@settings(max_examples=60, deadline=None)
@given(raw_cases())
def test_round_trip_property(raw):
    _assert_same(raw, cio.parse_case(cio.format_case(raw)))


@settings(max_examples=60, deadline=None)
@given(st.randoms(use_true_random=False))
def test_layout_insensitivity(rnd):
    """Random spacing, comments and continuations inside matrices leave the values alone."""
    base = cio.read_case("case14")
    out = []
    inside = False
    for line in cio.format_case(base).splitlines():
        if line.endswith("= ["):
            inside = True
        elif line == "];":
            inside = False
        elif inside:
            toks = line.strip().rstrip(";").split("\t")
            seps = [rnd.choice([" ", "\t", "  ", " \t ", ", "]) for _ in toks[1:]]
            if len(toks) > 2 and rnd.random() < 0.3:
                seps[rnd.randrange(len(seps))] = " ...  % continued\n\t"
            line = rnd.choice(["", " ", "\t\t"]) + toks[0]
            line += "".join(s + t for s, t in zip(seps, toks[1:])) + rnd.choice([";", " ;", ";  "])
            if rnd.random() < 0.3:
                line += " % " + rnd.choice(["note", "50%", "x;y"])
            if rnd.random() < 0.1:
                out.append("% a full-line comment")
        out.append(line)
    _assert_same(base, cio.parse_case("\n".join(out)))

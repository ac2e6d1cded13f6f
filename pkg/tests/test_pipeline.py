import csv
import io
import json

import pytest

from orpd import pipeline
from orpd.cli import main
from orpd.conic import SolverResult
from orpd.errors import ConfigError
from orpd.pipeline import (
    CSV_COLUMNS,
    SCHEMA,
    RunConfig,
    format_report,
    load_report,
    run_pipeline,
    stable_json,
)

from cached import report


def test_config_normalizes_shorthands():
    cfg = RunConfig(cases="case14", kinds="all", objectives="both")
    assert cfg.cases == ["case14"]
    assert cfg.kinds == ["sdr1", "tcr1", "sdr2", "tcr2"]
    assert cfg.objectives == ["cost", "loss"]


@pytest.mark.parametrize("kwargs", [
    dict(cases=[]),
    dict(cases=["case14"], kinds=[]),
    dict(cases=["case14"], kinds=["sdr3"]),
    dict(cases=["case14"], objectives=["voltage"]),
    dict(cases=["case14"], format="xlsx"),
    dict(cases=["case14"], tolerance=0.0),
])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        RunConfig(**kwargs).validate()


def test_config_from_mapping_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown config keys"):
        RunConfig.from_mapping({"cases": ["case14"], "colour": "red"})
    with pytest.raises(ConfigError):
        RunConfig.from_mapping({"kinds": ["sdr1"]})


def test_config_files(tmp_path):
    y = tmp_path / "run.yaml"
    y.write_text("cases: [case14]\nkinds: [tcr1, sdr2]\nobjectives: both\nchordal: true\n")
    cfg = RunConfig.from_file(y)
    assert cfg.kinds == ["tcr1", "sdr2"] and cfg.objectives == ["cost", "loss"] and cfg.chordal
    j = tmp_path / "run.json"
    j.write_text(json.dumps({"cases": ["case30"], "tolerance": 1e-7}))
    assert RunConfig.from_file(j).tolerance == 1e-7
    with pytest.raises(ConfigError):
        RunConfig.from_file(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("- just\n- a list\n")
    with pytest.raises(ConfigError):
        RunConfig.from_file(bad)


def test_missing_case_is_fatal():
    with pytest.raises(ConfigError, match="not found"):
        run_pipeline(RunConfig(cases=["no_such_case"]))


def test_unusable_case_is_fatal():
    with pytest.raises(ConfigError, match="unusable"):
        run_pipeline(RunConfig(cases=["case89pegase"]))


def test_case14_report_structure():
    rep, _ = report("case14", "cost")
    d = json.loads(format_report(rep, "json"))
    assert d["schema"] == SCHEMA == "orpd-report/1"
    assert [c["kind"] for c in d["cells"]] == ["sdr1+chordal", "tcr1", "sdr2+chordal", "tcr2"]
    for c in rep.cells:
        assert not c.failed
        assert c.gap_pct == pytest.approx(100 * (1 - c.lower / c.upper), abs=1e-12)
        assert c.normalized_lower <= 1 + 1e-6
        assert c.normalized_upper >= 1 - 1e-6
        assert set(c.volatile) >= {"solve_time", "subproblem_time", "relaxation_iterations"}
        assert c.assignment["u_round"] and c.assignment["t_round"]


def test_markdown_shows_unit_normalized_values():
    rep, _ = report("case14", "cost")
    md = format_report(rep, "md")
    (row,) = [l for l in md.splitlines() if l.startswith("| case14 | 8078")]
    cells = [c.strip() for c in row.strip("|").split("|")]
    assert cells[3:7] == ["1.0000"] * 4
    assert "### Optimality gaps" in md


def test_csv_columns():
    rep, _ = report("case14", "cost")
    rows = list(csv.reader(io.StringIO(format_report(rep, "csv"))))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 5
    gap = rows[1][CSV_COLUMNS.index("gap_pct")]
    assert gap == "0.00"


def test_json_round_trip():
    rep, _ = report("case14", "cost")
    text = format_report(rep, "json")
    again = load_report(text)
    assert again == rep
    assert format_report(again, "json") == text


def test_reruns_are_byte_identical():
    cfg = RunConfig(cases=["case14"], kinds=["tcr1", "tcr2"], objectives=["loss"], seed=3)
    a, b = run_pipeline(cfg), run_pipeline(cfg)
    assert stable_json(a) == stable_json(b)
    assert "volatile" not in stable_json(a)


def test_parallel_workers_match_serial():
    serial = RunConfig(cases=["case14"], kinds=["tcr1", "tcr2"])
    parallel = RunConfig(cases=["case14"], kinds=["tcr1", "tcr2"], workers=2)
    a, b = run_pipeline(serial), run_pipeline(parallel)
    assert [c.lower for c in a.cells] == [c.lower for c in b.cells]
    assert stable_json(a) == stable_json(b)


def test_failed_cell_leaves_others_intact(monkeypatch):
    real = pipeline.solve

    def flaky(prog, opts):
        if ":sdr2" in prog.name:
            return SolverResult("NumericalFailure", None, None, None, 0.0, 7, "InsufficientProgress")
        return real(prog, opts)

    monkeypatch.setattr(pipeline, "solve", flaky)
    rep = run_pipeline(RunConfig(cases=["case14"], kinds=["sdr1", "sdr2", "tcr2"]))
    cells = {c.kind: c for c in rep.cells}
    bad = cells["sdr2"]
    assert bad.failed and bad.lower is None and "NumericalFailure" in bad.reason
    assert not cells["sdr1"].failed and not cells["tcr2"].failed
    # the best bound comes from the kinds that did solve
    assert rep.best["case14/cost"]["lower"] == max(cells["sdr1"].lower, cells["tcr2"].lower)
    assert rep.averages["cost"]["sdr2"]["cells"] == 0
    assert rep.averages["cost"]["sdr2"]["normalized_lower"] is None
    assert " -- " in format_report(rep, "md")


def test_time_limit_marks_cell_failed():
    rep = run_pipeline(RunConfig(cases=["case14"], kinds=["tcr1"], time_limit=1e-3))
    (cell,) = rep.cells
    assert cell.failed and "time limit" in cell.reason


def test_cli_solve_writes_csv(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code = main(["solve", "--case", "case14", "--kind", "tcr2", "--objective", "loss",
                 "--format", "csv", "--out", str(out)])
    assert code == 0
    rows = list(csv.reader(out.open()))
    assert rows[1][:3] == ["case14", "loss", "tcr2"]
    assert "1 cells, 0 failed" in capsys.readouterr().err


def test_cli_solve_to_stdout(capsys):
    assert main(["solve", "--case", "case14", "--kind", "tcr1", "--format", "json"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["cells"][0]["kind"] == "tcr1"


def test_cli_bench(tmp_path):
    cfg = tmp_path / "bench.yaml"
    cfg.write_text("cases: [case14]\nkinds: [sdr2]\nchordal: true\nformat: md\n")
    out = tmp_path / "bench.md"
    assert main(["bench", "--config", str(cfg), "--out", str(out)]) == 0
    assert "sdr2+chordal" in out.read_text()


def test_cli_fatal_errors(tmp_path):
    assert main(["solve", "--case", str(tmp_path / "nope.m")]) == 2
    assert main(["bench", "--config", str(tmp_path / "nope.yaml")]) == 2
    bad_out = tmp_path / "missing_dir" / "r.json"
    assert main(["solve", "--case", "case14", "--kind", "tcr1", "--out", str(bad_out)]) == 2


def test_cli_rejects_unknown_kind():
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--case", "case14", "--kind", "qc"])
    assert exc.value.code == 2

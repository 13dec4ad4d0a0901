import csv
import json
from importlib import resources

import pytest

from passloc.cli import EXIT_CONFIG, EXIT_IO, build_parser, main

DEFAULT = str(resources.files("passloc") / "data" / "paper_default.json")


def _rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def test_bcrb_lists_every_node(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["bcrb", "--scenario", DEFAULT, "-o", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 8
    assert [r["node_kind"] for r in rows] == ["target"] * 3 + ["receiver"] * 5
    assert float(rows[0]["bcrb_m2"]) == pytest.approx(3.7207574997063286)


def test_estimate_writes_estimates_and_trace(tmp_path):
    out = tmp_path / "est.csv"
    argv = ["estimate", "--algo", "parametric", "--bp-iters", "40", "--scenario", DEFAULT,
            "--seed", "7", "-o", str(out)]
    assert main(argv) == 0
    rows = _rows(out)
    assert len(rows) == 8 and set(rows[0]) >= {"node_kind", "node_id", "x", "y", "sq_error"}
    trace = tmp_path / "est_trace.csv"
    assert trace.exists() and len(_rows(trace)) == 41 * 8 * 2


def test_simulate_then_estimate(tmp_path):
    meas = tmp_path / "m.json"
    assert main(["simulate", "--seed", "4", "--format", "json", "-o", str(meas)]) == 0
    from_file, direct = tmp_path / "e1.csv", tmp_path / "e2.csv"
    assert main(["estimate", "--measurements", str(meas), "-o", str(from_file)]) == 0
    assert main(["estimate", "--seed", "4", "-o", str(direct)]) == 0
    assert _rows(from_file) == _rows(direct)
    echo = json.loads(from_file.read_text().splitlines()[0][2:])
    assert echo["config"]["measurements"] == str(meas)


def test_config_echo_reproduces_output(tmp_path):
    first = tmp_path / "a.json"
    argv = ["estimate", "--algo", "sample", "--particles", "30", "--bp-iters", "3", "--seed", "2",
            "--format", "json", "-o", str(first)]
    assert main(argv) == 0
    second = tmp_path / "b.json"
    assert main(["estimate", "--config", str(first), "--format", "json", "-o", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()
    assert (tmp_path / "a_trace.csv").read_bytes() == (tmp_path / "b_trace.csv").read_bytes()


def test_csv_header_works_as_config(tmp_path):
    first = tmp_path / "a.csv"
    assert main(["estimate", "--seed", "9", "-o", str(first)]) == 0
    second = tmp_path / "b.csv"
    assert main(["estimate", "--config", str(first), "-o", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_explicit_flag_beats_config(tmp_path):
    first = tmp_path / "a.csv"
    assert main(["estimate", "--seed", "9", "-o", str(first)]) == 0
    second = tmp_path / "b.csv"
    assert main(["estimate", "--config", str(first), "--seed", "10", "-o", str(second)]) == 0
    assert '"seed": 10' in second.read_text().splitlines()[0]


def test_unknown_flag_exits_2(capsys):
    assert main(["bcrb", "--no-such-flag"]) == EXIT_CONFIG == 2
    assert "--no-such-flag" in capsys.readouterr().err


def test_missing_scenario_file_exits_3(tmp_path, capsys):
    assert main(["bcrb", "--scenario", str(tmp_path / "nope.json")]) == EXIT_IO == 3
    assert "nope.json" in capsys.readouterr().err


def test_bad_scenario_key_is_named(tmp_path, capsys):
    doc = json.loads(open(DEFAULT).read())
    doc["recievers"] = doc.pop("receivers")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert main(["bcrb", "--scenario", str(bad)]) == 2
    assert "recievers" in capsys.readouterr().err


def test_bad_config_key_is_named(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"subcommand": "bcrb", "sead": 3}))
    assert main(["bcrb", "--config", str(cfg)]) == 2
    assert "sead" in capsys.readouterr().err


def test_sweep_requires_axis(capsys):
    assert main(["sweep", "--grid", "1,2"]) == 2
    assert "axis" in capsys.readouterr().err


def test_sweep_emits_bound_rows(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--axis", "prior_var", "--grid", "1,9", "--trials", "3", "-o", str(out)]) == 0
    rows = _rows(out)
    assert sum(r["metric"] == "bcrb" for r in rows) == 16


def test_reproduce_figure_6(tmp_path):
    out = tmp_path / "f6.csv"
    assert main(["reproduce-figure", "6", "--trials", "3", "-o", str(out), "--gnuplot", str(tmp_path)]) == 0
    metrics = {r["metric"] for r in _rows(out)}
    assert "parametric/rmse_iter@40" in metrics and "sample+pso/rmse_iter@40" in metrics
    assert (tmp_path / "fig6_parametric.dat").exists() and (tmp_path / "fig6_sample_pso.dat").exists()


def test_help_gives_units():
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices
    for name in ("estimate", "sweep"):
        text = sub[name].format_help()
        assert "(m^2)" in text and "(count)" in text
    for action in sub["estimate"]._actions:
        assert action.help, action.dest

import json

import pytest

from convmatch import cli
from convmatch.errors import ConfigError


def run(args, tmp_path, capsys):
    code = cli.main(["--out", str(tmp_path), *args])
    out = capsys.readouterr()
    return code, out


def summary(tmp_path):
    return json.loads((tmp_path / "summary.json").read_text())


def short(name, t_end, **sim):
    d = cli.load_json(name)
    d["sim"]["t_end_seconds"] = t_end
    d["sim"].update(sim)
    return d


def test_open_circuit_summary(tmp_path, capsys):
    code, _ = run(["simulate", "matching_open_circuit.json"], tmp_path, capsys)
    assert code == cli.EXIT_OK
    s = summary(tmp_path)
    assert s["final"]["frequency_hz"] == pytest.approx(50.0, abs=0.05)
    assert s["final"]["v_dc"] == pytest.approx(1000.0, abs=1.0)
    assert s["passivity"]["passed"]
    assert s["steady"] is not None


def test_bare_scenario_name(tmp_path, capsys):
    d = cli.load_json("matching_open_circuit")
    assert d["name"] == "matching_open_circuit"
    assert "matching_open_circuit.json" in cli.bundled_scenarios()


def test_droop_conformity(tmp_path, capsys):
    code, _ = run(["simulate", "droop_loadstep.json"], tmp_path, capsys)
    assert code == cli.EXIT_OK
    dc = summary(tmp_path)["droop_conformity"]
    assert dc["segments"] >= 2
    assert dc["frequency_residual"] < 0.01
    assert dc["amplitude_residual"] < 0.01


def test_malformed_json_reports_position(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "name": "x",\n  "sim": {,}\n}\n')
    code, out = run(["simulate", str(bad)], tmp_path, capsys)
    assert code == cli.EXIT_PARSE
    assert "line 3, column" in out.err


def test_missing_file(tmp_path, capsys):
    code, out = run(["simulate", str(tmp_path / "nope.json")], tmp_path, capsys)
    assert code == cli.EXIT_PARSE


@pytest.mark.parametrize("patch", [
    lambda d: d["converter"].update(c_dc_farads=-1.0),
    lambda d: d["converter"].update(c_dc=1e-3),
    lambda d: d["controller"].update(type="telepathy"),
    lambda d: d["load"].__setitem__(0, {"t_start_seconds": 0.1, "g_siemens": 0.0, "b_siemens": 0.0}),
])
def test_invalid_configuration(tmp_path, capsys, patch):
    d = short("matching_open_circuit.json", 0.001)
    patch(d)
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(d))
    code, out = run(["simulate", str(cfg)], tmp_path, capsys)
    assert code == cli.EXIT_INVALID
    assert "invalid configuration" in out.err


def test_divergence_keeps_partial_trace(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(short("matching_open_circuit.json", 0.5)))
    # RK4 is unstable for the LC filter at this step size
    code, out = run(["--dt", "1e-3", "simulate", str(cfg)], tmp_path, capsys)
    assert code == cli.EXIT_DIVERGED
    assert summary(tmp_path)["status"] == "diverged"
    assert (tmp_path / "trace.csv").stat().st_size > 0


def test_summary_recomputable_from_files(tmp_path, capsys):
    d = short("idc_pid_loadstep.json", 0.3)
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(d))
    assert run(["simulate", str(cfg)], tmp_path, capsys)[0] == cli.EXIT_OK
    s = summary(tmp_path)
    cols = cli.read_columns(tmp_path / "trace.csv")
    aux = cli.read_columns(tmp_path / "aux.csv")
    again = cli._clean(cli.summarize_columns(cli.parse_scenario(d), cols, aux))
    # CSV floats are written with repr, so the recomputation is exact
    for key in ("final", "passivity", "flags", "settle_time", "steady"):
        assert again[key] == s[key]


def test_runs_are_deterministic(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(short("droop_loadstep.json", 0.05)))
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["--out", str(a), "simulate", str(cfg)]) == 0
    assert cli.main(["--out", str(b), "simulate", str(cfg)]) == 0
    capsys.readouterr()
    assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()
    assert (a / "aux.csv").read_bytes() == (b / "aux.csv").read_bytes()


def test_network_scenario(tmp_path, capsys):
    d = cli.load_json("network_tree.json")
    d["sim"]["t_end_seconds"] = 0.2
    cfg = tmp_path / "n.json"
    cfg.write_text(json.dumps(d))
    code, _ = run(["simulate", str(cfg)], tmp_path, capsys)
    assert code == cli.EXIT_OK
    s = summary(tmp_path)
    assert s["topology"] == "tree"
    assert s["passivity"]["passed"]
    assert "inet_1to2_alpha" in (tmp_path / "trace.csv").read_text().splitlines()[0]


def test_resistive_sweep(tmp_path, capsys):
    d = cli.load_json("sweep_resistive.json")
    d["values"] = [0.05, 0.3, 2.0]
    d["template"]["sim"]["t_end_seconds"] = 0.3
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps(d))
    code, _ = run(["sweep", str(cfg)], tmp_path, capsys)
    assert code == cli.EXIT_OK
    rows = json.loads((tmp_path / "sweep.json").read_text())["rows"]
    assert len(rows) == 3
    for r in rows:
        assert r["p_x"] <= r["p_max_analytic"]
    settled = [r for r in rows if r["status"] == "settled"]
    assert settled
    for r in settled:
        assert r["amp_vx"] == pytest.approx(r["amp_vx_analytic"], rel=1e-3)
        assert r["v_dc"] == pytest.approx(r["eq_v_dc"], rel=1e-3)
    header = (tmp_path / "sweep.csv").read_text().splitlines()[0].split(",")
    assert header[0] == d["parameter"] and "amp_vx_analytic" in header


def test_reactive_sweep_overlays_characteristic(tmp_path):
    d = cli.load_json("sweep_reactive.json")
    d["values"] = [-0.03, 0.01]
    d["template"]["sim"]["t_end_seconds"] = 0.3
    rows = cli.run_sweep(cli.parse_sweep(d), tmp_path)
    for r in rows:
        assert r["b_analytic"] == pytest.approx(r["value"], rel=0.02)


def test_sweep_validation(tmp_path, capsys):
    d = cli.load_json("sweep_resistive.json")
    for bad in ([], ["x"], [float("inf")]):
        d["values"] = bad
        with pytest.raises(ConfigError):
            cli.parse_sweep(d)
    d["values"] = []
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps(d))
    assert run(["sweep", str(cfg)], tmp_path, capsys)[0] == cli.EXIT_INVALID
    d["values"] = [0.1]
    d["parameter"] = "load.7.g_siemens"
    with pytest.raises(ConfigError):
        cli.parse_sweep(d)


def test_set_path():
    d = {"a": [{"b": 1}]}
    assert cli.set_path(d, "a.0.b", 5) == {"a": [{"b": 5}]}
    assert d == {"a": [{"b": 1}]}
    with pytest.raises(ConfigError):
        cli.set_path(d, "a.x.b", 5)


@pytest.mark.parametrize("op,key,value", [
    ("max-power", "p_max", 25000.0),
    ("steady-state", "v_dc_ss", 1000.0),
    ("droop-coeffs", "d_vx", -606.06),
])
def test_analyze(tmp_path, capsys, op, key, value):
    code, out = run(["analyze", op], tmp_path, capsys)
    assert code == cli.EXIT_OK
    rec = json.loads(out.out)
    assert rec["result"][key] == pytest.approx(value, rel=1e-4)
    assert (tmp_path / f"analysis_{op}.json").is_file()


def test_analyze_lyapunov_and_manifold(capsys):
    assert cli.main(["analyze", "lyapunov", "--g", "0.3"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["result"]["holds"] == rec["result"]["negative_definite"]
    assert cli.main(["analyze", "manifold", "--g", "0.3"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["result"]["residual"] < 1e-9
    assert cli.main(["analyze", "steady-state", "--p-x", "30000"]) == cli.EXIT_INVALID


def test_flag_names():
    assert cli.flag_names(0) == []
    assert cli.flag_names(2 | 1) == ["modulation_saturated", "mu_clamped"]

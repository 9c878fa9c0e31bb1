import csv
import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from echolab.cli import RunConfig, main
from echolab.echo_analysis import fit_power_law
from echolab.errors import ConfigError

SMALL = {
    "trap": {"beta": 0.004},
    "grid": {"x_half_width": 16, "n_points": 256},
    "time": {"t_final": 2700},
    "pulses": [{"t": 0, "magnitude": 5}, {"t": 500, "magnitude": 0.05}],
    "analysis": {"n_max": 1},
}


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


# --- configuration ------------------------------------------------------------------------


def test_defaults_fill_every_field():
    cfg = RunConfig.from_dict({})
    assert cfg == RunConfig()
    assert cfg.to_dict()["pulses"] == [{"t": 0.0, "kind": "translate", "magnitude": 5.0}]


@pytest.mark.parametrize("bad", [
    {"trap": {"beta": 0.001, "zeta": 1}},
    {"grid": {"n_points": 300}},
    {"time": {"dt": -1}},
    {"pulses": [{"t": 0, "magnitude": 5, "kind": "rotate"}]},
    {"pulses": [{"t": 0, "magnitude": 5}, {"t": 0, "magnitude": 1}]},
    {"moments": []},
    {"extra": True},
])
def test_invalid_configs_rejected(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


finite = st.floats(0.0, 1.0, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(beta=st.floats(0.0, 0.01), u=finite, n=st.sampled_from([256, 512, 1024]), stride=st.integers(1, 50),
       d1=st.floats(0.0, 6.0), tau=st.floats(1.0, 100.0), d2=st.floats(-0.5, 0.5),
       kind=st.sampled_from(["translate", "squeeze"]), moments=st.lists(st.integers(1, 4), min_size=1, max_size=3, unique=True))
def test_run_config_round_trip(beta, u, n, stride, d1, tau, d2, kind, moments):
    data = {"trap": {"beta": beta, "u": u}, "grid": {"n_points": n}, "time": {"t_final": 200.0, "sample_stride": stride},
            "pulses": [{"t": 0.0, "magnitude": d1}, {"t": tau, "kind": kind, "magnitude": d2}], "moments": moments}
    cfg = RunConfig.from_dict(data)
    assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


# --- commands --------------------------------------------------------------------------------


def test_malformed_config_exits_2_without_output(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{not json")
    out = tmp_path / "out.csv"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 2
    assert not out.exists()
    assert main(["simulate", "--config", write_json(tmp_path / "k.json", {"trap": {"b": 1}}), "--out", str(out)]) == 2
    assert not out.exists()
    assert main(["simulate", "--preset", "fig99", "--out", str(out)]) == 2
    assert main(["simulate", "--out", str(out)]) == 2
    assert not out.exists()
    assert "invalid configuration" in capsys.readouterr().err


def test_simulate_harmonic_trap_and_record(tmp_path):
    data = {"trap": {"beta": 0.0}, "grid": {"n_points": 512}, "time": {"dt": 0.0005, "t_final": 50, "sample_stride": 200}}
    out = tmp_path / "h.csv"
    assert main(["simulate", "--config", write_json(tmp_path / "h.json", data), "--out", str(out)]) == 0
    header, rows = read_csv(out)
    assert header == ["t", "x1"]
    assert np.abs(rows[:, 1] - 5 * np.cos(rows[:, 0])).max() < 1e-5
    record = json.loads((tmp_path / "h.csv.json").read_text())
    assert RunConfig.from_dict(record["config"]) == RunConfig.from_dict(data)
    assert record["norm_drift"] < 1e-8
    assert record["markers"] == []  # beta = 0 has no revival


def test_csv_round_trips_doubles(tmp_path):
    data = {"trap": {"beta": 0.001}, "grid": {"n_points": 256, "x_half_width": 16}, "time": {"t_final": 5}, "moments": [1, 2, 3]}
    out = tmp_path / "s.csv"
    assert main(["simulate", "--config", write_json(tmp_path / "s.json", data), "--out", str(out)]) == 0
    from echolab.grid_solver import run_simulation

    ref = run_simulation(RunConfig.from_dict(data).simulation_config())
    header, rows = read_csv(out)
    assert header == ["t", "x1", "x2", "x3"]
    for i, p in enumerate((1, 2, 3), start=1):
        assert np.array_equal(rows[:, i], ref[p])


def test_solver_failure_exits_3(tmp_path, capsys):
    data = {"trap": {"beta": 0.0}, "grid": {"x_half_width": 12, "n_points": 256}, "time": {"t_final": 20},
            "pulses": [{"t": 0, "kind": "squeeze", "magnitude": 5.0}], "moments": [2]}
    out = tmp_path / "f.csv"
    assert main(["simulate", "--config", write_json(tmp_path / "f.json", data), "--out", str(out)]) == 3
    err = capsys.readouterr().err
    assert "BoundaryViolation" in err and "at t=" in err
    assert not out.exists()


def test_model_per_order_columns(tmp_path):
    out = tmp_path / "m.csv"
    assert main(["model", "--config", write_json(tmp_path / "m.json", SMALL), "--out", str(out)]) == 0
    header, rows = read_csv(out)
    assert header == ["t", "x1", "x1_order0", "x1_order1", "x1_order2"]
    assert np.allclose(rows[:, 1], rows[:, 2:].sum(axis=1), atol=1e-12)
    t, first = rows[:, 0], np.abs(rows[:, 3])
    tx = 2365.88
    assert np.all(first[t < 500] == 0.0)
    near_pre = first[np.abs(t - (tx - 500)) < 100].max()
    assert near_pre > 10 * first[(t > 1000) & (t < 1300)].max()
    record = json.loads((tmp_path / "m.csv.json").read_text())
    assert record["validity"]["ok"]
    assert {m["label"] for m in record["markers"]} >= {"pre m=1 n=1 j=1", "recurrence m=1 j=1"}


def test_model_without_second_kick_has_empty_corrections(tmp_path):
    data = dict(SMALL, pulses=[{"t": 0, "magnitude": 5}, {"t": 500, "magnitude": 0.0}])
    out = tmp_path / "z.csv"
    assert main(["model", "--config", write_json(tmp_path / "z.json", data), "--out", str(out)]) == 0
    _, rows = read_csv(out)
    assert np.all(rows[:, 3] == 0.0) and np.all(rows[:, 4] == 0.0)


def test_squeeze_model_is_silent_at_odd_echoes(tmp_path):
    out = tmp_path / "q.csv"
    assert main(["model", "--preset", "fig7", "--out", str(out)]) == 0
    _, rows = read_csv(out)
    t, resp = rows[:, 0], np.abs(rows[:, 3])
    tx, tau = 8625.01, 1299.0

    def peak(c):
        return resp[np.abs(t - c) < 150].max()

    assert peak(2 * tau) > 0.1 and peak(tx - 2 * tau) > 0.05
    # just after tau the residual oscillation still shifts slightly; there is no echo
    assert peak(tau + 150) < 0.05 * peak(2 * tau)
    assert peak(tx - tau) < 0.05 * peak(tx - 2 * tau)


def test_model_outside_validity_exits_4_but_writes(tmp_path):
    data = dict(SMALL, pulses=[{"t": 0, "magnitude": 5}, {"t": 500, "magnitude": 0.5}])
    out = tmp_path / "v.csv"
    assert main(["model", "--config", write_json(tmp_path / "v.json", data), "--out", str(out)]) == 4
    record = json.loads((tmp_path / "v.csv.json").read_text())
    assert not record["validity"]["ok"] and "expansion" in record["validity"]["flags"]
    assert out.exists()


def test_schedule_output(tmp_path, capsys):
    assert main(["schedule", "--preset", "fig2"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "label,kind,time,order"
    times = {row.split(",")[0]: float(row.split(",")[2]) for row in lines[1:]}
    assert round(times["echo n=2 j=1"]) == 2998
    assert round(times["pre m=1 n=1 j=1"]) == 7126
    assert round(times["pre m=1 n=2 j=1"]) == 5627
    out = tmp_path / "s.csv"
    assert main(["schedule", "--preset", "fig2", "--moment", "2", "--out", str(out)]) == 0
    assert "recurrence m=1 j=2" in out.read_text()


def test_scan_writes_fit_ready_csv(tmp_path):
    out = tmp_path / "fig5.csv"
    assert main(["scan", "--preset", "fig5", "--out", str(out), "--workers", "1"]) == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    d1 = np.array([float(r["d1"]) for r in rows])
    d2 = np.array([float(r["d2"]) for r in rows])
    amp = np.array([float(r["pre m=1 n=1 j=1:amplitude"]) for r in rows])
    assert fit_power_law(d1**2 * d2, amp).slope == pytest.approx(1.0, abs=0.1)
    assert json.loads((tmp_path / "fig5.csv.json").read_text())["spec"]["name"] == "fig5"


def test_scan_spec_file_and_bad_spec(tmp_path):
    spec = {"name": "tiny", "base": {"beta": 0.001, "d1": 5.0, "d2": 0.05, "tau": 1499.0},
            "axes": [["d2", [0.01, 0.02]]], "measurements": ["pre m=1 n=1 j=1"], "engine": "model"}
    out = tmp_path / "tiny.csv"
    assert main(["scan", "--config", write_json(tmp_path / "tiny.json", spec), "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 3
    bad = dict(spec, measurements=["echo n=9 j=1"])
    assert main(["scan", "--config", write_json(tmp_path / "bad.json", bad), "--out", str(out)]) == 2
    assert main(["scan", "--config", write_json(tmp_path / "bad2.json", dict(spec, colour=1)), "--out", str(out)]) == 2


def test_compare_profiles(tmp_path):
    cfg = write_json(tmp_path / "c.json", SMALL)
    out = tmp_path / "c.csv"
    assert main(["compare", "--config", cfg, "--out", str(out), "--tolerance-profile", "loose"]) == 0
    report = list(csv.DictReader(open(out)))
    assert {r["label"] for r in report} == {"recurrence m=1 j=1", "pre m=1 n=1 j=1"}
    assert all(r["pass"] == "pass" for r in report)
    assert json.loads((tmp_path / "c.csv.json").read_text())["passed"] is True
    assert main(["compare", "--config", cfg, "--out", str(out), "--tolerance-profile", "strict"]) == 5
    assert main(["compare", "--config", cfg, "--tolerance-profile", "nonsense"]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "echolab", "schedule", "--preset", "fig1"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert res.stdout.splitlines()[1].startswith("recurrence m=1 j=1,recurrence,8625.01")

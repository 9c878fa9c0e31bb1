import dataclasses
import json
import math

import numpy as np
import pytest

import echolab.scan_harness as sh
from echolab.echo_analysis import fit_power_law, measure_echo
from echolab.errors import ConfigError, UnknownPreset
from echolab.grid_solver import TimeSeries, run_simulation
from echolab.scan_harness import (
    PRESETS,
    Experiment,
    ScanSpec,
    SeriesCache,
    model_series,
    preset,
    run_scan,
    simulate,
    write_result,
)

# a strongly anharmonic, short protocol keeps numeric scans to a few seconds
SMALL = Experiment(beta=0.01, d1=5.0, d2=0.05, tau=200.0, t_final=1100.0, n_points=256, x_max=16.0)
ECHO = "echo n=2 j=1"
PRE = "pre m=1 n=1 j=1"


def small_spec(**kw):
    base = dict(name="small", base=SMALL, axes=(("d2", (0.02, 0.05)),), measurements=(ECHO, PRE),
                half_width=60.0, differential=True)
    base.update(kw)
    return ScanSpec(**base)


@pytest.fixture(scope="module")
def numeric_small():
    return run_scan(small_spec(), workers=1)


# --- experiments ------------------------------------------------------------------------


def test_experiment_pulses_and_reference():
    e = Experiment(d1=5.0, d2=0.05, tau=1499.0)
    assert [(p.time, p.kind, p.magnitude) for p in e.pulses()] == [(0.0, "translate", 5.0), (1499.0, "translate", 0.05)]
    ref = e.reference()
    assert ref.pulses()[1].magnitude == 0.0 and ref.kind == "shift"
    sq = Experiment(d1=5.0, alpha2=0.005, tau=1299.0)
    assert sq.kind == "squeeze" and sq.reference().kind == "squeeze"
    assert sq.reference().pulses()[1].kind == "squeeze"
    assert sq.mirrored().alpha2 == -0.005
    assert len(Experiment().pulses()) == 1
    with pytest.raises(ConfigError):
        Experiment(d2=0.1, alpha2=0.01, tau=10.0)
    with pytest.raises(ConfigError):
        Experiment(d2=0.1)


def test_model_series_orders_sum_to_total():
    e = Experiment(d1=5.0, d2=0.05, tau=1499.0, moments=(1, 2))
    t = np.arange(7000.0, 7200.0, 0.1)
    s = model_series(e, t, per_order=True)
    orders = s.metadata["orders"]
    assert np.allclose(s[1], orders["x1_order0"] + orders["x1_order1"] + orders["x1_order2"], atol=1e-12)
    assert np.allclose(s[2], orders["x2_order0"] + orders["x2_order1"], atol=1e-12)


def test_model_orders_have_definite_parity_in_second_kick():
    t = np.arange(6900.0, 7300.0, 0.5)
    plus = model_series(Experiment(d1=5.0, d2=0.05, tau=1499.0), t, per_order=True).metadata["orders"]
    minus = model_series(Experiment(d1=5.0, d2=-0.05, tau=1499.0), t, per_order=True).metadata["orders"]
    assert np.allclose(plus["x1_order1"], -minus["x1_order1"], atol=1e-14)
    assert np.allclose(plus["x1_order2"], minus["x1_order2"], atol=1e-14)


# --- numeric scans --------------------------------------------------------------------------


def test_single_point_matches_direct_pipeline(numeric_small):
    exp = dataclasses.replace(SMALL, d2=0.05)
    run = run_simulation(exp.simulation_config())
    ref = run_simulation(exp.reference().simulation_config())
    signal = TimeSeries(run.times, {1: run[1] - ref[1]})
    row = [r for r in numeric_small.rows if r.params["d2"] == 0.05][0]
    for label in (ECHO, PRE):
        entry = exp.schedule().find(label)
        direct = measure_echo(signal, 1, entry.nominal_time, 60.0, label)
        got = row.measurements[label]
        # batched FFTs differ from single-row ones only in the last bits
        assert got.t_peak == direct.t_peak
        assert got.amplitude == pytest.approx(direct.amplitude, rel=1e-10)
        assert got.baseline == pytest.approx(direct.baseline, rel=1e-8)


def test_linear_response_scales_with_second_kick(numeric_small):
    pre = numeric_small.column(PRE, d2=0.05)[0] / numeric_small.column(PRE, d2=0.02)[0]
    assert pre == pytest.approx(2.5, rel=0.05)


def test_byte_identical_results_across_runs_and_workers(tmp_path, numeric_small):
    spec = small_spec(engine="both", axes=(("tau", (200.0, 210.0)),))
    a = write_result(run_scan(spec, workers=1), tmp_path / "a.csv")
    b = write_result(run_scan(spec, workers=2), tmp_path / "b.csv")
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.csv.json").read_bytes() == (tmp_path / "b.csv.json").read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0].split(",")[:4] == ["index", "tau", "engine", "error"]
    assert len(lines) == 1 + 2 * 2
    sidecar = json.loads((tmp_path / "a.csv.json").read_text())
    assert ScanSpec.from_dict(sidecar["spec"]) == spec


def test_failed_points_become_error_rows():
    spec = small_spec(axes=(("d1", (5.0, 15.0)),))
    res = run_scan(spec, workers=1)
    ok, bad = res.rows
    assert ok.error is None and set(ok.measurements) == {ECHO, PRE}
    assert "BoundaryViolation" in bad.error and bad.measurements == {}
    assert math.isnan(res.column(PRE)[1])


def test_cache_round_trip(tmp_path, monkeypatch):
    cfg = dataclasses.replace(SMALL, tau=None, d2=0.0, t_final=50.0).simulation_config()
    cache = SeriesCache(tmp_path)
    (first, err), = simulate([cfg], cache=cache)
    assert err is None
    monkeypatch.setattr(sh, "run_batch", lambda configs: pytest.fail("cache miss"))
    (second, _), = simulate([cfg], cache=cache)
    assert np.array_equal(first.times, second.times)
    assert np.array_equal(first[1], second[1])
    assert second.norm_drift == first.norm_drift


def test_batches_are_independent_of_workers():
    cfgs = [dataclasses.replace(SMALL, d2=d, tau=t).simulation_config()
            for t in (200.0, 210.0) for d in np.linspace(0, 0.1, 10)]
    batches = sh._plan_batches(cfgs)
    assert [len(b) for b in batches] == [8, 2, 8, 2]
    assert all(len({sh._batch_key(c) for c in b}) == 1 for b in batches)


# --- specs and presets ----------------------------------------------------------------------


def test_spec_validation():
    with pytest.raises(ConfigError):
        small_spec(axes=(("d2", tuple(np.linspace(0.01, 0.05, 20))), ("d1", tuple(np.linspace(3, 5, 30)))))
    with pytest.raises(ConfigError):
        small_spec(measurements=("echo n=7 j=1",))
    with pytest.raises(ConfigError):
        small_spec(axes=(("gamma", (1.0,)),))
    with pytest.raises(ConfigError):
        small_spec(engine="analytic")
    with pytest.raises(ConfigError):
        small_spec(p=2)


def test_spec_dict_round_trip():
    for name in PRESETS:
        spec = preset(name)
        assert ScanSpec.from_dict(json.loads(json.dumps(spec.as_dict()))) == spec


def test_unknown_preset():
    with pytest.raises(UnknownPreset):
        preset("fig99")


def test_preset_parameters():
    fig2 = preset("fig2")
    assert (fig2.base.beta, fig2.base.d1, fig2.base.d2, fig2.base.tau) == (0.001, 5.0, 0.05, 1499.0)
    assert fig2.engine == "both"
    fig4 = preset("fig4")
    assert fig4.base.tau == 1899.0 and dict(fig4.axes)["d2"][0] == 0.001 and dict(fig4.axes)["d2"][-1] == 0.07
    fig6 = preset("fig6")
    axes = dict(fig6.axes)
    assert fig6.base.tau == 1699.0
    assert min(axes["d1"]) == 3.5 and max(axes["d1"]) == 6.0
    assert min(axes["d2"]) == 0.001 and max(axes["d2"]) == 0.07
    assert set(fig6.measurements) == {ECHO, "pre m=1 n=2 j=1"}
    gpe = preset("gpe_sweep")
    assert dict(gpe.axes)["u"] == (0.05, 0.10, 0.15, 0.20)
    assert gpe.base.tau == 2499.0
    assert preset("fig8").base.kind == "squeeze"


# --- model-engine scaling over the full grids -------------------------------------------------


def test_fig5_grid_scales_with_d1_squared_d2():
    res = run_scan(preset("fig5"), workers=1)
    d1, d2 = res.params("d1"), res.params("d2")
    fit = fit_power_law(d1**2 * d2, res.column(PRE))
    assert fit.slope == pytest.approx(1.0, abs=0.1)
    assert fit.r_squared > 0.99


def test_fig6_grid_scales_with_d1_cubed_d2_squared():
    res = run_scan(preset("fig6"), workers=1)
    d1, d2 = res.params("d1"), res.params("d2")
    for label in (ECHO, "pre m=1 n=2 j=1"):
        fit = fit_power_law(d1**3 * d2**2, res.column(label))
        assert fit.slope == pytest.approx(1.0, abs=0.15)


def test_order_isolation_removes_first_order_leakage():
    spec = dataclasses.replace(preset("fig6"), axes=(("d1", (3.5,)), ("d2", (0.001, 0.002, 0.005))))
    isolated = run_scan(spec, workers=1).column(ECHO)
    assert fit_power_law([0.001, 0.002, 0.005], isolated).slope == pytest.approx(2.0, abs=0.02)
    plain = run_scan(dataclasses.replace(spec, isolate_orders=False), workers=1).column(ECHO)
    assert fit_power_law([0.001, 0.002, 0.005], plain).slope < 1.5


def test_engines_agree_on_small_protocol():
    spec = small_spec(engine="both", axes=(("d2", (0.05,)),), isolate_orders=True,
                      base=dataclasses.replace(SMALL, beta=0.004, tau=500.0, t_final=2600.0))
    res = run_scan(spec, workers=1)
    num, mod = res.rows
    for label in (ECHO, PRE):
        assert num.measurements[label].amplitude == pytest.approx(mod.measurements[label].amplitude, rel=0.3), label

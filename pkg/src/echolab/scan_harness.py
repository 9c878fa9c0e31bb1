"""Parameter sweeps over the two-pulse protocol with persisted results.

A scan is a base :class:`Experiment`, a list of axes to vary and the schedule
labels to measure at each point.  Points are evaluated with the grid solver,
the spectral model, or both.  Numeric points that share their pulse timing are
propagated together through :func:`~echolab.grid_solver.run_batch`; the batch
layout depends only on the spec, so results do not depend on the worker count.

With ``differential=True`` the signal that is measured is the response to the
second pulse, i.e. the run minus the matching single-kick run.  This removes
the tail of the first-pulse recurrence that otherwise sits under small echoes.

``isolate_orders=True`` goes further and also runs the mirrored pulse
(``-d2`` or ``-alpha2``).  A window whose leading order in the second pulse is
odd is then measured on ``(x[+] - x[-])/2`` and an even one on
``(x[+] + x[-])/2 - x[0]``, so the slow first-order tail cannot mask a
second-order echo.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .echo_analysis import DEFAULT_HALF_WIDTH, build_schedule, measure_echo
from .errors import ConfigError, EcholabError, UnknownPreset
from .grid_solver import GridSpec, PulseEvent, SimulationConfig, TimeSeries, TrapConfig, run_batch
from .spectral_model import (
    SpectralModel,
    model_x_order0,
    model_x_order1,
    model_x_order2,
    model_x_squeeze,
    model_xp_order0,
    model_xp_order1,
    squeeze_valid,
)

__all__ = [
    "Experiment",
    "ScanSpec",
    "ScanRow",
    "ScanResult",
    "SeriesCache",
    "model_series",
    "simulate",
    "run_scan",
    "preset",
    "PRESETS",
    "write_result",
]

MAX_BATCH = 8
AXIS_NAMES = ("beta", "d1", "tau", "d2", "alpha2", "u", "n_points", "x_max", "dt")


@dataclass(frozen=True)
class Experiment:
    """Kick of ``d1`` at ``t = 0``, then (optionally) a translation ``d2`` or squeeze ``alpha2`` at ``tau``."""

    beta: float = 0.001
    d1: float = 5.0
    tau: float | None = None
    d2: float = 0.0
    alpha2: float = 0.0
    u: float = 0.0
    t_final: float = 9300.0
    x_max: float = 24.0
    n_points: int = 2048
    dt: float = 0.005
    stride: int = 20
    moments: tuple = (1,)
    kick2: str = "translate"

    def __post_init__(self):
        if self.kick2 not in ("translate", "squeeze"):
            raise ConfigError(f"unknown second pulse {self.kick2!r}")
        if self.alpha2 and self.kick2 != "squeeze":
            object.__setattr__(self, "kick2", "squeeze")
        if self.d2 and self.alpha2:
            raise ConfigError("an experiment has either a second translation or a squeeze, not both")
        if (self.d2 or self.alpha2) and self.tau is None:
            raise ConfigError("second pulse needs tau")

    @property
    def kind(self):
        return "squeeze" if self.kick2 == "squeeze" else "shift"

    @property
    def nbar(self):
        return self.d1**2 / 2.0

    def pulses(self):
        out = [PulseEvent(0.0, "translate", self.d1)]
        if self.tau is not None:
            if self.kind == "squeeze":
                out.append(PulseEvent(self.tau, "squeeze", self.alpha2))
            else:
                out.append(PulseEvent(self.tau, "translate", self.d2))
        return tuple(out)

    def simulation_config(self):
        return SimulationConfig(
            TrapConfig(self.beta, self.u),
            GridSpec(self.x_max, self.n_points),
            self.dt,
            self.t_final,
            self.stride,
            self.pulses(),
            tuple(self.moments),
        )

    def reference(self):
        """The same run without the second pulse (kept at ``tau`` with zero magnitude)."""
        return dataclasses.replace(self, d2=0.0, alpha2=0.0)

    def mirrored(self):
        return dataclasses.replace(self, d2=-self.d2, alpha2=-self.alpha2)

    def schedule(self, p=1, m_max=1, n_max=2):
        # shift labels cover every window, including the ones a squeeze should leave quiet
        return build_schedule(self.beta, self.nbar, self.tau, p, m_max, n_max)

    def spectral_model(self):
        tau = self.tau if self.tau is not None else math.inf
        return SpectralModel.create(self.beta, self.d1, self.d2, tau)

    def model_valid(self):
        model = self.spectral_model()
        if self.alpha2:
            return squeeze_valid(self.alpha2, model.state.nbar)
        return model.state.valid

    def as_dict(self):
        d = dataclasses.asdict(self)
        d["moments"] = list(self.moments)
        return d


def model_series(exp, times, per_order=False):
    """Spectral-model ``<x**p(t)>`` for every moment of ``exp`` on ``times``.

    With ``per_order`` the result also holds ``"x{p}_order{k}"`` columns.
    Shifts use orders 0, 1 and 2 for ``p = 1`` and orders 0 and 1 otherwise;
    a squeeze adds its first-order series to order 0 (``p = 1`` only).
    """
    times = np.asarray(times, dtype=float)
    model = exp.spectral_model()
    out = {}
    extra = {}
    for p in exp.moments:
        if exp.kind == "squeeze":
            if p != 1:
                raise ConfigError("the squeeze model is only available for <x>")
            base = SpectralModel(model.spectrum, dataclasses.replace(model.state, gamma2=0.0))
            orders = [model_x_order0(times, base), sum(model_x_squeeze(times, base, exp.alpha2))]
        elif p == 1:
            orders = [model_x_order0(times, model), sum(model_x_order1(times, model)),
                      sum(model_x_order2(times, model))]
        else:
            orders = [model_xp_order0(times, model, p), model_xp_order1(times, model, p).total()]
        out[p] = np.sum(orders, axis=0)
        for k, v in enumerate(orders):
            extra[f"x{p}_order{k}"] = np.asarray(v, dtype=float)
    meta = {"experiment": exp.as_dict(), "engine": "model"}
    if per_order:
        meta["orders"] = extra
    return TimeSeries(times, out, meta)


# --- numeric runs with an optional disk cache ------------------------------------------


def _solver_fingerprint():
    from . import grid_solver

    src = Path(grid_solver.__file__).read_bytes()
    return hashlib.sha256(src).hexdigest()[:16]


class SeriesCache:
    """Stores sampled moments of finished runs as ``.npz`` keyed by config and solver source."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._fingerprint = _solver_fingerprint()

    def _path(self, config):
        blob = json.dumps({"config": config.as_dict(), "solver": self._fingerprint}, sort_keys=True)
        return self.directory / (hashlib.sha256(blob.encode()).hexdigest()[:32] + ".npz")

    def get(self, config):
        path = self._path(config)
        if not path.exists():
            return None
        with np.load(path) as z:
            moments = {p: z[f"m{p}"] for p in config.moments}
            return TimeSeries(z["times"], moments, {"config": config.as_dict()}, None, float(z["drift"]))

    def put(self, config, series):
        path = self._path(config)
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, times=series.times, drift=series.norm_drift,
                 **{f"m{p}": series.moments[p] for p in config.moments})
        os.replace(tmp, path)


def _batch_key(config):
    return (config.grid, config.dt, config.n_steps, config.sample_stride, tuple(config.moments),
            tuple((p.time, p.kind) for p in config.pulses))


def _run_group(configs):
    """Run one batch; on failure fall back to single runs so errors stay per row."""
    try:
        return [(s, None) for s in run_batch(configs)]
    except EcholabError:
        pass
    out = []
    for c in configs:
        try:
            out.append((run_batch([c])[0], None))
        except EcholabError as exc:
            out.append((None, f"{type(exc).__name__}: {exc}"))
    return out


def _plan_batches(configs):
    groups = {}
    for c in configs:
        groups.setdefault(_batch_key(c), []).append(c)
    batches = []
    for members in groups.values():
        for i in range(0, len(members), MAX_BATCH):
            batches.append(members[i:i + MAX_BATCH])
    return batches


def _pool_map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def default_workers():
    env = os.environ.get("ECHOLAB_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"ECHOLAB_WORKERS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def simulate(configs, workers=1, cache=None):
    """Run many simulation configs; returns ``[(series or None, error or None)]`` in input order.

    Identical configs are computed once.  Batches are formed from the configs
    alone, so the numbers do not depend on ``workers``.
    """
    configs = list(configs)
    unique = list(dict.fromkeys(configs))
    done = {}
    todo = []
    for c in unique:
        hit = cache.get(c) if cache is not None else None
        if hit is not None:
            done[c] = (hit, None)
        else:
            todo.append(c)
    batches = _plan_batches(todo)
    for batch, results in zip(batches, _pool_map(_run_group, batches, workers)):
        for c, (series, err) in zip(batch, results):
            if series is not None and cache is not None:
                cache.put(c, series)
            done[c] = (series, err)
    return [done[c] for c in configs]


# --- scans ------------------------------------------------------------------------------


@dataclass(frozen=True)
class ScanSpec:
    name: str
    base: Experiment
    axes: tuple = ()
    measurements: tuple = ()
    engine: str = "numeric"
    half_width: float = DEFAULT_HALF_WIDTH
    differential: bool = False
    isolate_orders: bool = False
    p: int = 1
    m_max: int = 1
    n_max: int = 2
    cap: int = 512
    interacting_half_width: float | None = None
    notes: str = ""

    def __post_init__(self):
        if self.engine not in ("numeric", "model", "both"):
            raise ConfigError(f"unknown engine {self.engine!r}")
        names = [a for a, _ in self.axes]
        for a in names:
            if a not in AXIS_NAMES:
                raise ConfigError(f"unknown scan axis {a!r}")
        if len(set(names)) != len(names):
            raise ConfigError("duplicate scan axis")
        if self.n_points_total > self.cap:
            raise ConfigError(f"scan has {self.n_points_total} points, cap is {self.cap}")
        if self.p not in self.base.moments:
            raise ConfigError(f"moment {self.p} is not sampled by the base experiment")
        known = set(self.base.schedule(self.p, self.m_max, self.n_max).labels())
        missing = [m for m in self.measurements if m not in known]
        if missing:
            raise ConfigError(f"measurement labels not in the schedule: {missing}")

    @property
    def n_points_total(self):
        return math.prod(len(v) for _, v in self.axes) if self.axes else 1

    def points(self):
        names = [a for a, _ in self.axes]
        for values in itertools.product(*(v for _, v in self.axes)):
            yield dict(zip(names, values)), dataclasses.replace(self.base, **dict(zip(names, values)))

    def engines(self):
        return ("numeric", "model") if self.engine == "both" else (self.engine,)

    def variants(self, exp):
        """Runs needed per point: the point itself, then its mirror and reference as required."""
        out = [exp]
        if self.isolate_orders:
            out.append(exp.mirrored())
        if self.differential or self.isolate_orders:
            out.append(exp.reference())
        return out

    def half_width_for(self, exp):
        # interacting runs drift off the linear revival time, so their windows may be wider
        if exp.u > 0 and self.interacting_half_width is not None:
            return self.interacting_half_width
        return self.half_width

    def as_dict(self):
        return {
            "name": self.name,
            "base": self.base.as_dict(),
            "axes": [[a, list(v)] for a, v in self.axes],
            "measurements": list(self.measurements),
            "engine": self.engine,
            "half_width": self.half_width,
            "differential": self.differential,
            "isolate_orders": self.isolate_orders,
            "p": self.p,
            "m_max": self.m_max,
            "n_max": self.n_max,
            "cap": self.cap,
            "interacting_half_width": self.interacting_half_width,
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        base = dict(d.pop("base", {}))
        if "moments" in base:
            base["moments"] = tuple(base["moments"])
        axes = tuple((a, tuple(v)) for a, v in d.pop("axes", []))
        measurements = tuple(d.pop("measurements", ()))
        return cls(base=Experiment(**base), axes=axes, measurements=measurements, **d)


@dataclass
class ScanRow:
    index: int
    params: dict
    engine: str
    measurements: dict = field(default_factory=dict)
    error: str | None = None
    wall_time: float = 0.0


@dataclass
class ScanResult:
    spec: ScanSpec
    rows: list

    def column(self, label, attr="amplitude", engine=None, **where):
        """Values of ``attr`` for ``label`` over rows matching ``engine`` and the ``where`` filters."""
        out = []
        for r in self.rows:
            if engine is not None and r.engine != engine:
                continue
            if any(r.params.get(k) != v for k, v in where.items()):
                continue
            m = r.measurements.get(label)
            out.append(getattr(m, attr) if m is not None else math.nan)
        return np.array(out)

    def params(self, name, engine=None):
        return np.array([r.params[name] for r in self.rows if engine is None or r.engine == engine])


def _signal(spec, exp, entry, runs):
    """The series a window is measured on, built from the runs listed by :meth:`ScanSpec.variants`."""
    p = spec.p
    x = runs[0].moments[p]
    if spec.isolate_orders:
        odd = exp.kind == "squeeze" or entry.order_in_d2 % 2 == 1
        mirror, ref = runs[1].moments[p], runs[2].moments[p]
        x = 0.5 * (x - mirror) if odd else 0.5 * (x + mirror) - ref
    elif spec.differential:
        x = x - runs[1].moments[p]
    return TimeSeries(runs[0].times, {p: x})


def _entries(spec, exp):
    sched = exp.schedule(spec.p, spec.m_max, spec.n_max)
    out = []
    for label in spec.measurements:
        try:
            out.append(sched.find(label))
        except KeyError:
            raise ConfigError(f"label {label!r} not scheduled for {exp}") from None
    return out


def _measure(spec, exp, runs):
    hw = spec.half_width_for(exp)
    return {e.label: measure_echo(_signal(spec, exp, e, runs), spec.p, e.nominal_time, hw, e.label)
            for e in _entries(spec, exp)}


def _model_point(args):
    spec, exp = args
    start = time.perf_counter()
    hw = spec.half_width_for(exp)
    spacing = exp.dt * exp.stride
    out = {}
    for entry in _entries(spec, exp):
        c = entry.nominal_time
        lo = max(0.0, math.floor((c - 3 * hw) / spacing) * spacing)
        hi = math.ceil((c + 3 * hw) / spacing) * spacing
        t = np.arange(round(lo / spacing), round(hi / spacing) + 1) * spacing
        runs = [model_series(dataclasses.replace(v, moments=(spec.p,)), t) for v in spec.variants(exp)]
        out[entry.label] = measure_echo(_signal(spec, exp, entry, runs), spec.p, c, hw, entry.label)
    return out, time.perf_counter() - start


def run_scan(spec, workers=None, cache=None):
    """Evaluate every point of ``spec``; failures become rows with an ``error`` message."""
    workers = default_workers() if workers is None else max(1, int(workers))
    points = list(spec.points())
    rows = []
    for engine in spec.engines():
        if engine == "model":
            results = _pool_map(_model_point, [(spec, exp) for _, exp in points], workers)
            for i, ((params, exp), (meas, wall)) in enumerate(zip(points, results)):
                rows.append(ScanRow(i, params, "model", meas, None, wall))
            continue
        per_point = [[v.simulation_config() for v in spec.variants(exp)] for _, exp in points]
        start = time.perf_counter()
        done = iter(simulate([c for group in per_point for c in group], workers, cache))
        wall = (time.perf_counter() - start) / max(1, len(points))
        for i, ((params, exp), group) in enumerate(zip(points, per_point)):
            results = [next(done) for _ in group]
            errors = [e for _, e in results if e is not None]
            err = None
            if errors:
                err = errors[0] if results[0][1] is not None else f"companion run failed: {errors[0]}"
            meas = {}
            if err is None:
                try:
                    meas = _measure(spec, exp, [s for s, _ in results])
                except EcholabError as exc:
                    err = f"{type(exc).__name__}: {exc}"
            rows.append(ScanRow(i, params, "numeric", meas, err, wall))
    return ScanResult(spec, rows)


# --- persistence --------------------------------------------------------------------------


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def write_result(result, path):
    """Write ``path`` (CSV, one row per point and engine) and ``path.json`` with the spec.

    Columns: ``index``, the axis values, ``engine``, ``error``, then
    ``<label>:amplitude``, ``<label>:t_peak``, ``<label>:baseline`` per label.
    Wall time is kept out of both files so identical specs give identical bytes.
    """
    path = Path(path)
    spec = result.spec
    axes = [a for a, _ in spec.axes]
    header = ["index", *axes, "engine", "error"]
    for label in spec.measurements:
        header += [f"{label}:amplitude", f"{label}:t_peak", f"{label}:baseline"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in result.rows:
            line = [r.index, *(_fmt(float(r.params[a])) for a in axes), r.engine, r.error or ""]
            for label in spec.measurements:
                m = r.measurements.get(label)
                line += [_fmt(m.amplitude), _fmt(m.t_peak), _fmt(m.baseline)] if m else ["", "", ""]
            w.writerow(line)
    sidecar = {
        "spec": spec.as_dict(),
        "columns": header,
        "versions": {"echolab": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path


# --- presets --------------------------------------------------------------------------------

_D1_GRID = (3.5, 4.0, 4.5, 5.0, 5.5, 6.0)
_D2_GRID = (0.001, 0.002, 0.005, 0.01, 0.02, 0.035, 0.05, 0.07)
_PRE1 = "pre m=1 n=1 j=1"
_PRE2 = "pre m=1 n=2 j=1"
_ECHO2 = "echo n=2 j=1"
_REC = "recurrence m=1 j=1"


def _presets():
    fig2_base = Experiment(d1=5.0, d2=0.05, tau=1499.0, t_final=9600.0)
    return {
        "fig1": ScanSpec("fig1", Experiment(d1=5.0, t_final=9600.0), measurements=(_REC,),
                         engine="both", notes="single kick: collapse and revival"),
        "fig2": ScanSpec("fig2", fig2_base, measurements=(_REC, _PRE1, _PRE2, _ECHO2), engine="both"),
        "fig3": ScanSpec("fig3", Experiment(beta=0.002, d1=5.0, d2=0.1, tau=1200.0, t_final=9400.0),
                         measurements=("recurrence m=1 j=1", "recurrence m=2 j=1", _ECHO2, _PRE1,
                                       "pre m=2 n=1 j=1", "post m=1 n=1 j=1", _PRE2, "pre m=2 n=2 j=1"),
                         engine="both", m_max=2),
        "fig4": ScanSpec("fig4", Experiment(d1=5.0, d2=0.05, tau=1899.0, t_final=7200.0),
                         axes=(("d2", _D2_GRID),), measurements=(_PRE1, _ECHO2, _PRE2),
                         engine="numeric", differential=True, isolate_orders=True),
        "fig5": ScanSpec("fig5", Experiment(d1=5.0, d2=0.05, tau=2499.0, t_final=6800.0),
                         axes=(("d1", _D1_GRID), ("d2", _D2_GRID)), measurements=(_PRE1,),
                         engine="model", differential=True,
                         notes="tau follows the figure caption (2499); the surrounding text also mentions 1899"),
        "fig6": ScanSpec("fig6", Experiment(d1=5.0, d2=0.05, tau=1699.0, t_final=5900.0),
                         axes=(("d1", _D1_GRID), ("d2", _D2_GRID)), measurements=(_ECHO2, _PRE2),
                         engine="model", differential=True, isolate_orders=True),
        "fig7": ScanSpec("fig7", Experiment(d1=5.0, alpha2=0.005, tau=1299.0, t_final=8300.0),
                         measurements=(_ECHO2, _PRE2, _PRE1), engine="both", differential=True),
        "fig8": ScanSpec("fig8", Experiment(d1=5.0, alpha2=0.005, tau=1299.0, t_final=8300.0),
                         axes=(("alpha2", (0.001, 0.002, 0.005, 0.01)),), measurements=(_ECHO2, _PRE2),
                         engine="numeric", differential=True),
        "fig9": ScanSpec("fig9", dataclasses.replace(fig2_base, moments=(1, 2)),
                         measurements=("recurrence m=1 j=2", "recurrence m=2 j=2", "pre m=1 n=1 j=2",
                                       "pre m=2 n=1 j=2", "post m=1 n=1 j=2", "post m=2 n=1 j=2"),
                         engine="both", p=2, n_max=1),
        "fig10": ScanSpec("fig10", dataclasses.replace(fig2_base, moments=(1, 3)),
                          measurements=("recurrence m=1 j=3", "recurrence m=2 j=3", "recurrence m=1 j=1",
                                        "pre m=1 n=1 j=3", "pre m=2 n=1 j=3", "pre m=3 n=1 j=3",
                                        "post m=1 n=1 j=3", "post m=2 n=1 j=3", "post m=3 n=1 j=3", _PRE1),
                          engine="both", p=3, n_max=1),
        "gpe_sweep": ScanSpec("gpe_sweep", Experiment(d1=5.0, d2=0.05, tau=2499.0, t_final=9300.0),
                              axes=(("u", (0.05, 0.10, 0.15, 0.20)),), measurements=(_REC, _PRE1),
                              engine="numeric", interacting_half_width=400.0),
        "d2_suppression": ScanSpec("d2_suppression", Experiment(d1=5.0, d2=0.1, tau=1499.0, t_final=9300.0),
                                   axes=(("d2", (0.1, 0.2, 0.3, 0.4, 0.5)),), measurements=(_REC, _PRE1),
                                   engine="numeric"),
        "large_d1": ScanSpec("large_d1", Experiment(d1=8.0, d2=0.05, tau=1299.0, t_final=9600.0),
                             measurements=(_ECHO2, "echo n=3 j=1", _PRE1, _PRE2, "pre m=1 n=3 j=1"),
                             engine="both", n_max=3),
    }


PRESETS = tuple(_presets())


def preset(name):
    """Parameter set of a named figure; raises :class:`UnknownPreset` otherwise."""
    table = _presets()
    if name not in table:
        raise UnknownPreset(f"unknown preset {name!r}; choose from {', '.join(table)}")
    return table[name]

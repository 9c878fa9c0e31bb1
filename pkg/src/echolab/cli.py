"""Command-line front end.

``echolab simulate|model|schedule|scan|compare``.  Single runs are described by
a JSON run configuration (see ``run_config.schema.json``) or taken from a named
preset.  Tabular output is CSV with 17 significant digits; every CSV written by
``simulate``, ``model`` and ``compare`` gets a JSON run record next to it at
``<out>.json``.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 solver failure,
4 the perturbative model was evaluated outside its validity range, 5 the
model/numeric comparison missed its tolerances.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
import time
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__
from .echo_analysis import build_schedule, compare_model_numeric
from .errors import (
    BoundaryViolation,
    ConfigError,
    DegenerateAnharmonicity,
    EcholabError,
    NormDrift,
    ResolutionExceeded,
    UnknownPreset,
)
from .grid_solver import GridSpec, PulseEvent, SimulationConfig, TrapConfig, run_simulation
from .scan_harness import Experiment, ScanSpec, SeriesCache, model_series, preset, run_scan, write_result
from .spectral_model import predict_revival_time

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_VALIDITY = 4
EXIT_COMPARISON = 5

#: ``ratio``: allowed ``|A_numeric / A_model - 1|``; ``offset``: allowed peak offset as a fraction of ``T_x``.
TOLERANCE_PROFILES = {
    "default": {"ratio": 0.10, "offset": 0.01},
    "strict": {"ratio": 0.05, "offset": 0.005},
    "loose": {"ratio": 0.25, "offset": 0.02},
}


def _schema():
    return json.loads(resources.files("echolab").joinpath("run_config.schema.json").read_text())


def _fill_defaults(node, schema):
    """Insert schema defaults for omitted properties, recursing into objects and array items."""
    if schema.get("type") == "object" and isinstance(node, dict):
        for key, sub in schema.get("properties", {}).items():
            if key not in node and "default" in sub:
                node[key] = copy.deepcopy(sub["default"])
            if key in node:
                _fill_defaults(node[key], sub)
    elif schema.get("type") == "array" and isinstance(node, list) and "items" in schema:
        for item in node:
            _fill_defaults(item, schema["items"])
    return node


@dataclass(frozen=True)
class RunConfig:
    """Validated, defaults-applied run configuration."""

    beta: float = 0.001
    u: float = 0.0
    x_half_width: float = 24.0
    n_points: int = 2048
    dt: float = 0.005
    t_final: float = 12000.0
    sample_stride: int = 20
    pulses: tuple = ((0.0, "translate", 5.0),)
    moments: tuple = (1,)
    m_max: int = 1
    n_max: int = 2
    half_width: float = 150.0

    @classmethod
    def from_dict(cls, data):
        """Validate ``data`` against the schema, apply defaults and check the physics."""
        schema = _schema()
        try:
            jsonschema.validate(data, schema)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"{where}: {exc.message}") from None
        d = _fill_defaults(copy.deepcopy(data), schema)
        cfg = cls(
            beta=float(d["trap"]["beta"]),
            u=float(d["trap"]["u"]),
            x_half_width=float(d["grid"]["x_half_width"]),
            n_points=int(d["grid"]["n_points"]),
            dt=float(d["time"]["dt"]),
            t_final=float(d["time"]["t_final"]),
            sample_stride=int(d["time"]["sample_stride"]),
            pulses=tuple((float(p["t"]), p["kind"], float(p["magnitude"])) for p in d["pulses"]),
            moments=tuple(int(p) for p in d["moments"]),
            m_max=int(d["analysis"]["m_max"]),
            n_max=int(d["analysis"]["n_max"]),
            half_width=float(d["analysis"]["half_width"]),
        )
        cfg.simulation_config()  # raises ConfigError on inconsistent grids or schedules
        return cfg

    @classmethod
    def load(cls, path):
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(data)

    @classmethod
    def from_experiment(cls, exp, m_max=1, n_max=2, half_width=150.0):
        return cls(
            beta=exp.beta, u=exp.u, x_half_width=exp.x_max, n_points=exp.n_points, dt=exp.dt,
            t_final=exp.t_final, sample_stride=exp.stride,
            pulses=tuple((p.time, p.kind, p.magnitude) for p in exp.pulses()),
            moments=tuple(exp.moments), m_max=m_max, n_max=n_max, half_width=half_width,
        )

    def to_dict(self):
        return {
            "trap": {"beta": self.beta, "u": self.u},
            "grid": {"x_half_width": self.x_half_width, "n_points": self.n_points},
            "time": {"dt": self.dt, "t_final": self.t_final, "sample_stride": self.sample_stride},
            "pulses": [{"t": t, "kind": k, "magnitude": m} for t, k, m in self.pulses],
            "moments": list(self.moments),
            "analysis": {"m_max": self.m_max, "n_max": self.n_max, "half_width": self.half_width},
        }

    def simulation_config(self):
        return SimulationConfig(
            TrapConfig(self.beta, self.u),
            GridSpec(self.x_half_width, self.n_points),
            self.dt,
            self.t_final,
            self.sample_stride,
            tuple(PulseEvent(t, k, m) for t, k, m in self.pulses),
            self.moments,
        )

    def experiment(self):
        """The two-pulse protocol the spectral model understands; ConfigError otherwise."""
        p = self.pulses
        if not p or p[0][0] != 0.0 or p[0][1] != "translate" or p[0][2] < 0:
            raise ConfigError("the model needs a non-negative translation at t = 0 as the first pulse")
        if len(p) > 2:
            raise ConfigError("the model handles at most two pulses")
        common = dict(beta=self.beta, d1=p[0][2], u=self.u, t_final=self.t_final, x_max=self.x_half_width,
                      n_points=self.n_points, dt=self.dt, stride=self.sample_stride, moments=self.moments)
        if len(p) == 1:
            return Experiment(**common)
        t, kind, m = p[1]
        if kind == "squeeze":
            return Experiment(tau=t, alpha2=m, kick2="squeeze", **common)
        return Experiment(tau=t, d2=m, **common)


# --- helpers -------------------------------------------------------------------------------------


def _resolve_run_config(args):
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.config:
        return RunConfig.load(args.config)
    if args.preset:
        spec = preset(args.preset)
        return RunConfig.from_experiment(spec.base, spec.m_max, spec.n_max, spec.half_width)
    raise ConfigError("a run needs --config PATH or --preset NAME")


def _schedules(cfg):
    """``{p: EchoSchedule}`` for the sampled moments; empty when the protocol has no schedule."""
    try:
        exp = cfg.experiment()
    except ConfigError:
        return {}
    out = {}
    for p in cfg.moments:
        try:
            out[p] = build_schedule(exp.beta, exp.nbar, exp.tau, p, cfg.m_max, cfg.n_max,
                                    experiment="squeeze" if exp.kind == "squeeze" else "shift")
        except DegenerateAnharmonicity:
            return {}
    return out


def _markers(cfg):
    return [
        {"moment": p, "label": e.label, "kind": e.kind, "time": e.nominal_time, "order": e.order_in_d2}
        for p, sched in _schedules(cfg).items()
        for e in sched
    ]


def _versions():
    return {"echolab": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def _write_series_csv(path, times, columns):
    names = ["t", *columns]
    data = np.column_stack([times, *columns.values()])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(names), comments="")
    return names


def _write_record(out, record):
    Path(str(out) + ".json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def _fail(message, code):
    print(f"echolab: {message}", file=sys.stderr)
    return code


# --- commands ----------------------------------------------------------------------------------


def cmd_simulate(args):
    cfg = _resolve_run_config(args)
    start = time.perf_counter()
    try:
        series = run_simulation(cfg.simulation_config())
    except (BoundaryViolation, NormDrift, ResolutionExceeded) as exc:
        when = f" at t={exc.time:.6g}" if getattr(exc, "time", None) is not None else ""
        return _fail(f"solver failure: {type(exc).__name__}{when}: {exc}", EXIT_SOLVER)
    wall = time.perf_counter() - start
    columns = _write_series_csv(args.out, series.times, {f"x{p}": series[p] for p in cfg.moments})
    _write_record(args.out, {
        "command": "simulate",
        "engine": "numeric",
        "config": cfg.to_dict(),
        "columns": columns,
        "norm_drift": series.norm_drift,
        "wall_time": wall,
        "markers": _markers(cfg),
        "versions": _versions(),
    })
    return EXIT_OK


def _validity(cfg, exp):
    flags = {}
    if not exp.model_valid():
        flags["expansion"] = "second pulse too strong for the perturbative expansion"
    if cfg.u != 0.0:
        flags["interactions"] = "the spectral model ignores the interaction term"
    return flags


def cmd_model(args):
    cfg = _resolve_run_config(args)
    exp = cfg.experiment()
    start = time.perf_counter()
    series = model_series(exp, cfg.simulation_config().sample_times(), per_order=True)
    wall = time.perf_counter() - start
    cols = {f"x{p}": series[p] for p in cfg.moments}
    cols.update(series.metadata["orders"])
    columns = _write_series_csv(args.out, series.times, cols)
    flags = _validity(cfg, exp)
    _write_record(args.out, {
        "command": "model",
        "engine": "model",
        "config": cfg.to_dict(),
        "columns": columns,
        "validity": {"ok": not flags, "flags": flags},
        "wall_time": wall,
        "markers": _markers(cfg),
        "versions": _versions(),
    })
    if flags:
        return _fail("model evaluated outside its validity range: " + "; ".join(flags.values()), EXIT_VALIDITY)
    return EXIT_OK


def cmd_schedule(args):
    cfg = _resolve_run_config(args)
    p = args.moment
    schedules = _schedules(replace(cfg, moments=(p,)))
    if p not in schedules:
        raise ConfigError("no schedule: the protocol needs beta > 0 and a translation at t = 0")
    rows = [("label", "kind", "time", "order")]
    rows += [(e.label, e.kind, "%.17g" % e.nominal_time, str(e.order_in_d2)) for e in schedules[p]]
    text = "\n".join(",".join(r) for r in rows) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _load_scan_spec(args):
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.preset:
        return preset(args.preset)
    if not args.config:
        raise ConfigError("scan needs --preset NAME or --config SPEC.json")
    try:
        data = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load scan spec {args.config}: {exc}") from None
    try:
        return ScanSpec.from_dict(data)
    except TypeError as exc:
        raise ConfigError(f"bad scan spec: {exc}") from None


def cmd_scan(args):
    spec = _load_scan_spec(args)
    cache = SeriesCache(args.cache) if args.cache else None
    result = run_scan(spec, workers=args.workers, cache=cache)
    out = args.out or f"{spec.name}.csv"
    write_result(result, out)
    failed = [r for r in result.rows if r.error]
    for r in failed:
        print(f"echolab: point {r.index} ({r.engine}) failed: {r.error}", file=sys.stderr)
    return EXIT_SOLVER if failed else EXIT_OK


def cmd_compare(args):
    if args.tolerance_profile not in TOLERANCE_PROFILES:
        raise ConfigError(f"unknown tolerance profile {args.tolerance_profile!r}; "
                          f"choose from {', '.join(TOLERANCE_PROFILES)}")
    tol = TOLERANCE_PROFILES[args.tolerance_profile]
    cfg = _resolve_run_config(args)
    exp = cfg.experiment()
    schedules = _schedules(cfg)
    if not schedules:
        raise ConfigError("comparison needs beta > 0")
    try:
        numeric = run_simulation(cfg.simulation_config())
    except (BoundaryViolation, NormDrift, ResolutionExceeded) as exc:
        when = f" at t={exc.time:.6g}" if getattr(exc, "time", None) is not None else ""
        return _fail(f"solver failure: {type(exc).__name__}{when}: {exc}", EXIT_SOLVER)
    model = model_series(exp, numeric.times)
    T_x = predict_revival_time(exp.beta, exp.nbar).T_x
    offset_tol = tol["offset"] * T_x

    header = "moment,label,t_center,amplitude_numeric,amplitude_model,ratio,peak_offset,nrms,pass"
    lines = [header]
    verdicts = []
    for p, sched in schedules.items():
        for w in compare_model_numeric(numeric, model, sched, p, cfg.half_width):
            ok = abs(w.ratio - 1.0) <= tol["ratio"] and abs(w.peak_offset) <= offset_tol
            verdicts.append(ok)
            vals = (w.t_center, w.amplitude_a, w.amplitude_b, w.ratio, w.peak_offset, w.nrms)
            lines.append(",".join([str(p), w.label, *("%.17g" % v for v in vals), "pass" if ok else "fail"]))
    passed = bool(verdicts) and all(verdicts)
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        _write_record(args.out, {
            "command": "compare",
            "config": cfg.to_dict(),
            "tolerance_profile": args.tolerance_profile,
            "tolerances": {"ratio": tol["ratio"], "peak_offset": offset_tol},
            "T_x": T_x,
            "passed": passed,
            "windows": len(verdicts),
            "norm_drift": numeric.norm_drift,
            "versions": _versions(),
        })
    else:
        sys.stdout.write(text)
    print(f"compare: {sum(verdicts)}/{len(verdicts)} windows within tolerance -> {'PASS' if passed else 'FAIL'}",
          file=sys.stderr)
    return EXIT_OK if passed else EXIT_COMPARISON


# --- entry point -------------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="echolab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"echolab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def source(p):
        p.add_argument("--config", metavar="PATH", help="run configuration (JSON)")
        p.add_argument("--preset", metavar="NAME", help="named parameter set, e.g. fig2")

    p = sub.add_parser("simulate", help="split-step simulation to CSV")
    source(p)
    p.add_argument("--out", metavar="PATH", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("model", help="perturbative model series to CSV, with per-order columns")
    source(p)
    p.add_argument("--out", metavar="PATH", required=True)
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("schedule", help="nominal echo, recurrence and revival-echo times")
    source(p)
    p.add_argument("--moment", type=int, default=1, metavar="P", help="moment order (default 1)")
    p.add_argument("--out", metavar="PATH", help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("scan", help="parameter sweep from a preset or spec file")
    source(p)
    p.add_argument("--out", metavar="PATH", help="result CSV (default <name>.csv)")
    p.add_argument("--workers", type=int, default=None, metavar="N",
                   help="worker processes (default $ECHOLAB_WORKERS or the CPU count)")
    p.add_argument("--cache", metavar="DIR", help="reuse finished runs stored in DIR")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("compare", help="model vs numerics, window by window")
    source(p)
    p.add_argument("--out", metavar="PATH", help="report CSV (default stdout)")
    p.add_argument("--tolerance-profile", default="default", metavar="NAME",
                   help=f"one of {', '.join(TOLERANCE_PROFILES)}")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(f"invalid configuration: {exc}", EXIT_CONFIG)
    except UnknownPreset as exc:
        return _fail(f"invalid configuration: {exc.args[0]}", EXIT_CONFIG)
    except ValueError as exc:
        return _fail(f"invalid configuration: {exc}", EXIT_CONFIG)
    except EcholabError as exc:
        return _fail(f"{type(exc).__name__}: {exc}", EXIT_SOLVER)


if __name__ == "__main__":
    sys.exit(main())

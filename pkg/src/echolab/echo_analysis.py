"""Echo bookkeeping: where echoes should appear, how big they are, how they scale."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.ndimage import maximum_filter1d, uniform_filter1d

from .errors import NonPositiveData, NoOverlap, WindowOutOfRange
from .grid_solver import TimeSeries
from .spectral_model import predict_revival_time

__all__ = [
    "ScheduleEntry",
    "EchoSchedule",
    "EchoMeasurement",
    "FitResult",
    "WindowComparison",
    "ComparisonReport",
    "build_schedule",
    "measure_echo",
    "measure_schedule",
    "fit_power_law",
    "compare_model_numeric",
    "difference_series",
    "envelope",
    "feature_width",
    "quiet_mask",
    "quiet_baseline",
    "DEFAULT_HALF_WIDTH",
]

DEFAULT_HALF_WIDTH = 150.0
CARRIER_PERIOD = 2.0 * math.pi

KINDS = ("echo", "recurrence", "pre_revival", "post_revival")


@dataclass(frozen=True)
class ScheduleEntry:
    label: str
    nominal_time: float
    kind: str
    order_in_d2: int
    m: int = 0
    n: int = 0
    j: int = 1


@dataclass(frozen=True)
class EchoSchedule:
    T_x: float
    tau: float
    p: int
    entries: tuple

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def labels(self):
        return [e.label for e in self.entries]

    def times(self):
        return [e.nominal_time for e in self.entries]

    def find(self, label):
        for e in self.entries:
            if e.label == label:
                return e
        raise KeyError(label)

    def of_kind(self, kind):
        return [e for e in self.entries if e.kind == kind]


def _moment_offsets(p):
    if p < 1:
        raise ValueError("moment order p must be >= 1")
    return list(range(2, p + 1, 2)) if p % 2 == 0 else list(range(1, p + 1, 2))


def build_schedule(beta, nbar, tau, p=1, m_max=1, n_max=2, experiment="shift"):
    """Nominal times of echoes, recurrences and revival echoes.

    ``experiment`` is ``"shift"`` (second kick is a translation; the ``n``-th
    echo family is of order ``n`` in ``d2``) or ``"squeeze"`` (only even ``n``
    respond, each at first order in ``alpha2``).  For moment order ``p`` the
    ladder offsets ``j`` run over ``1, 3, .., p`` (odd ``p``) or ``2, 4, .., p``
    (even ``p``); recurrences sit at ``m T_x / j`` and revival echoes at
    ``(m T_x +- n tau)/j`` with ``m <= m_max * j``.  Pre-revival entries must
    come after the second kick.  Coincident times keep the smallest ``j``.
    """
    if experiment not in ("shift", "squeeze"):
        raise ValueError(f"unknown experiment {experiment!r}")
    T_x = predict_revival_time(beta, nbar).T_x
    js = _moment_offsets(p)
    if tau is None or not math.isfinite(tau):
        # single kick: only the recurrences
        entries = []
        for j in js:
            for m in range(1, m_max * j + 1):
                entries.append(ScheduleEntry(f"recurrence m={m} j={j}", m * T_x / j, "recurrence", 0, m, 0, j))
        return EchoSchedule(T_x=T_x, tau=math.inf, p=p, entries=_dedupe(entries))
    if experiment == "shift":
        ns = list(range(1, n_max + 1))
        order = {n: n for n in ns}
    else:
        ns = list(range(2, n_max + 1, 2))
        order = {n: 1 for n in ns}

    raw = []
    for n in ns:
        if n >= 2:
            raw.append(ScheduleEntry(f"echo n={n} j=1", n * tau, "echo", order[n], 0, n, 1))
    for j in js:
        for m in range(1, m_max * j + 1):
            raw.append(ScheduleEntry(f"recurrence m={m} j={j}", m * T_x / j, "recurrence", 0, m, 0, j))
    for n in ns:
        for j in js:
            for m in range(1, m_max * j + 1):
                t_pre = (m * T_x - n * tau) / j
                if t_pre > tau:
                    raw.append(ScheduleEntry(f"pre m={m} n={n} j={j}", t_pre, "pre_revival", order[n], m, n, j))
                t_post = (m * T_x + n * tau) / j
                raw.append(ScheduleEntry(f"post m={m} n={n} j={j}", t_post, "post_revival", order[n], m, n, j))

    return EchoSchedule(T_x=T_x, tau=float(tau), p=p, entries=_dedupe(raw))


def _dedupe(raw):
    kept = {}
    for e in raw:
        key = round(e.nominal_time, 6)
        if key not in kept or e.j < kept[key].j:
            kept[key] = e
    return tuple(e for e in raw if kept[round(e.nominal_time, 6)] is e)


@dataclass(frozen=True)
class EchoMeasurement:
    label: str
    t_center: float
    half_width: float
    amplitude: float
    t_peak: float
    baseline: float

    @property
    def excess(self):
        return self.amplitude - self.baseline

    @property
    def contrast(self):
        return math.inf if self.baseline == 0 else self.amplitude / self.baseline


def _sample_spacing(times):
    return float(np.median(np.diff(times))) if len(times) > 1 else 1.0


def _detrended(times, signal):
    size = max(1, int(round(CARRIER_PERIOD / _sample_spacing(times))))
    return signal - uniform_filter1d(signal, size, mode="nearest")


def _window_mask(times, lo, hi, spacing):
    eps = 1e-6 * spacing
    return (times >= lo - eps) & (times <= hi + eps)


def measure_echo(series, p, t_center, half_width=DEFAULT_HALF_WIDTH, label=""):
    """Peak of ``|signal - running mean|`` within ``t_center +- half_width``.

    The running mean spans one carrier period (``2 pi``), which strips the
    slow offset that even moments carry.  ``baseline`` is the smaller of the
    median ``|signal - running mean|`` over the two flanking windows of the
    same width; a flank that falls off the series is ignored.
    """
    times = np.asarray(series.times, dtype=float)
    if times.size < 2:
        raise WindowOutOfRange("series has fewer than two samples")
    lo, hi = t_center - half_width, t_center + half_width
    spacing = _sample_spacing(times)
    if lo < times[0] - 1e-6 * spacing or hi > times[-1] + 1e-6 * spacing:
        raise WindowOutOfRange(f"window [{lo:g}, {hi:g}] outside series range [{times[0]:g}, {times[-1]:g}]")
    resid = np.abs(_detrended(times, np.asarray(series.moments[p], dtype=float)))
    inside = _window_mask(times, lo, hi, spacing)
    idx = np.flatnonzero(inside)
    k = idx[np.argmax(resid[idx])]
    flanks = []
    for a, b in ((lo - 2 * half_width, lo), (hi, hi + 2 * half_width)):
        sel = _window_mask(times, a, b, spacing) & ~inside
        if np.count_nonzero(sel) >= 2:
            flanks.append(float(np.median(resid[sel])))
    baseline = min(flanks) if flanks else 0.0
    return EchoMeasurement(label, float(t_center), float(half_width), float(resid[k]), float(times[k]), baseline)


def measure_schedule(series, schedule, p=1, half_width=DEFAULT_HALF_WIDTH, labels=None):
    """Measure every scheduled window that fits inside the series; returns ``{label: EchoMeasurement}``."""
    out = {}
    for e in schedule:
        if labels is not None and e.label not in labels:
            continue
        try:
            out[e.label] = measure_echo(series, p, e.nominal_time, half_width, e.label)
        except WindowOutOfRange:
            if labels is not None:
                raise
    return out


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    n_points: int


def fit_power_law(xs, ys):
    """Least-squares line through ``(ln x, ln y)``; the slope is the scaling exponent."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be 1-d arrays of equal length")
    if xs.size < 3:
        raise ValueError("need at least three points for a power-law fit")
    if not (np.all(xs > 0) and np.all(ys > 0)):
        raise NonPositiveData("power-law fit needs strictly positive data")
    res = stats.linregress(np.log(xs), np.log(ys))
    r2 = min(1.0, max(0.0, float(res.rvalue) ** 2))
    return FitResult(float(res.slope), float(res.intercept), r2, int(xs.size))


@dataclass(frozen=True)
class WindowComparison:
    label: str
    t_center: float
    amplitude_a: float
    amplitude_b: float
    ratio: float
    peak_offset: float
    nrms: float


@dataclass
class ComparisonReport:
    windows: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.windows)

    def get(self, label):
        for w in self.windows:
            if w.label == label:
                return w
        raise KeyError(label)

    def passes(self, ratio_tol, offset_tol, labels=None):
        chosen = [w for w in self.windows if labels is None or w.label in labels]
        return all(abs(w.ratio - 1.0) <= ratio_tol and abs(w.peak_offset) <= offset_tol for w in chosen)


def _overlap(a, b):
    lo = max(a.times[0], b.times[0])
    hi = min(a.times[-1], b.times[-1])
    if not hi > lo:
        raise NoOverlap(f"time ranges [{a.times[0]:g}, {a.times[-1]:g}] and [{b.times[0]:g}, {b.times[-1]:g}] are disjoint")
    return lo, hi


def _resampled(a, b, p):
    """``a`` restricted to the overlap and ``b`` linearly interpolated onto its samples."""
    lo, hi = _overlap(a, b)
    sel = (a.times >= lo) & (a.times <= hi)
    t = a.times[sel]
    return t, np.asarray(a.moments[p])[sel], np.interp(t, b.times, b.moments[p])


def compare_model_numeric(a, b, windows, p=1, half_width=DEFAULT_HALF_WIDTH):
    """Per-window amplitude ratio ``a/b``, peak offset ``t_peak(a) - t_peak(b)`` and RMS difference over RMS of ``b``."""
    t, va, vb = _resampled(a, b, p)
    sa = TimeSeries(t, {p: va})
    sb = TimeSeries(t, {p: vb})
    report = ComparisonReport()
    for e in windows:
        try:
            ma = measure_echo(sa, p, e.nominal_time, half_width, e.label)
            mb = measure_echo(sb, p, e.nominal_time, half_width, e.label)
        except WindowOutOfRange:
            continue
        sel = _window_mask(t, e.nominal_time - half_width, e.nominal_time + half_width, _sample_spacing(t))
        diff = va[sel] - vb[sel]
        ref = math.sqrt(float(np.mean(vb[sel] ** 2)))
        nrms = math.sqrt(float(np.mean(diff**2))) / ref if ref > 0 else (0.0 if not diff.any() else math.inf)
        if mb.amplitude > 0:
            ratio = ma.amplitude / mb.amplitude
        else:
            ratio = 1.0 if ma.amplitude == 0 else math.inf
        report.windows.append(
            WindowComparison(e.label, e.nominal_time, ma.amplitude, mb.amplitude, ratio, ma.t_peak - mb.t_peak, nrms)
        )
    return report


def difference_series(a, b, moments=None):
    """``a - b`` on the samples of ``a`` inside the common range (``b`` interpolated)."""
    moments = list(a.moments) if moments is None else list(moments)
    t = None
    out = {}
    for p in moments:
        t, va, vb = _resampled(a, b, p)
        out[p] = va - vb
    return TimeSeries(t, out, dict(a.metadata))


def envelope(series, p=1, width=CARRIER_PERIOD):
    """Running max of ``|signal|`` over ``width`` time units."""
    size = max(1, int(round(width / _sample_spacing(series.times))))
    return maximum_filter1d(np.abs(np.asarray(series.moments[p], dtype=float)), size, mode="nearest")


def feature_width(T_x, nbar, j=1):
    """Envelope width of a ladder-offset-``j`` feature, ``T_x / (2 pi j sqrt(nbar))``.

    The phases ``j omega_n t`` spread by ``j sigma_n d(omega)/dn t`` with
    ``d(omega)/dn = 2 pi / T_x``, so collapse and revival envelopes have this width.
    """
    return T_x / (2.0 * math.pi * j * math.sqrt(nbar))


def quiet_mask(times, schedule, nbar, extra=(), clearance=2.5):
    """Samples at least ``clearance`` feature widths away from every scheduled feature.

    The initial collapse after ``t = 0`` and any times in ``extra`` (for instance
    the second kick) are treated as ``j = 1`` features.
    """
    times = np.asarray(times, dtype=float)
    w1 = feature_width(schedule.T_x, nbar, 1)
    mask = times > clearance * w1
    for e in schedule:
        mask &= np.abs(times - e.nominal_time) > clearance * feature_width(schedule.T_x, nbar, e.j)
    for t in extra:
        mask &= np.abs(times - t) > clearance * w1
    return mask


def quiet_baseline(series, p, t_center, mask, n_samples=3000):
    """Median ``|signal - running mean|`` over the ``n_samples`` quiet samples closest to ``t_center``."""
    times = np.asarray(series.times, dtype=float)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise WindowOutOfRange("no quiet samples to estimate a baseline from")
    resid = np.abs(_detrended(times, np.asarray(series.moments[p], dtype=float)))
    nearest = idx[np.argsort(np.abs(times[idx] - t_center), kind="stable")[:n_samples]]
    return float(np.median(resid[nearest]))

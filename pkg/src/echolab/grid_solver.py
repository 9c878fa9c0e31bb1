"""Split-step Fourier propagation of a wavepacket in a quartic trap.

The solver integrates ``i dpsi/dt = [-d^2/dx^2 / 2 + x^2/2 + beta x^4/4 + u |psi|^2] psi``
on a periodic grid with second-order Strang splitting.  Consecutive potential
half-steps between two samples are merged into a single full step; because a
potential step only changes the phase of ``psi``, this is exact also for the
nonlinear term.

Impulsive kicks are applied between steps: a translation as a phase ramp in
momentum space, a squeeze as a quadratic phase in position space.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import fft

from .errors import BoundaryViolation, ConfigError, NormDrift, ResolutionExceeded

__all__ = [
    "GridSpec",
    "Wavefunction",
    "TrapConfig",
    "PulseEvent",
    "Sampler",
    "TimeSeries",
    "SimulationConfig",
    "ground_state",
    "apply_translation",
    "apply_squeeze",
    "apply_pulse",
    "evolve",
    "expectation_x_power",
    "energy",
    "hermite_eigenfunction",
    "hermite_eigenfunctions",
    "project_onto_eigenbasis",
    "run_simulation",
    "run_batch",
]

EDGE_TOLERANCE = 1e-6
NORM_TOLERANCE = 1e-6
MAX_PHASE_PER_STEP = 0.5
# nodes with |psi| below this do not count as occupied for the phase check
_OCCUPIED = 1e-4


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on ``[-x_max, x_max)``."""

    x_max: float = 24.0
    n_points: int = 2048

    def __post_init__(self):
        n = self.n_points
        if n < 256 or n & (n - 1):
            raise ConfigError(f"n_points must be a power of two >= 256, got {n}")
        if not self.x_max > 0:
            raise ConfigError("x_max must be positive")

    @property
    def x_min(self):
        return -self.x_max

    @property
    def dx(self):
        return 2.0 * self.x_max / self.n_points

    @property
    def x(self):
        return self.x_min + self.dx * np.arange(self.n_points)

    @property
    def k(self):
        return 2.0 * np.pi * fft.fftfreq(self.n_points, self.dx)

    def trapezoid_weights(self):
        w = np.full(self.n_points, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w


@dataclass
class Wavefunction:
    grid: GridSpec
    amplitudes: np.ndarray = field(repr=False)

    def density(self):
        return np.abs(self.amplitudes) ** 2

    def norm(self):
        return float(self.grid.trapezoid_weights() @ self.density())

    def edge_amplitude(self):
        a = self.amplitudes
        return float(max(abs(a[0]), abs(a[-1])))

    def copy(self):
        return Wavefunction(self.grid, self.amplitudes.copy())


@dataclass(frozen=True)
class TrapConfig:
    beta: float = 0.0
    u: float = 0.0

    def __post_init__(self):
        if self.beta < 0:
            raise ConfigError("beta must be non-negative")

    def potential(self, x):
        return 0.5 * x**2 + 0.25 * self.beta * x**4


@dataclass(frozen=True)
class PulseEvent:
    """Impulsive kick: ``kind`` is ``"translate"`` (magnitude ``d``) or ``"squeeze"`` (magnitude ``alpha``)."""

    time: float
    kind: str
    magnitude: float

    def __post_init__(self):
        if self.kind not in ("translate", "squeeze"):
            raise ConfigError(f"unknown pulse kind {self.kind!r}")
        if self.time < 0:
            raise ConfigError("pulse times must be non-negative")


@dataclass(frozen=True)
class Sampler:
    stride: int = 20
    moments: tuple = (1,)

    def __post_init__(self):
        if self.stride < 1:
            raise ConfigError("sample stride must be >= 1")
        if any(p < 0 for p in self.moments):
            raise ConfigError("moment orders must be >= 0")


@dataclass
class TimeSeries:
    """Sampled moments ``<x**p(t)>``; ``moments[p]`` is aligned with ``times``."""

    times: np.ndarray
    moments: dict
    metadata: dict = field(default_factory=dict)
    final_state: Wavefunction | None = field(default=None, repr=False)
    norm_drift: float = 0.0

    def __getitem__(self, p):
        return self.moments[p]

    def window(self, lo, hi):
        sel = (self.times >= lo) & (self.times <= hi)
        return TimeSeries(self.times[sel], {p: v[sel] for p, v in self.moments.items()}, self.metadata)


@dataclass(frozen=True)
class SimulationConfig:
    trap: TrapConfig = TrapConfig()
    grid: GridSpec = GridSpec()
    dt: float = 0.005
    t_final: float = 12000.0
    sample_stride: int = 20
    pulses: tuple = ()
    moments: tuple = (1,)

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.t_final < 0:
            raise ConfigError("t_final must be non-negative")
        times = [p.time for p in self.pulses]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("pulse times must be strictly increasing")
        if times and times[-1] > self.t_final:
            raise ConfigError("pulse scheduled after t_final")

    @property
    def n_steps(self):
        return int(round(self.t_final / self.dt))

    def sample_times(self):
        """Times at which :func:`run_simulation` records moments."""
        return np.array(_sample_steps(0, self.n_steps, self.sample_stride, True), dtype=float) * self.dt

    def as_dict(self):
        d = asdict(self)
        d["pulses"] = [asdict(p) for p in self.pulses]
        d["moments"] = list(self.moments)
        return d


def ground_state(grid):
    """Harmonic ground state ``pi**-1/4 exp(-x**2/2)`` normalised on the grid."""
    x = grid.x
    psi = np.pi**-0.25 * np.exp(-0.5 * x * x) + 0j
    psi /= math.sqrt(grid.trapezoid_weights() @ np.abs(psi) ** 2)
    return Wavefunction(grid, psi)


def _check_edges(psi, time=None):
    edge = psi.edge_amplitude()
    if edge > EDGE_TOLERANCE:
        raise BoundaryViolation(f"edge amplitude {edge:.3g} exceeds {EDGE_TOLERANCE:g}", time)


def apply_translation(psi, d, time=None):
    """Shift ``psi(x) -> psi(x - d)`` exactly via the momentum phase ``exp(-i k d)``."""
    if d == 0:
        return psi.copy()
    grid = psi.grid
    out = Wavefunction(grid, fft.ifft(fft.fft(psi.amplitudes) * np.exp(-1j * grid.k * d)))
    _check_edges(out, time)
    return out


def apply_squeeze(psi, alpha):
    """Imprint the quadratic phase ``exp(-i alpha x**2)``."""
    if alpha == 0:
        return psi.copy()
    x = psi.grid.x
    return Wavefunction(psi.grid, psi.amplitudes * np.exp(-1j * alpha * x * x))


def apply_pulse(psi, pulse):
    if pulse.kind == "translate":
        return apply_translation(psi, pulse.magnitude, pulse.time)
    return apply_squeeze(psi, pulse.magnitude)


def _moment_matrix(grid, orders):
    x = grid.x
    w = grid.trapezoid_weights()
    return np.array([w * x**p for p in orders])


def expectation_x_power(psi, p):
    """``<x**p>`` by the trapezoid rule."""
    if p < 0:
        raise ValueError("p must be >= 0")
    return float(_moment_matrix(psi.grid, [p])[0] @ psi.density())


def energy(psi, trap):
    """``<H>`` including the mean-field energy ``u/2 * int |psi|**4``."""
    grid = psi.grid
    phi = fft.fft(psi.amplitudes)
    # Parseval on the periodic grid: int |psi|^2 dx = dx/N sum |phi|^2
    kinetic = 0.5 * grid.dx / grid.n_points * float(np.sum(grid.k**2 * np.abs(phi) ** 2))
    rho = psi.density()
    w = grid.trapezoid_weights()
    potential = float(w @ (trap.potential(grid.x) * rho))
    interaction = 0.5 * trap.u * float(w @ rho**2)
    return kinetic + potential + interaction


def _potential_phase_check(a, grid, v, u, dt):
    """Largest ``V dt`` over the occupied nodes of every row must stay below ``MAX_PHASE_PER_STEP``."""
    rho = np.abs(a) ** 2
    occupied = np.sqrt(rho) > _OCCUPIED
    if not occupied.any():
        return
    vv = np.broadcast_to(v, a.shape) + u * rho
    phase = float(np.max(np.abs(vv[occupied]))) * dt
    if phase >= MAX_PHASE_PER_STEP:
        raise ConfigError(f"potential phase per step {phase:.3g} rad >= {MAX_PHASE_PER_STEP} over the occupied region")


def _sample_steps(step0, n_steps, stride, sample_end):
    last = step0 + n_steps if sample_end else step0 + n_steps - 1
    first = -(-step0 // stride) * stride
    return list(range(first, last + 1, stride)) if last >= first else []


def _propagate(a, grid, v, u, dt, step0, n_steps, stride, orders, sample_end=True, t0=0.0):
    """Strang-propagate the rows of ``a`` (shape ``(B, N)``) in place of a copy.

    ``v`` is the static potential (``(N,)`` or ``(B, N)``) and ``u`` the
    interaction strength per row (shape ``(B, 1)``).  Returns the final
    amplitudes, sample times, moments of shape ``(B, S, P)`` and the largest
    norm excursion per row.
    """
    a = np.array(a, dtype=complex, copy=True)
    u = np.asarray(u, dtype=float)
    nonlinear = bool(np.any(u != 0.0))
    kinetic = np.exp(-0.5j * dt * grid.k**2)
    half = np.exp(-0.5j * dt * v)
    full = half * half
    weights = _moment_matrix(grid, orders)
    w_norm = grid.trapezoid_weights()

    samples = _sample_steps(step0, n_steps, stride, sample_end)
    wanted = set(samples)
    end = step0 + n_steps
    times = t0 + (np.array(samples, dtype=float) - step0) * dt
    values = np.empty((a.shape[0], len(samples), len(orders)))
    norm0 = np.abs(a) ** 2 @ w_norm
    drift = np.zeros(a.shape[0])
    filled = 0

    def record(s):
        nonlocal filled
        t = t0 + (s - step0) * dt
        rho = np.abs(a) ** 2
        dev = np.abs(rho @ w_norm - norm0)
        np.maximum(drift, dev, out=drift)
        if dev.max() > NORM_TOLERANCE:
            raise NormDrift(f"norm drifted by {dev.max():.3g}", t)
        edge = max(np.abs(a[:, 0]).max(), np.abs(a[:, -1]).max())
        if edge > EDGE_TOLERANCE:
            raise BoundaryViolation(f"edge amplitude {edge:.3g} exceeds {EDGE_TOLERANCE:g}", t)
        values[:, filled] = rho @ weights.T
        filled += 1

    def phase(factor, frac):
        if not nonlinear:
            return factor
        # full potential phase including u |psi|^2 in one trig evaluation
        ang = (frac * dt) * (v + u * (a.real * a.real + a.imag * a.imag))
        out = np.empty(ang.shape, dtype=complex)
        out.real = np.cos(ang)
        out.imag = -np.sin(ang)
        return out

    def drift_step():
        return fft.ifft(fft.fft(a, axis=-1, overwrite_x=True) * kinetic, axis=-1, overwrite_x=True)

    if step0 in wanted:
        record(step0)
    if n_steps > 0:
        a *= phase(half, 0.5)
    cur = step0
    for b in sorted(wanted | {end}):
        if b <= step0:
            continue
        for _ in range(b - cur - 1):
            a = drift_step()
            a *= phase(full, 1.0)
        a = drift_step()
        a *= phase(half, 0.5)
        if b in wanted:
            record(b)
        if b < end:
            a *= phase(half, 0.5)
        cur = b
    return a, times, values, drift


def evolve(psi, trap, dt, n_steps, sampler=Sampler(), t0=0.0, step0=0, sample_end=True, check_phase=True):
    """Propagate ``n_steps`` Strang steps of size ``dt``, sampling moments.

    Samples are taken at global step indices ``s`` in ``[step0, step0 + n_steps]``
    with ``s % sampler.stride == 0``; the final index is skipped when
    ``sample_end`` is false.  Sample times are ``t0 + (s - step0) * dt``.

    Raises :class:`NormDrift` when the norm moves by more than ``1e-6`` from its
    starting value and :class:`BoundaryViolation` when the edge amplitude
    exceeds ``1e-6``; both carry the sample time.
    """
    grid = psi.grid
    v = trap.potential(grid.x)
    a = psi.amplitudes[None, :]
    if check_phase:
        _potential_phase_check(a, grid, v, trap.u, dt)
    a, times, values, drift = _propagate(
        a, grid, v, np.array([[trap.u]]), dt, step0, n_steps, sampler.stride, sampler.moments, sample_end, t0
    )
    moments = {p: values[0, :, i].copy() for i, p in enumerate(sampler.moments)}
    return TimeSeries(times, moments, {}, Wavefunction(grid, a[0]), float(drift[0]))


def hermite_eigenfunctions(n_levels, grid):
    """Rows ``phi_0 .. phi_{n_levels-1}`` from the normalised three-term recurrence."""
    x = grid.x
    out = np.empty((n_levels, grid.n_points))
    out[0] = np.pi**-0.25 * np.exp(-0.5 * x * x)
    if n_levels > 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for n in range(1, n_levels - 1):
        out[n + 1] = x * math.sqrt(2.0 / (n + 1)) * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    return out


def hermite_eigenfunction(n, grid):
    if n < 0:
        raise ValueError("n must be >= 0")
    return hermite_eigenfunctions(n + 1, grid)[n]


def project_onto_eigenbasis(psi, n_max):
    """Occupations ``P(n) = |<phi_n|psi>|**2`` for ``n < n_max``."""
    grid = psi.grid
    turning = math.sqrt(2.0 * n_max + 1.0)
    if turning + 4.0 > grid.x_max or turning + 4.0 > np.pi / grid.dx:
        raise ResolutionExceeded(f"level {n_max} (turning point {turning:.2f}) is not resolved on this grid")
    basis = hermite_eigenfunctions(n_max, grid)
    overlaps = basis @ (grid.trapezoid_weights() * psi.amplitudes)
    return np.abs(overlaps) ** 2


def _batch_key(config):
    return (config.grid, config.dt, config.n_steps, config.sample_stride, tuple(config.moments),
            tuple((p.time, p.kind) for p in config.pulses))


def _apply_pulse_rows(a, grid, kind, magnitudes, time):
    mags = np.asarray(magnitudes, dtype=float)[:, None]
    if kind == "translate":
        out = fft.ifft(fft.fft(a, axis=-1) * np.exp(-1j * grid.k * mags), axis=-1)
        edge = max(np.abs(out[:, 0]).max(), np.abs(out[:, -1]).max())
        if edge > EDGE_TOLERANCE:
            raise BoundaryViolation(f"edge amplitude {edge:.3g} exceeds {EDGE_TOLERANCE:g} after translation", time)
        return out
    return a * np.exp(-1j * mags * grid.x**2)


def run_batch(configs):
    """Run several simulations that share grid, time stepping and pulse times in lock-step.

    Rows may differ in trap parameters and pulse magnitudes.  The common
    prefix (identical traps and pulses) is propagated once.  Results match
    :func:`run_simulation` on each config.
    """
    configs = list(configs)
    if not configs:
        return []
    key = _batch_key(configs[0])
    if any(_batch_key(c) != key for c in configs[1:]):
        raise ConfigError("batched configs must share grid, dt, t_final, stride, moments and pulse times")
    first = configs[0]
    grid, dt = first.grid, first.dt
    stride, orders = first.sample_stride, tuple(first.moments)
    n_total = first.n_steps
    pulse_steps = [int(round(p.time / dt)) for p in first.pulses]
    same_trap = all(c.trap == first.trap for c in configs)
    # index of the first pulse at which the rows diverge
    split = len(first.pulses)
    if not same_trap:
        split = 0
    else:
        for i, p in enumerate(first.pulses):
            if any(c.pulses[i].magnitude != p.magnitude for c in configs[1:]):
                split = i
                break

    x = grid.x
    a = ground_state(grid).amplitudes[None, :]
    rows = 1
    step = 0
    pieces = []

    def expand():
        nonlocal a, rows
        if rows == 1 and len(configs) > 1:
            a = np.repeat(a, len(configs), axis=0)
            pieces[:] = [(t, np.repeat(v, len(configs), axis=0), np.repeat(d, len(configs))) for t, v, d in pieces]
            rows = len(configs)

    def trap_arrays():
        chosen = configs[:rows]
        v = np.array([c.trap.potential(x) for c in chosen])
        u = np.array([[c.trap.u] for c in chosen])
        return v, u

    def advance(to_step, sample_end):
        nonlocal a, step
        v, u = trap_arrays()
        _potential_phase_check(a, grid, v, u, dt)
        a, times, values, drift = _propagate(a, grid, v, u, dt, step, to_step - step, stride, orders,
                                             sample_end, step * dt)
        pieces.append((times, values, drift))
        step = to_step

    for i, (k, pulse) in enumerate(zip(pulse_steps, first.pulses)):
        if i >= split:
            expand()
        if k > step:
            advance(k, sample_end=False)
        mags = [c.pulses[i].magnitude for c in configs[:rows]]
        a = _apply_pulse_rows(a, grid, pulse.kind, mags, pulse.time)
    if split == len(first.pulses) and not same_trap:
        expand()
    expand()
    advance(n_total, sample_end=True)

    times = np.concatenate([t for t, _, _ in pieces])
    values = np.concatenate([v for _, v, _ in pieces], axis=1)
    drift = np.max(np.stack([d for _, _, d in pieces]), axis=0)
    out = []
    for r, c in enumerate(configs):
        moments = {p: values[r, :, j].copy() for j, p in enumerate(orders)}
        out.append(TimeSeries(times.copy(), moments, {"config": c.as_dict()}, Wavefunction(grid, a[r].copy()),
                              float(drift[r])))
    return out


def run_simulation(config):
    """Ground state, pulses at their scheduled steps, free evolution to ``t_final``.

    A pulse at time ``t`` acts at step ``round(t/dt)``; the sample at that step
    is taken after the pulse.  Solver errors carry the time at which the
    failed invariant was detected.
    """
    return run_batch([config])[0]

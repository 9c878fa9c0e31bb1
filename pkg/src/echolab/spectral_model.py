"""Closed-form perturbative model of a displaced wavepacket in a weakly quartic trap.

Everything here is in harmonic units (hbar = m = omega_0 = 1).  The trap is
``x**2/2 + beta*x**4/4`` and the eigenstates are approximated by the
unperturbed oscillator states ``|n>`` while the eigenfrequencies carry the
first- and second-order corrections in ``beta``.

The time-domain series are organised by their order in the second kick:

* order 0  -- the single-kick response with its quantum recurrence,
* order 1  -- post-revival (``t ~ m*T_x + tau``) and pre-revival
  (``t ~ m*T_x - tau``) echoes,
* order 2  -- the ``t ~ 2*tau`` echo, ``m*T_x +- 2*tau`` revival echoes
  and a correction centred on the recurrence.

Coefficients ``gamma**n / sqrt(n!)`` are handled in log space throughout, so
coherent-state weights stay finite for several hundred levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import mpmath
import numpy as np
from scipy.special import gammaln

from .errors import DegenerateAnharmonicity, InvalidParity

__all__ = [
    "omega_n",
    "poisson_truncation",
    "coherent_coeff",
    "translation_element",
    "translation_element_small",
    "translation_matrix",
    "RevivalPrediction",
    "predict_revival_time",
    "TrapSpectrum",
    "DisplacementState",
    "SpectralModel",
    "model_x_order0",
    "model_x_order1",
    "model_x_order2",
    "model_x",
    "model_x_squeeze",
    "squeeze_valid",
    "ladder_coeff",
    "LadderCoefficientTable",
    "model_xp_order0",
    "model_xp_order1",
    "FirstOrderMoments",
    "VALIDITY_THRESHOLD",
]

#: Upper bound for ``gamma2*sqrt(nbar + 3 sigma_n)`` and ``alpha2*(nbar + 3 sigma_n)``.
VALIDITY_THRESHOLD = 0.3

# levels past n_max needed by the series (C(n+3), B(n, j, p) with n + j)
_PAD = 8
_CHUNK = 4096


def _step(k):
    """Heaviside with ``step(0) = 1``."""
    return (np.asarray(k) >= 0).astype(float)


def omega_n(n, beta):
    """Eigenfrequency of level ``n`` to second order in ``beta``.

    ``n`` may be an integer or an integer array.
    """
    n = np.asarray(n, dtype=float)
    first = beta / 16.0 * (3.0 + 6.0 * n * (1.0 + n))
    second = beta**2 / 256.0 * (
        2.0 * n * (1.0 - 2.0 * n) ** 2 * (n - 1.0) * _step(n - 2)
        + 0.25 * n * (n**3 - 6.0 * n**2 + 11.0 * n - 6.0) * _step(n - 4)
        - 2.0 * (2.0 + 3.0 * n + n**2) * (3.0 + 2.0 * n) ** 2
        - 0.25 * (2.0 + 3.0 * n + n**2) * (n**2 + 7.0 * n + 12.0)
    )
    out = n + 0.5 + first + second
    return float(out) if out.ndim == 0 else out


def poisson_truncation(nbar):
    """Number of levels kept for a Poisson occupation with mean ``nbar``."""
    return int(math.ceil(nbar + 10.0 * math.sqrt(nbar))) + 10


def _log_coherent(n, gamma):
    """``log|gamma**n / sqrt(n!)|`` with the ``gamma = 0`` corner handled."""
    n = np.asarray(n, dtype=float)
    if gamma == 0.0:
        return np.where(n == 0, 0.0, -np.inf)
    return n * math.log(abs(gamma)) - 0.5 * gammaln(n + 1.0)


def coherent_coeff(n, gamma):
    """Coherent-state coefficient ``C(n, gamma) = gamma**n / sqrt(n!)``."""
    out = np.exp(_log_coherent(n, gamma))
    return float(out) if np.ndim(out) == 0 else out


def _coherent_amplitude(n, gamma):
    """Normalised amplitude ``exp(-gamma**2/2) C(n, gamma)`` (square root of a Poisson pmf)."""
    return np.exp(_log_coherent(n, gamma) - 0.5 * gamma * gamma)


@lru_cache(maxsize=65536)
def _translation_inner(m, n, gamma):
    # sum_q (-1)^q x^q / ((m-n+q)! (n-q)! q!), x = gamma^2; alternating, so use high precision
    x = mpmath.mpf(gamma) ** 2
    q0 = max(0, n - m)
    with mpmath.workdps(30 + int(2 * float(x)) + n // 2):
        total = mpmath.mpf(0)
        for q in range(q0, n + 1):
            term = x**q / (mpmath.factorial(m - n + q) * mpmath.factorial(n - q) * mpmath.factorial(q))
            total += -term if q % 2 else term
        prefactor = mpmath.sqrt(mpmath.factorial(n) * mpmath.factorial(m)) * mpmath.mpf(gamma) ** (m - n)
        return float(total * prefactor)


def translation_element(m, n, gamma):
    """Matrix element ``<m|T(d)|n>`` of the translation ``exp(-i p d)``, ``gamma = d/sqrt(2)``.

    The element is real.  The finite alternating sum over ``q`` is evaluated in
    extended precision because it cancels badly once ``gamma**2`` is a few units.
    """
    m = int(m)
    n = int(n)
    gamma = float(gamma)
    if gamma == 0.0:
        return 1.0 if m == n else 0.0
    return math.exp(-0.5 * gamma * gamma) * _translation_inner(m, n, gamma)


def translation_matrix(n_levels, gamma):
    """``n_levels x n_levels`` block of the translation operator in the oscillator basis."""
    out = np.empty((n_levels, n_levels))
    for m in range(n_levels):
        for n in range(n_levels):
            out[m, n] = translation_element(m, n, gamma)
    return out


def translation_element_small(m, n, gamma):
    """Translation element expanded to ``O(gamma**2)``; nonzero only for ``|m - n| <= 2``."""
    m = int(m)
    n = int(n)
    g = float(gamma)
    if m == n:
        bracket = 1.0 - g * g * n
    elif m == n + 1:
        bracket = g * math.sqrt(n + 1)
    elif m == n - 1:
        bracket = -g * math.sqrt(n)
    elif m == n + 2:
        bracket = 0.5 * g * g * math.sqrt((n + 1) * (n + 2))
    elif m == n - 2:
        bracket = 0.5 * g * g * math.sqrt(n * (n - 1))
    else:
        return 0.0
    return math.exp(-0.5 * g * g) * bracket


class RevivalPrediction(NamedTuple):
    T_x: float
    a: float
    delta_omega: float
    T_rev: float


def predict_revival_time(beta, nbar):
    """Recurrence time of ``<x(t)>`` from the level spacing linearised around ``nbar``.

    Returns the revival time ``T_x = 2 pi / a``, the slope ``a`` of the level
    spacing, the spacing ``delta_omega`` at ``nbar`` and the full revival time
    ``T_rev ~ 2 T_x`` (metadata only).
    """
    a = 3.0 / 32.0 * (8.0 * beta - 17.0 * beta**2 - 17.0 * nbar * beta**2)
    if not a > 0.0:
        raise DegenerateAnharmonicity(f"level-spacing slope a={a!r} <= 0 for beta={beta!r}, nbar={nbar!r}")
    delta = 1.0 + 0.75 * beta * (nbar + 1.0) - beta**2 * (9.0 / 8.0 + 51.0 / 32.0 * nbar + 51.0 / 64.0 * nbar**2)
    T_x = 2.0 * math.pi / a
    return RevivalPrediction(T_x=T_x, a=a, delta_omega=delta, T_rev=2.0 * T_x)


@dataclass(frozen=True)
class TrapSpectrum:
    """Perturbed frequencies ``omega[n]`` for ``n < n_max``."""

    beta: float
    n_max: int
    omega: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, beta, n_max):
        if n_max < 1:
            raise ValueError("n_max must be >= 1")
        omega = omega_n(np.arange(n_max), beta)
        omega.setflags(write=False)
        return cls(beta=float(beta), n_max=int(n_max), omega=omega)

    def is_monotone(self):
        return bool(np.all(np.diff(self.omega) > 0))


@dataclass(frozen=True)
class DisplacementState:
    """Parameters of the two-kick protocol."""

    gamma1: float
    gamma2: float = 0.0
    tau: float = math.inf

    def __post_init__(self):
        if self.gamma1 < 0:
            raise ValueError("the first displacement must be non-negative")
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    @classmethod
    def from_displacements(cls, d1, d2=0.0, tau=math.inf):
        return cls(gamma1=d1 / math.sqrt(2.0), gamma2=d2 / math.sqrt(2.0), tau=float(tau))

    @property
    def norm_A(self):
        return math.exp(-0.5 * (self.gamma1**2 + self.gamma2**2))

    @property
    def nbar(self):
        return self.gamma1**2

    @property
    def sigma_n(self):
        return self.gamma1

    @property
    def validity_measure(self):
        """``|gamma2| * sqrt(gamma1**2 + 3 gamma1)``; the expansion needs this well below one."""
        return abs(self.gamma2) * math.sqrt(self.gamma1**2 + 3.0 * self.gamma1)

    @property
    def valid(self):
        return self.validity_measure <= VALIDITY_THRESHOLD


def squeeze_valid(alpha2, nbar):
    return abs(alpha2) * (nbar + 3.0 * math.sqrt(nbar)) <= VALIDITY_THRESHOLD


@dataclass(frozen=True)
class SpectralModel:
    """A trap spectrum together with the displacement protocol it is driven by.

    ``n_max`` defaults to :func:`poisson_truncation` of ``gamma1**2``.  Frequencies
    are stored for a few extra levels because the series reach ``n + 3``
    (and ``n + p`` for moment series).
    """

    spectrum: TrapSpectrum
    state: DisplacementState

    @classmethod
    def create(cls, beta, d1, d2=0.0, tau=math.inf, n_max=None):
        state = DisplacementState.from_displacements(d1, d2, tau)
        if n_max is None:
            n_max = poisson_truncation(state.nbar)
        return cls(TrapSpectrum.build(beta, n_max), state)

    @property
    def beta(self):
        return self.spectrum.beta

    @property
    def n_max(self):
        return self.spectrum.n_max

    @property
    def tau(self):
        return self.state.tau

    def omega(self, n):
        return omega_n(n, self.beta)

    def amplitude(self, n):
        """``exp(-gamma1**2/2) C(n, gamma1)``, zero for negative ``n``."""
        n = np.asarray(n)
        safe = np.where(n < 0, 0, n)
        return np.where(n < 0, 0.0, _coherent_amplitude(safe, self.state.gamma1))

    def revival(self):
        return predict_revival_time(self.beta, self.state.nbar)


def _as_times(t):
    t = np.asarray(t, dtype=float)
    return np.atleast_1d(t), t.ndim == 0


def _trig_sum(t, coeff, freq, phase, fn=np.cos):
    """``sum_n coeff[n] * fn(freq[n] * t + phase[n])`` for every ``t``, chunked over time."""
    out = np.empty(t.shape)
    coeff = np.asarray(coeff, dtype=float)
    freq = np.asarray(freq, dtype=float)
    phase = np.broadcast_to(np.asarray(phase, dtype=float), freq.shape)
    for start in range(0, t.size, _CHUNK):
        tt = t[start:start + _CHUNK]
        out[start:start + _CHUNK] = fn(np.outer(tt, freq) + phase) @ coeff
    return out


def _after_kick(t, model):
    return t >= model.tau


def _norm_squared(t, model):
    """``A**2`` in force at each time: the second kick only enters after ``tau``."""
    g1, g2 = model.state.gamma1, model.state.gamma2
    return np.where(_after_kick(t, model), math.exp(-g1 * g1 - g2 * g2), math.exp(-g1 * g1))


def _finish(values, scalar):
    return float(values[0]) if scalar else values


def model_x_order0(t, model):
    """Single-kick response ``<x(t)>`` with the exact perturbed frequencies.

    For ``t >= tau`` the normalisation carries the ``exp(-gamma2**2)`` of the
    second kick, so that the three orders add up to the full model response.
    """
    t, scalar = _as_times(t)
    n = np.arange(model.n_max)
    w = model.omega(np.arange(model.n_max + _PAD))
    amp = model.amplitude(np.arange(model.n_max + _PAD))
    coeff = amp[n] * amp[n + 1] * np.sqrt(n + 1.0)
    series = math.sqrt(2.0) * _trig_sum(t, coeff, w[n + 1] - w[n], 0.0)
    scale = _norm_squared(t, model) / math.exp(-model.state.gamma1**2)
    return _finish(series * scale, scalar)


def model_x_order1(t, model):
    """First-order response to the second kick as ``(post_part, pre_part)``.

    ``post_part`` rephases at ``t = tau`` and ``m T_x + tau``; ``pre_part`` at
    ``m T_x - tau``.  Both vanish before the kick.
    """
    t, scalar = _as_times(t)
    g2, tau = model.state.gamma2, model.tau
    if g2 == 0.0 or not np.isfinite(tau):
        zero = np.zeros(t.shape)
        return _finish(zero, scalar), _finish(zero.copy(), scalar)
    N = model.n_max
    w = model.omega(np.arange(N + _PAD))
    amp = model.amplitude(np.arange(N + _PAD))
    dw = np.diff(w)  # dw[k] = w[k+1] - w[k]
    scale = g2 / math.sqrt(2.0) * math.exp(-g2 * g2) * _after_kick(t, model)

    n = np.arange(N)
    post = 2.0 * _trig_sum(t, (n + 1.0) * (amp[n] ** 2 - amp[n + 1] ** 2), dw[n], -dw[n] * tau)

    n = np.arange(1, N)
    c = amp[n + 1] * amp[n - 1] * np.sqrt(n * (n + 1.0))
    pre = 2.0 * (
        _trig_sum(t, c, dw[n], dw[n - 1] * tau)
        - _trig_sum(t, c, dw[n - 1], dw[n] * tau)
    )
    return _finish(scale * post, scalar), _finish(scale * pre, scalar)


def model_x_order2(t, model):
    """Second-order response ``(center_part, plus2_part, minus2_part)``.

    ``plus2_part`` carries the ``2 tau`` echo and its post-revival copies,
    ``minus2_part`` the ``m T_x - 2 tau`` pre-revival echoes.
    """
    t, scalar = _as_times(t)
    g2, tau = model.state.gamma2, model.tau
    if g2 == 0.0 or not np.isfinite(tau):
        zero = np.zeros(t.shape)
        return tuple(_finish(zero.copy(), scalar) for _ in range(3))
    N = model.n_max
    w = model.omega(np.arange(N + _PAD))
    amp = model.amplitude(np.arange(N + _PAD))
    dw = np.diff(w)
    scale = g2 * g2 / math.sqrt(2.0) * math.exp(-g2 * g2) * _after_kick(t, model)

    def W(i, j):
        return w[i] - w[j]

    n0 = np.arange(0, N)
    n1 = np.arange(1, N)
    n2 = np.arange(2, N)
    n3 = np.arange(3, N)

    # shifting t -> t - tau is a phase of -freq * tau
    center = (
        2.0 * _trig_sum(t, amp[n0 + 1] * amp[n0 + 2] * (n0 + 1.0) * np.sqrt(n0 + 2.0),
                        dw[n0], -dw[n0] * tau + dw[n0 + 1] * tau)
        + 2.0 * _trig_sum(t, amp[n1 - 1] * amp[n1] * (n1 + 1.0) * np.sqrt(n1),
                          dw[n1], -dw[n1] * tau + dw[n1 - 1] * tau)
        - 2.0 * _trig_sum(t, amp[n0] * amp[n0 + 1] * (n0 + 1.0) ** 1.5, dw[n0], 0.0)
        - 2.0 * _trig_sum(t, amp[n2] * amp[n2 - 1] * np.sqrt(n2) * (n2 - 1.0), dw[n2 - 1], 0.0)
    )
    plus2 = (
        -2.0 * _trig_sum(t, amp[n0] * amp[n0 + 1] * (n0 + 1.0) ** 1.5, dw[n0], -2.0 * dw[n0] * tau)
        + _trig_sum(t, amp[n1] * amp[n1 - 1] * (n1 + 1.0) * np.sqrt(n1), dw[n1], W(n1 - 1, n1 + 1) * tau)
        + _trig_sum(t, amp[n1] * amp[n1 + 1] * n1 * np.sqrt(n1 + 1.0), dw[n1 - 1], W(n1 - 1, n1 + 1) * tau)
    )
    minus2 = (
        -2.0 * _trig_sum(t, amp[n2 - 2] * amp[n2 + 1] * np.sqrt(n2 * (n2**2 - 1.0)),
                         dw[n2 - 1], -dw[n2 - 1] * tau + W(n2 + 1, n2 - 2) * tau)
        + _trig_sum(t, amp[n3] * amp[n3 - 3] * np.sqrt(n3 * (n3 - 1.0) * (n3 - 2.0)),
                    dw[n3 - 1], W(n3 - 1, n3 - 3) * tau)
        + _trig_sum(t, amp[n0] * amp[n0 + 3] * np.sqrt((n0 + 1.0) * (n0 + 2.0) * (n0 + 3.0)),
                    dw[n0], W(n0 + 3, n0 + 1) * tau)
    )
    return tuple(_finish(scale * part, scalar) for part in (center, plus2, minus2))


def model_x(t, model):
    """Full model ``<x(t)>`` through second order in the second kick."""
    total = np.asarray(model_x_order0(t, model), dtype=float)
    total = total + sum(model_x_order1(t, model)) + sum(model_x_order2(t, model))
    return float(total) if np.ndim(total) == 0 else total


def model_x_squeeze(t, model, alpha2):
    """First-order response to an impulse squeeze ``exp(-i alpha2 x**2)`` at ``model.tau``.

    Returns ``(plus2_part, minus2_part)``: the ``2 tau`` echo family and the
    ``m T_x - 2 tau`` pre-revival family.  ``model`` should carry no second
    displacement.
    """
    t, scalar = _as_times(t)
    tau = model.tau
    if alpha2 == 0.0 or not np.isfinite(tau):
        zero = np.zeros(t.shape)
        return _finish(zero, scalar), _finish(zero.copy(), scalar)
    N = model.n_max
    w = model.omega(np.arange(N + _PAD))
    amp = model.amplitude(np.arange(N + _PAD))
    scale = alpha2 / math.sqrt(2.0) * _after_kick(t, model)

    def W(i, j):
        return w[i] - w[j]

    n0 = np.arange(0, N)
    n1 = np.arange(1, N)
    n3 = np.arange(3, N)
    plus2 = (
        _trig_sum(t, amp[n1] * amp[n1 + 1] * n1 * np.sqrt(n1 + 1.0), W(n1, n1 - 1), W(n1 - 1, n1 + 1) * tau, np.sin)
        + _trig_sum(t, amp[n1] * amp[n1 - 1] * (n1 + 1.0) * np.sqrt(n1), W(n1, n1 + 1), W(n1 + 1, n1 - 1) * tau, np.sin)
    )
    minus2 = (
        _trig_sum(t, amp[n0] * amp[n0 + 3] * np.sqrt((n0 + 1.0) * (n0 + 2.0) * (n0 + 3.0)),
                  W(n0, n0 + 1), W(n0 + 1, n0 + 3) * tau, np.sin)
        + _trig_sum(t, amp[n3] * amp[n3 - 3] * np.sqrt(n3 * (n3 - 1.0) * (n3 - 2.0)),
                    W(n3, n3 - 1), W(n3 - 1, n3 - 3) * tau, np.sin)
    )
    return _finish(scale * plus2, scalar), _finish(scale * minus2, scalar)


# --- higher moments -------------------------------------------------------------


def _check_parity(j, p):
    if p < 1:
        raise ValueError("moment order p must be >= 1")
    if (j - p) % 2 or abs(j) > p:
        raise InvalidParity(f"offset j={j} is not one of -p, -p+2, ..., p for p={p}")


def _ladder_rows(n, p):
    """Apply ``(a + a^dagger)**p`` to each ``e_n``; returns ``{offset: values}``."""
    n = np.asarray(n, dtype=float)
    rows = {0: np.ones(n.shape)}
    for _ in range(p):
        nxt = {}
        for off, vals in rows.items():
            level = n + off
            up = vals * np.sqrt(np.maximum(level + 1.0, 0.0))
            down = vals * np.sqrt(np.maximum(level, 0.0))
            nxt[off + 1] = nxt.get(off + 1, 0.0) + up
            nxt[off - 1] = nxt.get(off - 1, 0.0) + down
        rows = nxt
    return rows


def ladder_coeff(n, j, p):
    """``B(n, j, p) = <n + j|(a + a^dagger)**p|n>``; zero when ``n + j < 0``.

    ``n`` may be an array.  Raises :class:`InvalidParity` when ``j`` and ``p``
    differ in parity.
    """
    _check_parity(j, p)
    n_arr = np.asarray(n)
    vals = _ladder_rows(np.where(n_arr < 0, 0, n_arr), p)[j]
    vals = np.where((n_arr + j < 0) | (n_arr < 0), 0.0, vals)
    return float(vals) if vals.ndim == 0 else vals


@dataclass(frozen=True)
class LadderCoefficientTable:
    """``B(n, j, p)`` tabulated for ``0 <= n < n_levels``."""

    p: int
    n_levels: int
    entries: dict = field(repr=False)

    @classmethod
    def build(cls, p, n_levels):
        n = np.arange(n_levels)
        rows = _ladder_rows(n, p)
        entries = {}
        for j in range(-p, p + 1, 2):
            vals = np.where(n + j < 0, 0.0, rows[j])
            for k in range(n_levels):
                entries[(k, j)] = float(vals[k])
        return cls(p=p, n_levels=n_levels, entries=entries)

    def __getitem__(self, key):
        n, j = key
        _check_parity(j, self.p)
        if n + j < 0:
            return 0.0
        return self.entries[(n, j)]


def _offsets(p):
    return range(p % 2, p + 1, 2)


def model_xp_order0(t, model, p):
    """Single-kick ``<x**p(t)>``; recurrences appear at ``m T_x / j`` for the allowed ``j``.

    For even ``p`` the ``j = 0`` term is the constant offset.
    """
    if p < 1:
        raise ValueError("moment order p must be >= 1")
    t, scalar = _as_times(t)
    N = model.n_max
    n = np.arange(N)
    w = model.omega(np.arange(N + p + _PAD))
    amp = model.amplitude(np.arange(N + p + _PAD))
    total = np.zeros(t.shape)
    for j in _offsets(p):
        weight = 0.5 if j == 0 else 1.0
        coeff = weight * amp[n] * amp[n + j] * ladder_coeff(n, j, p)
        total += _trig_sum(t, coeff, w[n + j] - w[n], 0.0)
    scale = 2.0 * 2.0 ** (-p / 2) * _norm_squared(t, model) / math.exp(-model.state.gamma1**2)
    return _finish(scale * total, scalar)


class FirstOrderMoments(NamedTuple):
    """First-order ``<x**p>`` response split by ladder offset ``j``.

    ``parts`` holds ``(j, post_part, pre_part)``; ``post_part`` rephases near
    ``(m T_x + tau)/j``, ``pre_part`` near ``(m T_x - tau)/j``.  ``offset`` is
    the time-independent term present for even ``p`` (zero before the kick).
    """

    offset: np.ndarray
    parts: list

    def total(self):
        out = np.array(self.offset, dtype=float, copy=True)
        for _, post, pre in self.parts:
            out = out + post + pre
        return out


def model_xp_order1(t, model, p):
    """First-order response of ``<x**p(t)>`` to the second kick, split per offset ``j``."""
    if p < 1:
        raise ValueError("moment order p must be >= 1")
    t, _ = _as_times(t)
    g2, tau = model.state.gamma2, model.tau
    js = [j for j in _offsets(p) if j > 0]
    if g2 == 0.0 or not np.isfinite(tau):
        zero = np.zeros(t.shape)
        return FirstOrderMoments(zero, [(j, zero.copy(), zero.copy()) for j in js])
    N = model.n_max
    size = N + p + _PAD
    w = model.omega(np.arange(size))
    amp = model.amplitude(np.arange(size))
    live = _after_kick(t, model)
    scale = 2.0 * g2 * 2.0 ** (-p / 2) * math.exp(-g2 * g2) * live

    def W(i, j):
        return w[i] - w[j]

    n = np.arange(N)
    if p % 2 == 0:
        const = np.sum(amp[n + 1] * amp[n] * np.sqrt(n + 1.0) * np.cos(W(n + 1, n) * tau)
                       * (ladder_coeff(n + 1, 0, p) - ladder_coeff(n, 0, p)))
        offset = scale * const
    else:
        offset = np.zeros(t.shape)

    parts = []
    n1 = np.arange(1, N)
    for j in js:
        nj = np.arange(j, N)
        post = (
            _trig_sum(t, amp[nj - 1] * amp[nj - j] * np.sqrt(nj) * ladder_coeff(nj, -j, p),
                      W(nj - j, nj), W(nj, nj - 1) * tau)
            - _trig_sum(t, amp[n + 1] * amp[n + j] * np.sqrt(n + 1.0) * ladder_coeff(n, j, p),
                        W(n + j, n), W(n, n + 1) * tau)
        )
        pre = (
            _trig_sum(t, amp[n1 - 1] * amp[n1 + j] * np.sqrt(n1) * ladder_coeff(n1, j, p),
                      W(n1 + j, n1), W(n1, n1 - 1) * tau)
            - _trig_sum(t, amp[nj + 1] * amp[nj - j] * np.sqrt(nj + 1.0) * ladder_coeff(nj, -j, p),
                        W(nj - j, nj), W(nj, nj + 1) * tau)
        )
        parts.append((j, scale * post, scale * pre))
    return FirstOrderMoments(offset, parts)

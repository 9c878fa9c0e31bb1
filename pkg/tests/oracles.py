"""Independent reference computations used by the test-suite.

Nothing here calls the closed-form series under test: states are propagated
as explicit coefficient vectors, operators are dense matrices, and the
translation operator comes from a matrix exponential.
"""

import math

import numpy as np
from scipy.linalg import expm


def ladder_matrices(n_levels):
    a = np.diag(np.sqrt(np.arange(1.0, n_levels)), 1)
    return a, a.T.copy()


def position_power(n_levels, p):
    """Dense ``x**p`` on ``n_levels`` states, built on a padded basis to avoid edge truncation."""
    big = n_levels + p + 2
    a, ad = ladder_matrices(big)
    x = (a + ad) / math.sqrt(2.0)
    return np.linalg.matrix_power(x, p)[:n_levels, :n_levels]


def translation_expm(n_levels, gamma, pad=60):
    a, ad = ladder_matrices(n_levels + pad)
    return expm(gamma * (ad - a))[:n_levels, :n_levels]


def rayleigh_schroedinger_shift(n, beta, n_levels=None):
    """First + second order energy shift of level ``n`` for ``beta x**4 / 4`` by explicit sums."""
    n_levels = n_levels or n + 12
    a, ad = ladder_matrices(n_levels)
    h1 = beta / 16.0 * np.linalg.matrix_power(a + ad, 4)
    first = h1[n, n]
    second = sum(h1[n, k] ** 2 / (n - k) for k in range(n_levels) if k != n)
    return first + second


def coherent_vector(n_levels, gamma):
    n = np.arange(n_levels)
    log_c = n * math.log(gamma) - 0.5 * np.array([math.lgamma(k + 1.0) for k in n])
    return np.exp(log_c - 0.5 * gamma * gamma)


def two_kick_moments(t, omega, gamma1, gamma2, tau, p=1, n_levels=None, pad=60):
    """``<x**p(t)>`` after kicks ``gamma1`` at 0 and ``gamma2`` at ``tau``, by state-vector propagation.

    Eigenstates are the unperturbed ``|n>``, frequencies ``omega`` are supplied.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    omega = np.asarray(omega, dtype=float)
    n_levels = n_levels or len(omega)
    omega = omega[:n_levels]
    c0 = coherent_vector(n_levels, gamma1).astype(complex)
    xp = position_power(n_levels, p)
    after = c0 * np.exp(-1j * omega * tau)
    if gamma2:
        after = translation_expm(n_levels, gamma2, pad) @ after
    out = np.empty(t.size)
    for i, tt in enumerate(t):
        if tt < tau:
            c = c0 * np.exp(-1j * omega * tt)
        else:
            c = after * np.exp(-1j * omega * (tt - tau))
        out[i] = np.real(np.conj(c) @ xp @ c)
    return out


def envelope_peak(t, signal, lo, hi):
    """Time of max |signal| inside ``[lo, hi]``."""
    t = np.asarray(t)
    sel = (t >= lo) & (t <= hi)
    return t[sel][np.argmax(np.abs(np.asarray(signal)[sel]))]


def gaussian_moment_shifted(d, p, var=0.5):
    """``<(x + d)**p>`` for a centred Gaussian of variance ``var``."""
    total = 0.0
    for k in range(0, p + 1, 2):
        total += math.comb(p, k) * d ** (p - k) * var ** (k // 2) * math.prod(range(1, k, 2))
    return total

"""Modified Bessel functions of the second kind, orders 0 and 1.

Power series below x = 2, an asymptotic expansion above x = 25 and the
integral ``K_n(x) = int_0^inf exp(-x cosh t) cosh(n t) dt`` (trapezoid rule,
geometrically convergent) in between.  Each routine also has an exponentially
scaled variant ``kne(x) = exp(x) K_n(x)`` for large arguments.
"""
from __future__ import annotations

import math

import numpy as np

EULER_GAMMA = 0.57721566490153286061

_SERIES_MAX = 2.0
_ASYMP_MIN = 25.0
_N_TERMS = 30


def _series(x: np.ndarray, order: int) -> np.ndarray:
    q = 0.25 * x * x
    lg = np.log(0.5 * x) + EULER_GAMMA
    if order == 0:
        # K0 = -(ln(x/2) + gamma) I0 + sum q^k/(k!)^2 H_k
        term = np.ones_like(x)
        i0 = np.ones_like(x)
        s = np.zeros_like(x)
        harm = 0.0
        for k in range(1, _N_TERMS):
            term = term * q / (k * k)
            harm += 1.0 / k
            i0 = i0 + term
            s = s + term * harm
        return -lg * i0 + s
    # K1 = 1/x + ln(x/2) I1 - (x/4) sum q^k/(k!(k+1)!) (psi(k+1) + psi(k+2))
    term = 0.5 * x
    i1 = term.copy()
    c = np.ones_like(x)
    psi1 = -EULER_GAMMA
    psi2 = 1.0 - EULER_GAMMA
    s = c * (psi1 + psi2)
    for k in range(1, _N_TERMS):
        term = term * q / (k * (k + 1))
        i1 = i1 + term
        c = c * q / (k * (k + 1))
        psi1 += 1.0 / k
        psi2 += 1.0 / (k + 1)
        s = s + c * (psi1 + psi2)
    return 1.0 / x + np.log(0.5 * x) * i1 - 0.25 * x * s


def _asymptotic_scaled(x: np.ndarray, order: int) -> np.ndarray:
    mu = 4.0 * order * order
    term = np.ones_like(x)
    s = np.ones_like(x)
    for k in range(1, 20):
        term = term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        s = s + term
    return np.sqrt(math.pi / (2.0 * x)) * s


_T_STEP = 0.0625
_T = np.arange(0.0, 8.0 + _T_STEP, _T_STEP)
_W = np.full(_T.shape, _T_STEP)
_W[0] = 0.5 * _T_STEP


def _integral_scaled(x: np.ndarray, order: int) -> np.ndarray:
    # exp(x) * int_0^inf exp(-x cosh t) cosh(n t) dt; integrand is even in t
    ch = np.cosh(_T)
    e = np.exp(-np.outer(x, ch - 1.0))
    if order:
        e = e * ch
    return e @ _W


def _eval(x, order: int, scaled: bool):
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    if np.any(x <= 0):
        raise ValueError("K_n(x) requires x > 0")
    out = np.empty_like(x)
    lo = x <= _SERIES_MAX
    hi = x >= _ASYMP_MIN
    mid = ~(lo | hi)
    if lo.any():
        out[lo] = _series(x[lo], order) * (np.exp(x[lo]) if scaled else 1.0)
    if mid.any():
        out[mid] = _integral_scaled(x[mid], order) * (1.0 if scaled else np.exp(-x[mid]))
    if hi.any():
        out[hi] = _asymptotic_scaled(x[hi], order) * (1.0 if scaled else np.exp(-x[hi]))
    return float(out[0]) if scalar else out


def k0(x):
    return _eval(x, 0, False)


def k1(x):
    return _eval(x, 1, False)


def k0e(x):
    return _eval(x, 0, True)


def k1e(x):
    return _eval(x, 1, True)

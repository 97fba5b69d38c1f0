"""Scalar special functions: Gamma, Bessel K0/K1/I0/J0/J1, zeros of J0, E1.

Everything here is written from series, asymptotic expansions and rapidly
convergent trapezoid sums so that the rest of the package can be checked
against independent quadrature of the classical integral representations.
Functions accept floats or numpy arrays and return the same shape.
"""

from __future__ import annotations

import math

import numpy as np

EULER_GAMMA = 0.57721566490153286060651209008240243
FRANSEN_ROBINSON = 2.80777024202851936522150118655777293  # int_0^inf du / Gamma(u)

# Lanczos coefficients, g = 7, n = 9 (Godfrey's table).
_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_GAMMA_MAX = 171.62437695630272


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _out(arr, scalar):
    return float(arr) if scalar else arr


def _lanczos_sum(z):
    # z >= 0.5 here; evaluates A_g(z) for Gamma(z) with z shifted by one.
    zm1 = z - 1.0
    acc = np.full_like(zm1, _LANCZOS[0])
    for k in range(1, len(_LANCZOS)):
        acc = acc + _LANCZOS[k] / (zm1 + k)
    return acc


def gammaln(x):
    """log Gamma(x) for x > 0."""
    arr, scalar = _as_array(x)
    if np.any(arr <= 0) or np.any(~np.isfinite(arr)):
        raise DomainError("gammaln requires finite x > 0")
    out = np.empty_like(arr)
    small = arr < 0.5
    # Gamma(x) = Gamma(x + 1) / x keeps the Lanczos argument >= 0.5.
    z = np.where(small, arr + 1.0, arr)
    t = z - 1.0 + _LANCZOS_G + 0.5
    lg = 0.5 * math.log(2.0 * math.pi) + (z - 0.5) * np.log(t) - t + np.log(_lanczos_sum(z))
    out[...] = np.where(small, lg - np.log(arr), lg)
    return _out(out, scalar)


def gamma_fn(x):
    """Gamma(x) for 0 < x < 171.62; larger arguments overflow."""
    arr, scalar = _as_array(x)
    if np.any(arr <= 0) or np.any(~np.isfinite(arr)):
        raise DomainError("gamma_fn requires finite x > 0")
    if np.any(arr > _GAMMA_MAX):
        raise OverflowError("gamma_fn overflows for x > 171.62")
    small = arr < 0.5
    z = np.where(small, arr + 1.0, arr)
    t = z - 1.0 + _LANCZOS_G + 0.5
    # t**(z - 0.5) is split in two halves so that x near 170 does not overflow early.
    half = np.power(t, 0.5 * (z - 0.5))
    g = math.sqrt(2.0 * math.pi) * half * (half * np.exp(-t)) * _lanczos_sum(z)
    g = np.where(small, g / arr, g)
    return _out(np.asarray(g, dtype=float), scalar)


def rgamma(x):
    """1/Gamma(x) for x >= 0, continuous at 0 where it vanishes."""
    arr, scalar = _as_array(x)
    if np.any(arr < 0):
        raise DomainError("rgamma is implemented for x >= 0 only")
    # 1/Gamma(x) = x / Gamma(x + 1) is smooth through x = 0.
    out = arr * np.exp(-gammaln(arr + 1.0))
    return _out(out, scalar)


def digamma_int(n: int) -> float:
    """psi(n) for integer n >= 1."""
    return -EULER_GAMMA + sum(1.0 / k for k in range(1, n))


# ---------------------------------------------------------------- I0, I1

def _i0_series(x):
    y = 0.25 * x * x
    term = np.ones_like(x)
    acc = np.ones_like(x)
    for k in range(1, 200):
        term = term * y / (k * k)
        acc = acc + term
        if np.all(term <= 1e-17 * acc):
            break
    return acc


def _i1_series(x):
    y = 0.25 * x * x
    term = 0.5 * x
    acc = term.copy()
    for k in range(1, 200):
        term = term * y / (k * (k + 1))
        acc = acc + term
        if np.all(np.abs(term) <= 1e-17 * np.abs(acc)):
            break
    return acc


def _i_scaled_asymptotic(x, nu):
    # e^{-x} I_nu(x) ~ (2 pi x)^{-1/2} sum_k (-1)^k a_k(nu) / x^k
    mu = 4.0 * nu * nu
    term = np.ones_like(x)
    acc = np.ones_like(x)
    for k in range(1, 40):
        new = -term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        if np.all(np.abs(new) >= np.abs(term)):
            break
        term = new
        acc = acc + term
    return acc / np.sqrt(2.0 * np.pi * x)


_I_SWITCH = 20.0


def bessel_i0e(x):
    """exp(-|x|) I0(x)."""
    arr, scalar = _as_array(x)
    ax = np.abs(arr)
    out = np.empty_like(ax)
    lo = ax <= _I_SWITCH
    if np.any(lo):
        out[lo] = _i0_series(ax[lo]) * np.exp(-ax[lo])
    if np.any(~lo):
        out[~lo] = _i_scaled_asymptotic(ax[~lo], 0.0)
    return _out(out, scalar)


def bessel_i0(x):
    """Modified Bessel function I0 (even, entire)."""
    arr, scalar = _as_array(x)
    ax = np.abs(arr)
    out = np.empty_like(ax)
    lo = ax <= _I_SWITCH
    if np.any(lo):
        out[lo] = _i0_series(ax[lo])
    if np.any(~lo):
        out[~lo] = _i_scaled_asymptotic(ax[~lo], 0.0) * np.exp(ax[~lo])
    return _out(out, scalar)


def bessel_i1(x):
    """Modified Bessel function I1 (odd)."""
    arr, scalar = _as_array(x)
    ax = np.abs(arr)
    out = np.empty_like(ax)
    lo = ax <= _I_SWITCH
    if np.any(lo):
        out[lo] = _i1_series(ax[lo])
    if np.any(~lo):
        out[~lo] = _i_scaled_asymptotic(ax[~lo], 1.0) * np.exp(ax[~lo])
    return _out(np.sign(arr) * out, scalar)


# ---------------------------------------------------------------- K0, K1

_K_SWITCH = 2.0


def _k0_series(x):
    y = 0.25 * x * x
    lg = np.log(0.5 * x) + EULER_GAMMA
    term = np.ones_like(x)
    harm = 0.0
    acc = np.zeros_like(x)
    for k in range(1, 60):
        term = term * y / (k * k)
        harm += 1.0 / k
        acc = acc + term * harm
        if np.all(term * harm < 1e-18):
            break
    return -lg * _i0_series(x) + acc


def _k1_series(x):
    y = 0.25 * x * x
    term = np.ones_like(x)  # y^k / (k! (k+1)!)
    psi_sum = digamma_int(1) + digamma_int(2)
    acc = term * psi_sum
    hk = 0.0
    for k in range(1, 60):
        term = term * y / (k * (k + 1))
        hk += 1.0 / k
        # psi(k+1) + psi(k+2) = -2 gamma + 2 H_k + 1/(k+1)
        psi_sum = -2.0 * EULER_GAMMA + 2.0 * hk + 1.0 / (k + 1)
        acc = acc + term * psi_sum
        if np.all(np.abs(term * psi_sum) < 1e-18):
            break
    return 1.0 / x + np.log(0.5 * x) * _i1_series(x) - 0.25 * x * acc


def _k_scaled_trapezoid(x, nu):
    # e^x K_nu(x) = int_0^inf exp(-x (cosh t - 1)) cosh(nu t) dt.  The integrand
    # is analytic in a strip of half-width pi/2, so the trapezoid sum converges
    # geometrically with exponent 2*pi*(pi/2)/h.  The peak narrows like
    # x^{-1/2}, so the step shrinks accordingly past x = 50.
    h = 0.08 * min(1.0, math.sqrt(50.0 / float(np.max(x))))
    tmax = math.acosh(1.0 + 745.0 / float(np.min(x))) + h
    t = np.arange(0.0, tmax, h)
    w = np.full_like(t, h)
    w[0] = 0.5 * h
    vals = np.exp(-np.outer(x, np.cosh(t) - 1.0)) * np.cosh(nu * t)
    return vals @ w


def bessel_k0e(x):
    """exp(x) K0(x) for x > 0."""
    arr, scalar = _as_array(x)
    if np.any(arr <= 0):
        raise DomainError("K0 requires x > 0")
    flat = arr.ravel()
    out = np.empty_like(flat)
    lo = flat <= _K_SWITCH
    if np.any(lo):
        out[lo] = _k0_series(flat[lo]) * np.exp(flat[lo])
    if np.any(~lo):
        out[~lo] = _k_scaled_trapezoid(flat[~lo], 0.0)
    return _out(out.reshape(arr.shape), scalar)


def bessel_k0(x):
    """Macdonald function K0 for x > 0."""
    arr, scalar = _as_array(x)
    out = np.asarray(bessel_k0e(arr)) * np.exp(-arr)
    return _out(out, scalar)


def bessel_k1e(x):
    """exp(x) K1(x) for x > 0."""
    arr, scalar = _as_array(x)
    if np.any(arr <= 0):
        raise DomainError("K1 requires x > 0")
    flat = arr.ravel()
    out = np.empty_like(flat)
    lo = flat <= _K_SWITCH
    if np.any(lo):
        out[lo] = _k1_series(flat[lo]) * np.exp(flat[lo])
    if np.any(~lo):
        out[~lo] = _k_scaled_trapezoid(flat[~lo], 1.0)
    return _out(out.reshape(arr.shape), scalar)


def bessel_k1(x):
    """Macdonald function K1 for x > 0."""
    arr, scalar = _as_array(x)
    out = np.asarray(bessel_k1e(arr)) * np.exp(-arr)
    return _out(out, scalar)


def k0_small_x_expansion(a):
    """Two-term expansion log(1/a) + log(sqrt 2) - gamma of K0(sqrt(2) a), for 0 < a <= 0.5.

    The neglected remainder is O(a^2 log(1/a)).  Without the log(sqrt 2) the
    same two terms expand K0(2a) = int_0^inf e^{-t - a^2/t} dt / (2t).
    """
    arr, scalar = _as_array(a)
    if np.any(arr <= 0) or np.any(arr > 0.5):
        raise DomainError("k0_small_x_expansion requires 0 < a <= 0.5")
    return _out(-np.log(arr) + 0.5 * math.log(2.0) - EULER_GAMMA, scalar)


# ---------------------------------------------------------------- J0, J1

_J_SWITCH = 8.0


def _j_series(x, nu):
    y = -0.25 * x * x
    term = np.ones_like(x) if nu == 0 else 0.5 * x
    acc = term.copy()
    for k in range(1, 120):
        term = term * y / (k * (k + nu))
        acc = acc + term
        if np.all(np.abs(term) < 1e-18):
            break
    return acc


def _j_trapezoid(x, nu):
    # J_n(x) = (1/pi) int_0^pi cos(n th - x sin th) dth, a periodic analytic integrand;
    # the trapezoid rule with n nodes is exact up to terms of order J_{2n}(x).
    n = int(np.max(np.abs(x))) + 48
    th = (np.arange(n) + 0.5) * np.pi / n
    vals = np.cos(nu * th[None, :] - np.outer(x, np.sin(th)))
    return vals.mean(axis=1)


def bessel_j0(x):
    """Bessel function J0 (even, entire)."""
    arr, scalar = _as_array(x)
    ax = np.abs(arr).ravel()
    out = np.empty_like(ax)
    lo = ax <= _J_SWITCH
    if np.any(lo):
        out[lo] = _j_series(ax[lo], 0)
    if np.any(~lo):
        out[~lo] = _j_trapezoid(ax[~lo], 0)
    return _out(out.reshape(arr.shape), scalar)


def bessel_j1(x):
    """Bessel function J1 (odd, entire)."""
    arr, scalar = _as_array(x)
    ax = np.abs(arr).ravel()
    out = np.empty_like(ax)
    lo = ax <= _J_SWITCH
    if np.any(lo):
        out[lo] = _j_series(ax[lo], 1)
    if np.any(~lo):
        out[~lo] = _j_trapezoid(ax[~lo], 1)
    return _out(np.sign(arr) * out.reshape(arr.shape), scalar)


def j0_zeros(n: int = 8) -> list[float]:
    """First n positive zeros of J0 by bisection and Newton polish.

    Zero k is bracketed by (k - 1/4) pi +/- 1 (McMahon's leading term).
    """
    zeros = []
    for k in range(1, n + 1):
        lo = (k - 0.25) * math.pi - 1.0
        hi = (k - 0.25) * math.pi + 1.0
        flo = bessel_j0(lo)
        if flo * bessel_j0(hi) > 0:
            raise ArithmeticError(f"no sign change of J0 on bracket {k}")
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            fm = bessel_j0(mid)
            if fm * flo > 0:
                lo, flo = mid, fm
            else:
                hi = mid
            if hi - lo < 1e-6:
                break
        r = 0.5 * (lo + hi)
        for _ in range(8):
            step = bessel_j0(r) / -bessel_j1(r)
            r -= step
            if abs(step) < 1e-16 * r:
                break
        zeros.append(r)
    return zeros


# ---------------------------------------------------------------- E1

def exp1(x):
    """Exponential integral E1(x) = int_x^inf e^{-t}/t dt for x > 0."""
    arr, scalar = _as_array(x)
    if np.any(arr <= 0):
        raise DomainError("E1 requires x > 0")
    flat = arr.ravel()
    out = np.empty_like(flat)
    lo = flat <= 1.0
    if np.any(lo):
        z = flat[lo]
        term = -np.ones_like(z)
        acc = np.zeros_like(z)
        for k in range(1, 40):
            term = -term * z / k
            acc = acc + term / k
        out[lo] = -EULER_GAMMA - np.log(z) + acc
    if np.any(~lo):
        z = flat[~lo]
        # Modified Lentz on the continued fraction E1 = e^{-z} / (z + 1 - 1/(z + 3 - 4/(z + 5 ...))).
        tiny = 1e-300
        b = z + 1.0
        c = np.full_like(z, 1.0 / tiny)
        d = 1.0 / b
        f = d.copy()
        for k in range(1, 300):
            an = -float(k * k)
            b = b + 2.0
            d = 1.0 / (an * d + b)
            c = b + an / c
            delta = c * d
            f = f * delta
            if np.all(np.abs(delta - 1.0) < 1e-16):
                break
        out[~lo] = f * np.exp(-z)
    return _out(out.reshape(arr.shape), scalar)


class SpecialConstants:
    """Euler-Mascheroni constant and the leading zeros of J0."""

    def __init__(self, n_zeros: int = 8):
        self.euler_mascheroni = EULER_GAMMA
        self.j0_zeros = j0_zeros(n_zeros)

    @property
    def j01(self) -> float:
        return self.j0_zeros[0]


J01 = j0_zeros(1)[0]

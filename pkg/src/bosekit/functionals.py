"""Closed forms for Laplace transforms of Bessel hitting times and of
exponential functionals of one-dimensional Brownian motion, including their
continuation to positive exponents.

Positive-exponent formulas hold only on a half-line in the level b; outside
it the denominator passes through a zero (of cos for the indicator weight, of
J0 for the exponential weight) and the expectation is infinite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .specfun import J01, bessel_i0, bessel_j0, bessel_k0

# relative distance to the admissibility boundary below which evaluation is refused
BOUNDARY_MARGIN = 1e-3


class AnalyticContinuationError(ValueError):
    """Parameters lie outside (or too close to the edge of) the continuation domain."""


def arcsine_integral(g, n: int = 64) -> float:
    """int_{-1}^{1} (1 - t^2)^{-1/2} g(t) dt by Chebyshev-Gauss nodes t = cos(th)."""
    th = (2.0 * np.arange(1, n + 1) - 1.0) * math.pi / (2.0 * n)
    return float(math.pi / n * np.sum(g(np.cos(th))))


@dataclass(frozen=True)
class ContinuationDomain:
    """Admissible levels b for a positive-exponent formula.

    ``cos-positive-exponent-interval``: b > M exp(-pi / (2 sqrt(2 nu))).
    ``cos-positive-exponent-I0``: b < j01 / sqrt(2 nu).
    ``cosh-negative-exponent``: every b > 0.
    """

    kind: str
    nu: float = 0.0
    M: float = math.inf
    j01: float = J01

    def __post_init__(self):
        if self.kind not in {"cosh-negative-exponent", "cos-positive-exponent-interval", "cos-positive-exponent-I0"}:
            raise ValueError(f"unknown continuation kind {self.kind!r}")

    @property
    def bound(self) -> float:
        if self.kind == "cos-positive-exponent-interval":
            return self.M * math.exp(-math.pi / (2.0 * math.sqrt(2.0 * self.nu))) if self.nu > 0 else 0.0
        if self.kind == "cos-positive-exponent-I0":
            return self.j01 / math.sqrt(2.0 * self.nu) if self.nu > 0 else math.inf
        return 0.0

    def admissible(self, b: float, margin: float = 0.0) -> bool:
        if self.kind == "cos-positive-exponent-interval":
            return b > self.bound * (1.0 + margin)
        if self.kind == "cos-positive-exponent-I0":
            return b < self.bound * (1.0 - margin)
        return b > 0

    def check(self, b: float, margin: float = BOUNDARY_MARGIN) -> None:
        if self.admissible(b, margin):
            return
        if self.kind == "cos-positive-exponent-interval":
            msg = f"b > M*exp(-pi/(2*sqrt(2*nu))) = {self.bound:.12g} violated by b = {b:.12g}"
        elif self.kind == "cos-positive-exponent-I0":
            msg = f"b < j01/sqrt(2*nu) = {self.bound:.12g} violated by b = {b:.12g}"
        else:
            msg = f"b > 0 violated by b = {b:.12g}"
        if self.admissible(b):
            msg += f" (within relative margin {margin:g} of the boundary)"
        raise AnalyticContinuationError(f"outside analytic continuation domain: {msg}")


def critical_nu_interval(b: float, M: float) -> float:
    """nu at which cos(log(M/b) sqrt(2 nu)) first vanishes, for b < M."""
    if not 0 < b < M:
        raise ValueError("need 0 < b < M")
    return (math.pi / (2.0 * math.log(M / b))) ** 2 / 2.0


def critical_nu_exp2beta(b: float) -> float:
    """nu at which J0(b sqrt(2 nu)) first vanishes."""
    return (J01 / b) ** 2 / 2.0


def hit_transform_down(a: float, b: float, mu: float) -> float:
    """E_a[exp(-mu T_b)] for the 2D Bessel process, 0 < b <= a."""
    if not 0 < b <= a:
        raise ValueError("hit_transform_down needs 0 < b <= a")
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if mu == 0 or a == b:
        return 1.0
    s = math.sqrt(2.0 * mu)
    return float(bessel_k0(a * s) / bessel_k0(b * s))


def hit_transform_up(a: float, b: float, mu: float) -> float:
    """E_a[exp(-mu T_b)] for the 2D Bessel process, 0 < a <= b."""
    if not 0 < a <= b:
        raise ValueError("hit_transform_up needs 0 < a <= b")
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if mu == 0 or a == b:
        return 1.0
    s = math.sqrt(2.0 * mu)
    return float(bessel_i0(a * s) / bessel_i0(b * s))


def exp2beta_transform_neg(a: float, b: float, mu: float, n: int = 64) -> float:
    """E_{log a}[exp(-mu int_0^{T_log b} e^{2 beta_v} dv)], 0 < a <= b, via arcsine-weight integrals."""
    if not 0 < a <= b:
        raise ValueError("need 0 < a <= b")
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    s = math.sqrt(2.0 * mu)
    return arcsine_integral(lambda t: np.cosh(a * s * t), n) / arcsine_integral(lambda t: np.cosh(b * s * t), n)


def exp2beta_transform_pos(a: float, b: float, nu: float, n: int = 64) -> float:
    """E_{log a}[exp(+nu int_0^{T_log b} e^{2 beta_v} dv)], 0 < a <= b < j01 / sqrt(2 nu)."""
    if not 0 < a <= b:
        raise ValueError("need 0 < a <= b")
    if nu < 0:
        raise ValueError("nu must be nonnegative")
    if nu == 0 or a == b:
        return 1.0
    ContinuationDomain("cos-positive-exponent-I0", nu=nu).check(b)
    s = math.sqrt(2.0 * nu)
    return arcsine_integral(lambda t: np.cos(a * s * t), n) / arcsine_integral(lambda t: np.cos(b * s * t), n)


def exp2beta_transform_pos_bessel(a: float, b: float, nu: float) -> float:
    """Same quantity as exp2beta_transform_pos, written as J0(a sqrt(2nu)) / J0(b sqrt(2nu))."""
    ContinuationDomain("cos-positive-exponent-I0", nu=nu).check(b)
    s = math.sqrt(2.0 * nu)
    return float(bessel_j0(a * s) / bessel_j0(b * s))


def occupation_transform_neg(a: float, b: float, M: float, mu: float) -> float:
    """E_{log a}[exp(-mu int_0^{T_log b} 1{beta_v <= log M} dv)], 0 < b <= a."""
    if not 0 < b <= a:
        raise ValueError("need 0 < b <= a")
    if mu < 0 or M <= 0:
        raise ValueError("need mu >= 0 and M > 0")
    s = math.sqrt(2.0 * mu)
    num = math.cosh(math.log(M / min(a, M)) * s)
    den = math.cosh(math.log(M / min(b, M)) * s)
    return num / den


def occupation_transform_pos(a: float, b: float, M: float, nu: float) -> float:
    """E_{log a}[exp(+nu int_0^{T_log b} 1{beta_v <= log M} dv)], M exp(-pi/(2 sqrt(2nu))) < b <= a."""
    if not 0 < b <= a:
        raise ValueError("need 0 < b <= a")
    if nu < 0 or M <= 0:
        raise ValueError("need nu >= 0 and M > 0")
    if nu == 0:
        return 1.0
    ContinuationDomain("cos-positive-exponent-interval", nu=nu, M=M).check(b)
    s = math.sqrt(2.0 * nu)
    num = math.cos(math.log(M / min(a, M)) * s)
    den = math.cos(math.log(M / min(b, M)) * s)
    return num / den

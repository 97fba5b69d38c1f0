import cmath
import math

import numpy as np
import pytest
from scipy import special
from scipy.integrate import quad

from bosekit.functionals import (AnalyticContinuationError, ContinuationDomain, arcsine_integral,
                                 critical_nu_exp2beta, critical_nu_interval, exp2beta_transform_neg,
                                 exp2beta_transform_pos, exp2beta_transform_pos_bessel, hit_transform_down,
                                 hit_transform_up, occupation_transform_neg, occupation_transform_pos)


def test_hit_down_value():
    assert hit_transform_down(2.0, 1.0, 0.5) == pytest.approx(special.k0(2.0) / special.k0(1.0), rel=1e-13)
    assert hit_transform_down(2.0, 1.0, 0.5) == pytest.approx(0.27052, abs=1e-5)


def test_hit_up_value():
    assert hit_transform_up(0.5, 1.0, 0.5) == pytest.approx(special.i0(0.5) / special.i0(1.0), rel=1e-13)


@pytest.mark.parametrize("fn", [hit_transform_down, hit_transform_up])
def test_hit_trivial_cases(fn):
    assert fn(1.0, 1.0, 0.7) == 1.0
    assert fn(1.0, 1.0, 0.0) == 1.0


def test_hit_monotone_in_mu():
    vals = [hit_transform_down(2.0, 1.0, mu) for mu in (0.1, 0.5, 1.0, 2.0)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_arcsine_integral_is_pi_i0():
    # int_{-1}^{1} cosh(x t) / sqrt(1 - t^2) dt = pi I0(x)
    for x in (0.3, 1.0, 4.0):
        assert arcsine_integral(lambda t: np.cosh(x * t)) == pytest.approx(math.pi * special.i0(x), rel=1e-13)
        assert arcsine_integral(lambda t: np.cos(x * t)) == pytest.approx(math.pi * special.j0(x), rel=1e-12)


def test_exp2beta_neg_matches_i0_ratio():
    a, b, mu = 0.4, 0.9, 0.8
    s = math.sqrt(2 * mu)
    assert exp2beta_transform_neg(a, b, mu) == pytest.approx(special.i0(a * s) / special.i0(b * s), rel=1e-13)


def test_exp2beta_pos_two_routes():
    for a, b, nu in ((0.3, 0.6, 1.0), (0.1, 1.0, 2.5)):
        assert exp2beta_transform_pos(a, b, nu) == pytest.approx(exp2beta_transform_pos_bessel(a, b, nu), rel=1e-12)


def test_exp2beta_pos_refuses_beyond_first_zero():
    nu = 1.0
    edge = special.jn_zeros(0, 1)[0] / math.sqrt(2 * nu)
    with pytest.raises(AnalyticContinuationError, match="b < j01"):
        exp2beta_transform_pos(0.1, edge * 1.01, nu)
    with pytest.raises(AnalyticContinuationError, match="margin"):
        exp2beta_transform_pos(0.1, edge * (1 - 1e-4), nu)
    assert critical_nu_exp2beta(0.6) == pytest.approx(edge ** 2 * nu / 0.36, rel=1e-12)


def test_occupation_neg_cosh_ratio():
    a, b, M, mu = 1.5, 1.0, 2.0, 0.3
    s = math.sqrt(2 * mu)
    expected = math.cosh(math.log(M / a) * s) / math.cosh(math.log(M / b) * s)
    assert occupation_transform_neg(a, b, M, mu) == pytest.approx(expected, rel=1e-15)
    assert occupation_transform_neg(a, b, M, 0.0) == 1.0


def test_occupation_continuation_limits_agree():
    a, b, M = 1.5, 1.0, 2.0
    for small in (1e-6, 1e-8):
        assert occupation_transform_neg(a, b, M, small) == pytest.approx(1.0, abs=1e-5)
        assert occupation_transform_pos(a, b, M, small) == pytest.approx(1.0, abs=1e-5)
    assert occupation_transform_pos(a, b, M, 0.0) == 1.0


def test_occupation_pos_is_continuation_in_mu():
    # cos(x s) = cosh(i x s): the positive form at nu equals the negative form at mu = -nu
    a, b, M, nu = 1.5, 1.0, 2.0, 0.4
    s = math.sqrt(2 * nu)
    expected = (cmath.cosh(complex(0, math.log(M / a) * s)) / cmath.cosh(complex(0, math.log(M / b) * s))).real
    assert occupation_transform_pos(a, b, M, nu) == pytest.approx(expected, rel=1e-14)


def test_occupation_pos_boundary_refusal():
    M, nu = 2.0, 0.5
    edge = M * math.exp(-math.pi / (2 * math.sqrt(2 * nu)))
    assert ContinuationDomain("cos-positive-exponent-interval", nu=nu, M=M).bound == pytest.approx(edge, rel=1e-15)
    with pytest.raises(AnalyticContinuationError):
        occupation_transform_pos(1.5, edge * (1 + 1e-4), M, nu)
    with pytest.raises(AnalyticContinuationError, match="violated"):
        occupation_transform_pos(1.5, edge * 0.9, M, nu)
    # approaching the edge from inside the blow-up is visible
    vals = [occupation_transform_pos(1.5, edge * (1 + d), M, nu) for d in (0.1, 0.03, 0.01)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert critical_nu_interval(1.0, M) == pytest.approx((math.pi / (2 * math.log(2.0))) ** 2 / 2, rel=1e-15)


def test_occupation_against_direct_quadrature_structure():
    # numerator depends on a only below M: a above M gives cosh(0) = 1
    assert occupation_transform_neg(3.0, 1.0, 2.0, 0.3) == pytest.approx(1.0 / math.cosh(math.log(2.0) * math.sqrt(0.6)))


def test_unknown_domain_kind():
    with pytest.raises(ValueError):
        ContinuationDomain("nope")


@pytest.mark.parametrize("args", [(0.5, 1.0, 0.3), (1.0, 0.0, 0.3)])
def test_hit_down_argument_checks(args):
    with pytest.raises(ValueError):
        hit_transform_down(*args)


def test_closed_forms_against_integral_representations():
    # K0 via int e^{-x cosh s} ds and I0 via (1/pi) int e^{x cos th} dth
    def k0(x):
        return quad(lambda s: math.exp(-x * math.cosh(s)), 0.0, math.acosh(750.0 / x), epsabs=0, epsrel=1e-13)[0]

    def i0(x):
        return quad(lambda th: math.exp(x * math.cos(th)), 0.0, math.pi, epsabs=0, epsrel=1e-13)[0] / math.pi

    assert hit_transform_down(2.0, 1.0, 0.5) == pytest.approx(k0(2.0) / k0(1.0), rel=1e-10)
    assert hit_transform_up(0.5, 1.0, 0.5) == pytest.approx(i0(0.5) / i0(1.0), rel=1e-10)

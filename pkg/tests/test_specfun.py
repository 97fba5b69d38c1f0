import math

import numpy as np
import pytest
from scipy import special
from scipy.integrate import quad

from bosekit.specfun import (EULER_GAMMA, DomainError, SpecialConstants, bessel_i0, bessel_i0e, bessel_i1,
                             bessel_j0, bessel_j1, bessel_k0, bessel_k0e, bessel_k1, exp1, gamma_fn, gammaln,
                             j0_zeros, k0_small_x_expansion, rgamma)

X = np.concatenate([np.geomspace(1e-6, 1.9, 25), np.linspace(2.0, 60.0, 60)])


@pytest.mark.parametrize("x, expected", [(1.0, 1.0), (0.5, math.sqrt(math.pi)), (6.0, 120.0)])
def test_gamma_values(x, expected):
    assert gamma_fn(x) == pytest.approx(expected, rel=1e-14)


def test_gamma_family_against_scipy():
    x = np.linspace(0.05, 40.0, 200)
    assert np.allclose(gammaln(x), special.gammaln(x), rtol=1e-13, atol=1e-13)
    assert np.allclose(rgamma(x), special.rgamma(x), rtol=1e-12)
    assert rgamma(0.0) == 0.0


def test_i0_at_zero():
    assert bessel_i0(0.0) == 1.0


def test_i_functions_against_scipy():
    assert np.allclose(bessel_i0(X), special.i0(X), rtol=1e-13)
    assert np.allclose(bessel_i1(X), special.i1(X), rtol=1e-13)
    assert np.allclose(bessel_i0e(X), special.i0e(X), rtol=1e-13)


def test_k0_at_one_against_integral():
    ref = quad(lambda s: math.exp(-math.cosh(s)), 0.0, 10.0, epsabs=0, epsrel=1e-13)[0]
    assert bessel_k0(1.0) == pytest.approx(0.4210244382, abs=1e-10)
    assert bessel_k0(1.0) == pytest.approx(ref, rel=1e-13)


def test_k_functions_against_scipy():
    assert np.allclose(bessel_k0(X), special.k0(X), rtol=1e-13)
    assert np.allclose(bessel_k1(X), special.k1(X), rtol=1e-13)
    assert np.allclose(bessel_k0e(X), special.k0e(X), rtol=1e-13)


def test_k0_large_x_asymptotic_series():
    # K0(x) e^x sqrt(2x/pi) = 1 - 1/(8x) + 9/(2 (8x)^2) - ...
    for x in (60.0, 100.0, 200.0):
        y = 8.0 * x
        s = 1.0 - 1.0 / y + 9.0 / (2.0 * y ** 2) - 225.0 / (6.0 * y ** 3) + 11025.0 / (24.0 * y ** 4)
        assert bessel_k0e(x) * math.sqrt(2 * x / math.pi) == pytest.approx(s, rel=1e-9)


def test_k0_domain():
    with pytest.raises(DomainError):
        bessel_k0(0.0)
    with pytest.raises(DomainError):
        bessel_k0(-1.0)


def test_j_functions_against_scipy():
    x = np.linspace(0.0, 50.0, 400)
    assert np.allclose(bessel_j0(x), special.j0(x), atol=1e-14)
    assert np.allclose(bessel_j1(x), special.j1(x), atol=1e-14)


def test_first_j0_zero():
    assert abs(bessel_j0(2.40483)) < 1e-5
    assert SpecialConstants().j01 == pytest.approx(special.jn_zeros(0, 1)[0], abs=1e-12)


def test_j0_zero_brackets_against_scipy():
    zeros = j0_zeros(12)
    assert np.allclose(zeros, special.jn_zeros(0, 12), atol=1e-12)
    assert all(abs(z - (k - 0.25) * math.pi) < 1.0 for k, z in enumerate(zeros, start=1))


def test_euler_gamma():
    assert EULER_GAMMA == pytest.approx(np.euler_gamma, abs=1e-16)


def test_exp1_against_scipy():
    x = np.geomspace(1e-8, 50.0, 100)
    assert np.allclose(exp1(x), special.exp1(x), rtol=1e-12)


def test_small_x_expansion_error_order():
    # K0(sqrt2 a) = log(1/a) + log sqrt2 - gamma + O(a^2 log(1/a))
    ratios = []
    for a in (1e-2, 1e-3, 1e-4):
        diff = bessel_k0(math.sqrt(2.0) * a) - k0_small_x_expansion(a)
        ratios.append(abs(diff) / (a * a * math.log(1 / a)))
    assert max(ratios) <= 10.0
    assert ratios[-1] <= ratios[0]


def test_small_x_expansion_is_the_expansion_of_k0_at_2a():
    # without log sqrt2 the two terms expand K0(2a)
    for a in (1e-2, 1e-3):
        shifted = k0_small_x_expansion(a) - 0.5 * math.log(2.0)
        assert abs(bessel_k0(2.0 * a) - shifted) <= 10.0 * a * a * math.log(1 / a)


@pytest.mark.xfail(strict=True, reason="listed value omits the log sqrt2 constant; see ledger")
def test_listed_example_log100_minus_gamma():
    a = 0.01
    assert abs(bessel_k0(math.sqrt(2.0) * a) - (math.log(100.0) - EULER_GAMMA)) <= 10.0 * a * a * math.log(1 / a)


@pytest.mark.xfail(strict=True, reason="true remainder at a = 0.1 is 0.015; see ledger")
def test_listed_example_a_tenth():
    assert abs(bessel_k0(math.sqrt(2.0) * 0.1) - k0_small_x_expansion(0.1)) <= 0.01


def test_small_x_expansion_domain():
    with pytest.raises(DomainError):
        k0_small_x_expansion(0.6)
    with pytest.raises(DomainError):
        k0_small_x_expansion(0.0)


@pytest.mark.parametrize("a", [0.1, 0.5, 1.0, 2.0])
def test_k1_double_integral(a):
    # a K1(a) = int_0^inf e^{-s} int_{a^2/4s}^inf e^{-v} dv ds = int_0^inf e^{-s - a^2/(4s)} ds
    ref = quad(lambda s: math.exp(-s - a * a / (4.0 * s)), 0.0, math.inf, epsabs=0, epsrel=1e-12, limit=200)[0]
    assert a * bessel_k1(a) == pytest.approx(ref, rel=1e-8)


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
def test_derivative_of_r_k1(r):
    h = 1e-5
    fd = ((r + h) * bessel_k1(r + h) - (r - h) * bessel_k1(r - h)) / (2 * h)
    assert fd == pytest.approx(-r * bessel_k0(r), abs=1e-6)


def test_k0_first_moment():
    val = quad(lambda r: r * bessel_k0(r), 0.0, 1.0, epsabs=1e-13)[0] + quad(lambda r: r * bessel_k0(r), 1.0, 60.0,
                                                                             epsabs=1e-13, limit=200)[0]
    assert val == pytest.approx(1.0, abs=1e-8)


def test_j0_zeros_are_roots():
    assert all(abs(bessel_j0(z)) < 1e-10 for z in j0_zeros(10))


def test_k0_against_integral_representation_on_range():
    for x in np.geomspace(1e-4, 50.0, 15):
        top = math.acosh(750.0 / x)
        ref = quad(lambda s: math.exp(-x * math.cosh(s)), 0.0, top, epsabs=0, epsrel=1e-13, limit=400)[0]
        assert bessel_k0(x) == pytest.approx(ref, rel=1e-10)


def test_i0_against_integral_representation():
    for x in np.linspace(0.0, 50.0, 11):
        ref = quad(lambda th: math.exp(x * (math.cos(th) - 1.0)), 0.0, math.pi, epsabs=0, epsrel=1e-13)[0] / math.pi
        assert bessel_i0e(x) == pytest.approx(ref, rel=1e-10)

import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import i0e, k0, rgamma

from bosekit.kernels import (
    FOUR_PI,
    ResolventKernel,
    SBetaDensity,
    bes2_density,
    bes2_occupation,
    exponent_identity_I,
    gaver_stehfest,
    gamma_subordinator_density,
    green_fn,
    heat_kernel,
    laplace_of_limit_kernel,
    limit_kernel_time,
    limit_semigroup_one,
    limit_semigroup_one_laplace,
    phi_b_asymptotic,
    phi_b_inverse,
    phi_b_inverse_closed,
    phi_b_inverse_polar,
    phi_b_remainder,
    sbeta,
)
from bosekit.mollifier import compute_beta, make_bump
from bosekit.specfun import DomainError, EULER_GAMMA
from bosekit.stochastics import McConfig, sample_bes2_hitting

BETA = 4.256851055017991


def test_heat_kernel_at_origin():
    assert heat_kernel(1.0, [0.0, 0.0]) == pytest.approx(1.0 / (2.0 * math.pi), rel=1e-15)


def test_heat_kernel_mass():
    t = 0.6
    radial, _ = integrate.quad(lambda r: 2.0 * math.pi * r * heat_kernel(t, [r, 0.0]), 0.0, np.inf,
                               epsabs=0, epsrel=1e-12)
    assert radial == pytest.approx(1.0, abs=1e-8)


def test_heat_kernel_chapman_kolmogorov():
    rng = np.random.default_rng(5)
    x, z = rng.normal(size=2), rng.normal(size=2)
    s, t = 0.3, 0.7
    # Gaussian product is concentrated within a few units of the segment x-z
    lo, hi = np.minimum(x, z) - 8.0, np.maximum(x, z) + 8.0
    val, _ = integrate.dblquad(lambda y2, y1: heat_kernel(s, x - [y1, y2]) * heat_kernel(t, [y1, y2] - z),
                               lo[0], hi[0], lo[1], hi[1], epsabs=1e-12, epsrel=1e-10)
    assert val == pytest.approx(heat_kernel(s + t, x - z), rel=1e-6)


def test_heat_kernel_rejects_nonpositive_time():
    with pytest.raises(DomainError):
        heat_kernel(0.0, [1.0, 0.0])


def test_green_function_matches_time_quadrature():
    x = np.array([0.6, 0.8])
    direct, _ = integrate.quad(lambda t: math.exp(-t) * heat_kernel(2.0 * t, x), 0.0, np.inf,
                               epsabs=0, epsrel=1e-12, limit=200)
    assert green_fn(1.0, x) == pytest.approx(direct, rel=1e-8)
    assert green_fn(1.0, x) == pytest.approx(k0(1.0) / (2.0 * math.pi), rel=1e-12)


@pytest.mark.parametrize("q", [0.3, 2.0, 9.0])
def test_green_function_scaling(q):
    x = np.array([0.4, -0.25])
    assert green_fn(q, x) == pytest.approx(green_fn(1.0, math.sqrt(q) * x), rel=1e-14)


def _small_x_gap(q, r, const):
    return green_fn(q, [r, 0.0]) - (math.log(1.0 / r) - EULER_GAMMA - const) / (2.0 * math.pi)


@pytest.mark.parametrize("q", [0.5, 1.0, 4.0])
def test_green_function_small_argument(q):
    gaps = [abs(_small_x_gap(q, r, 0.5 * math.log(q / 4.0))) for r in (1e-2, 1e-4, 1e-6)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-10


@pytest.mark.xfail(strict=True, reason="the log(q/2) constant leaves a gap of log(2)/(4 pi)")
def test_green_function_small_argument_half_constant():
    gap = _small_x_gap(1.0, 1e-6, 0.5 * math.log(0.5))
    assert abs(gap) < 1e-6


def test_green_function_domain():
    with pytest.raises(DomainError):
        green_fn(1.0, [0.0, 0.0])
    with pytest.raises(DomainError):
        green_fn(0.0, [1.0, 0.0])


def test_sbeta_reciprocal_gamma_integral():
    inner, _ = integrate.quad(rgamma, 0.0, 40.0, epsabs=0, epsrel=1e-13, limit=200)
    assert sbeta(1.0, 1.0) == pytest.approx(FOUR_PI * inner, rel=1e-10)
    assert sbeta(1.0, 1.0) == pytest.approx(FOUR_PI * 2.8077702, rel=1e-7)


def test_sbeta_laplace_at_e():
    val, err = SBetaDensity(1.0).laplace(math.e, full_output=True)
    assert val == pytest.approx(FOUR_PI, rel=1e-6)
    assert err < 1e-6 * FOUR_PI


@pytest.mark.parametrize("q", [2.0, 5.0, 10.0])
def test_sbeta_laplace_identity(q):
    assert SBetaDensity(1.0).laplace(q) == pytest.approx(FOUR_PI / math.log(q), rel=1e-6)


@pytest.mark.parametrize("tau", [0.1, 1.0, 5.0])
def test_sbeta_gamma_subordinator_form(tau):
    sb = SBetaDensity(1.0)
    assert sb.via_gamma_subordinator(tau) == pytest.approx(sb(tau), rel=1e-10)


def test_sbeta_positive_and_error_reported():
    sb = SBetaDensity(2.0)
    taus = np.geomspace(1e-6, 10.0, 25)
    vals = sb(taus)
    assert np.all(vals > 0)
    val, err = sb(1.0, full_output=True)
    assert err < 1e-10 * val


def test_sbeta_cumulative_matches_density():
    sb = SBetaDensity(1.0)
    direct, _ = integrate.quad(lambda s: sb(s), 0.05, 1.0, epsabs=0, epsrel=1e-12)
    cum = sb.cumulative(np.array([0.05, 1.0]))
    assert cum[1] - cum[0] == pytest.approx(direct, rel=1e-9)
    # the mass near zero is what the u-representation is for; it is still positive
    assert 0.0 < cum[0] < cum[1]


def test_gamma_density_normalized():
    val, _ = integrate.quad(lambda t: gamma_subordinator_density(2.0, 1.0, 3.0, t), 0.0, np.inf,
                            epsabs=0, epsrel=1e-12)
    assert val == pytest.approx(1.0, abs=1e-8)


def test_gamma_density_laplace():
    val, _ = integrate.quad(lambda t: math.exp(-2.0 * t) * gamma_subordinator_density(1.0, 1.0, 1.0, t),
                            0.0, np.inf, epsabs=0, epsrel=1e-12)
    assert val == pytest.approx(1.0 / 3.0, rel=1e-10)


def test_gamma_density_exponential_case():
    t = np.array([0.1, 1.0, 4.0])
    np.testing.assert_allclose(gamma_subordinator_density(1.0, 1.0, 1.0, t), np.exp(-t), rtol=1e-14)


def test_limit_kernel_laplace_consistency():
    x, z = np.array([1.0, 0.0]), np.array([-1.0, 0.0])
    q = 2.0 * BETA
    val = laplace_of_limit_kernel(q, x, z, BETA)
    assert val == pytest.approx(ResolventKernel(BETA, q)(x, z), rel=1e-4)


def test_limit_kernel_error_and_domain():
    val, err = limit_kernel_time(0.5, [1.0, 0.0], [0.0, 1.0], BETA, full_output=True)
    assert val > heat_kernel(1.0, [1.0, -1.0])
    assert err <= 1e-5 * val
    with pytest.raises(DomainError):
        limit_kernel_time(0.5, [1.0, 0.0], [1.0, 0.0], BETA)


def test_resolvent_correction_shrinks_with_beta():
    q = 4.0
    x, z = np.array([0.5, 0.0]), np.array([0.0, 0.7])
    free = green_fn(q, x - z)
    corr = [ResolventKernel(b, q)(x, z) - free for b in (2.0, 1.0, 0.1, 1e-3, 1e-6)]
    assert all(c > 0 for c in corr)
    assert all(a > b for a, b in zip(corr, corr[1:]))


def test_resolvent_needs_q_above_beta():
    with pytest.raises(DomainError):
        ResolventKernel(2.0, 2.0)


def test_limit_semigroup_one_properties():
    x = [1.0, 0.0]
    v1 = limit_semigroup_one(1.0, x, BETA)
    assert v1 >= 1.0
    assert limit_semigroup_one(1.5, x, BETA) > v1
    assert limit_semigroup_one(1e-3, x, BETA, check=False) == pytest.approx(1.0, abs=1e-12)


def test_limit_semigroup_one_dual_method():
    x = [1.0, 0.0]
    value = limit_semigroup_one(1.0, x, BETA, check=False)
    F = lambda p: limit_semigroup_one_laplace(p, 1.0, BETA)
    for order in (14, 16):
        inv = gaver_stehfest(F, 1.0, order, shift=BETA)
        assert abs(inv - value) / value <= 1e-3


def test_gaver_stehfest_inverts_exponential():
    assert gaver_stehfest(lambda p: 1.0 / (p + 1.0), 1.0, 14) == pytest.approx(math.exp(-1.0), rel=1e-5)


def test_bes2_density_at_zero_start():
    t, b = 0.8, np.array([0.2, 1.0, 2.5])
    np.testing.assert_allclose(bes2_density(t, 0.0, b), b / t * np.exp(-b * b / (2 * t)), rtol=1e-14)


def test_bes2_density_matches_scipy_bessel():
    t, a, b = 0.5, 1.3, 0.9
    ref = b / t * math.exp(-(a - b) ** 2 / (2 * t)) * i0e(a * b / t)
    assert bes2_density(t, a, b) == pytest.approx(ref, rel=1e-12)


def test_bes2_density_normalized():
    val, _ = integrate.quad(lambda b: bes2_density(1.0, 0.7, b), 0.0, np.inf, epsabs=0, epsrel=1e-12)
    assert val == pytest.approx(1.0, abs=1e-8)


def test_bes2_chapman_kolmogorov():
    a, b = 0.6, 1.1
    val, _ = integrate.quad(lambda c: bes2_density(0.4, a, c) * bes2_density(0.6, c, b), 0.0, np.inf,
                            epsabs=0, epsrel=1e-11, limit=200)
    assert val == pytest.approx(bes2_density(1.0, a, b), rel=1e-6)


@pytest.mark.parametrize("mu,b", [(1.0, 0.5), (0.01, 1.0), (3.0, 2.0)])
def test_phi_b_inverse_forms_agree(mu, b):
    val, err = phi_b_inverse(mu, b, full_output=True)
    assert val == pytest.approx(phi_b_inverse_closed(mu, b), rel=1e-9)
    assert val == pytest.approx(phi_b_inverse_polar(mu, b), rel=1e-6)
    assert err < 1e-8 * val


def test_phi_b_inverse_against_time_quadrature():
    mu, b = 0.7, 0.8
    f = lambda t: math.exp(-mu * t) * (b / t) * i0e(b * b / t)
    direct, _ = integrate.quad(f, 0.0, np.inf, epsabs=0, epsrel=1e-11, limit=400)
    assert phi_b_inverse(mu, b) == pytest.approx(direct, rel=1e-8)


def test_phi_b_inverse_decreasing_in_mu():
    vals = [phi_b_inverse(mu, 1.0) for mu in (0.01, 0.1, 1.0, 10.0)]
    assert all(v > 0 for v in vals)
    assert all(a > b for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("b", [0.5, 1.0])
def test_phi_b_expansion_remainder_decreases(b):
    rem = [phi_b_remainder(eps, b, 1.0) for eps in (1e-2, 1e-3, 1e-4)]
    assert rem[0] > rem[1] > rem[2]
    eps = 1e-4
    assert phi_b_inverse(eps * eps, b) == pytest.approx(phi_b_asymptotic(eps, b, 1.0), rel=1e-6)


def test_bes2_occupation_zero_at_level():
    assert bes2_occupation(1.0, 1.0, lambda r: np.ones_like(r), support=2.0) == 0.0


def _indicator_unit(r):
    return (np.asarray(r) <= 1.0).astype(float)


def test_bes2_occupation_indicator_example():
    val = bes2_occupation(0.5, 1.0, _indicator_unit, support=1.0)
    inner, _ = integrate.quad(lambda r: math.log(1.0 / r) * r, 0.5, 1.0)
    ref = 2.0 * inner + 2.0 * math.log(2.0) * 0.125
    assert val == pytest.approx(ref, rel=1e-12)
    # expected exit time (b^2 - a^2) / 2
    assert val == pytest.approx(0.375, rel=1e-12)


def test_bes2_occupation_outside_start():
    # F = 1 on [0, 2], level 1 from a = 1.5: direct quadrature of the a > b closed form
    F = lambda r: (np.asarray(r) <= 2.0).astype(float)
    val = bes2_occupation(1.5, 1.0, F, support=2.0, breaks=(2.0,))
    outer, _ = integrate.quad(lambda r: r, 1.5, 2.0)
    mid, _ = integrate.quad(lambda r: math.log(r) * r, 1.0, 1.5)
    assert val == pytest.approx(2.0 * math.log(1.5) * outer + 2.0 * mid, rel=1e-12)


def test_bes2_occupation_monte_carlo():
    times, censored = sample_bes2_hitting(0.5, 1.0, McConfig(n_paths=20_000, seed=3, t_max=50.0))
    assert censored == 0.0
    se = times.std(ddof=1) / math.sqrt(times.size)
    val = bes2_occupation(0.5, 1.0, _indicator_unit, support=1.0)
    assert abs(times.mean() - val) <= 3.0 * se


def test_exponent_identity_vanishes_at_beta():
    phi = make_bump(2, 1.0)
    beta = compute_beta(phi)
    assert abs(exponent_identity_I(beta, 1.0, phi)) <= 1e-5


@pytest.mark.parametrize("lam", [-1.0, 0.5])
def test_exponent_identity_with_shift(lam):
    phi = make_bump(2, 1.0)
    beta = compute_beta(phi, lam)
    assert exponent_identity_I(2.0 * beta, 0.7, phi, lam) == pytest.approx(0.5 * math.log(2.0), abs=1e-5)

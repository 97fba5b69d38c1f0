import math

import numpy as np
import pytest
from scipy import integrate

from bosekit.functionals import (
    AnalyticContinuationError,
    exp2beta_transform_pos,
    hit_transform_down,
    hit_transform_up,
    occupation_transform_neg,
)
from bosekit.kernels import heat_kernel
from bosekit.mollifier import CouplingSchedule, make_bump, make_two_bump
from bosekit.stochastics import (
    DtPolicyError,
    GroundStateProposal,
    McConfig,
    RandomStream,
    duhamel_check,
    estimate_hit_transform,
    fk_two_particle_radial_pde,
    pair_index_set,
    sample_bes2_hitting,
    sample_exp_functional,
    simulate_fk_nbody,
    simulate_fk_two_particle,
    simulate_poisson_representation,
)

PHI = make_bump(2, 1.0)
BETA = 4.256851055017991
X0 = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.5]])


def sched(eps, lam=0.0):
    return CouplingSchedule.build(PHI, eps, lam, strict=False, beta=BETA)


def agree(a, b, n_se=3.0):
    return abs(a.mean - b.mean) <= n_se * math.hypot(a.std_error, b.std_error)


def test_same_seed_is_bit_identical():
    cfg = McConfig(n_paths=4000, seed=11)
    a = simulate_fk_two_particle([0.3, 0.0], 0.2, sched(0.2), PHI, cfg)
    b = simulate_fk_two_particle([0.3, 0.0], 0.2, sched(0.2), PHI, cfg)
    assert (a.mean, a.std_error, a.weight_max) == (b.mean, b.std_error, b.weight_max)


def test_thread_count_does_not_change_result():
    cfg = McConfig(n_paths=4000, seed=11, n_streams=4)
    a = simulate_fk_two_particle([0.3, 0.0], 0.2, sched(0.2), PHI, cfg.with_(threads=1))
    b = simulate_fk_two_particle([0.3, 0.0], 0.2, sched(0.2), PHI, cfg.with_(threads=4))
    assert a.mean == b.mean and a.std_error == b.std_error


def test_streams_differ_and_are_reproducible():
    g1 = RandomStream(5, 0).generator().random(4)
    g2 = RandomStream(5, 1).generator().random(4)
    assert not np.array_equal(g1, g2)
    np.testing.assert_array_equal(g1, RandomStream(5, 0).generator().random(4))


def test_config_validation():
    with pytest.raises(ValueError):
        McConfig(n_paths=0)
    with pytest.raises(ValueError):
        McConfig(dt_policy="adaptive")
    with pytest.raises(DtPolicyError):
        simulate_fk_two_particle([1.0, 0.0], 0.1, sched(0.2), PHI, McConfig(n_paths=10, dt_factor=0.2))
    with pytest.raises(DtPolicyError):
        simulate_fk_two_particle([1.0, 0.0], 0.1, sched(0.2), PHI,
                                 McConfig(n_paths=10, dt_policy="fixed", dt=0.01))


def test_increment_moments():
    # with zero potential the endpoint is x + sqrt(2) W_t
    x, t = np.array([0.4, -0.2]), 0.3
    cfg = McConfig(n_paths=40_000, seed=2)
    s = sched(0.2)
    mean = simulate_fk_two_particle(x, t, s, None, cfg, f=lambda y: y[:, 0])
    var = simulate_fk_two_particle(x, t, s, None, cfg, f=lambda y: (y[:, 0] - x[0]) ** 2)
    assert abs(mean.mean - x[0]) <= 4.0 * mean.std_error
    assert abs(var.mean - 2.0 * t) <= 4.0 * var.std_error


def test_zero_potential_matches_heat_kernel():
    x, t = np.array([0.5, 0.2]), 0.4
    f = lambda y: np.exp(-np.sum(y * y, axis=-1) / 2.0)
    est = simulate_fk_two_particle(x, t, sched(0.2), None, McConfig(n_paths=20_000, seed=3), f=f)
    ref, _ = integrate.dblquad(lambda y2, y1: heat_kernel(2.0 * t, np.array([y1, y2]) - x) * f(np.array([y1, y2])),
                               -10, 10, -10, 10, epsabs=1e-12)
    assert est.within(ref)


def test_far_start_is_nearly_one():
    est = simulate_fk_two_particle([6.0, 0.0], 0.05, sched(0.1), PHI, McConfig(n_paths=2000, seed=4))
    assert abs(est.mean - 1.0) <= max(3.0 * est.std_error, 1e-14)


def test_ground_state_log_ratio_matches_step():
    s = sched(0.2)
    prop = GroundStateProposal.build(PHI, 0.2, s.lambda_eps)
    rng = np.random.default_rng(0)
    y = rng.normal(scale=0.2, size=(500, 2))
    h = 0.1 * 0.04
    d, lr = prop.step(y, h, rng)
    np.testing.assert_allclose(prop.log_ratio(y, d, h), lr, rtol=1e-10, atol=1e-12)
    assert prop.energy > 0


def test_ground_state_needs_radial_mollifier():
    with pytest.raises(ValueError):
        GroundStateProposal.build(make_two_bump(2, 1.0, 0.3), 0.2, 1.0)


def test_importance_sampling_agrees_with_plain():
    # start outside the well, where plain sampling still sees its rare paths
    x, t = [1.0, 0.0], 0.3
    cfg = McConfig(n_paths=20_000, seed=5)
    plain = simulate_fk_two_particle(x, t, sched(0.2), PHI, cfg)
    gs = simulate_fk_two_particle(x, t, sched(0.2), PHI, cfg.with_(seed=6), importance="ground-state")
    assert agree(plain, gs)
    with pytest.raises(ValueError):
        simulate_fk_two_particle(x, t, sched(0.2), PHI, cfg, importance="other")


def test_importance_sampling_reduces_error_inside_well():
    x, t = [0.3, 0.0], 0.5
    cfg = McConfig(n_paths=20_000, seed=5)
    plain = simulate_fk_two_particle(x, t, sched(0.2), PHI, cfg)
    gs = simulate_fk_two_particle(x, t, sched(0.2), PHI, cfg.with_(seed=6), importance="ground-state")
    assert gs.std_error < plain.std_error
    assert gs.weight_max < plain.weight_max


def test_ground_state_refuses_repulsive_coupling():
    with pytest.raises(ValueError, match="attractive"):
        simulate_fk_two_particle([0.3, 0.0], 0.1, sched(0.2, lam=-3.0), PHI, McConfig(n_paths=10),
                                 importance="ground-state")


def test_duhamel_consistency():
    out = duhamel_check([0.3, 0.0], 0.3, sched(0.2), PHI, McConfig(n_paths=20_000, seed=7))
    assert abs(out["difference"]) <= 3.0 * out["combined_se"]


def test_halving_dt_moves_estimate_by_less_than_two_se():
    x, t = [0.5, 0.0], 0.5
    cfg = McConfig(n_paths=20_000, seed=8)
    coarse = simulate_fk_two_particle(x, t, sched(0.2), PHI, cfg, importance="ground-state")
    fine = simulate_fk_two_particle(x, t, sched(0.2), PHI, cfg.with_(dt_factor=0.05), importance="ground-state")
    assert agree(coarse, fine, 2.0)


def test_radial_pde_agrees_with_monte_carlo():
    s = sched(0.2)
    pde = fk_two_particle_radial_pde(1.0, 0.5, s.lambda_eps, PHI.scaled(0.2))
    est = simulate_fk_two_particle([1.0, 0.0], 0.5, s, PHI, McConfig(n_paths=20_000, seed=9),
                                   importance="ground-state")
    assert est.within(pde)


def test_radial_pde_without_coupling_is_one():
    assert fk_two_particle_radial_pde(1.0, 0.5, 0.0, PHI.scaled(0.2)) == pytest.approx(1.0, abs=1e-10)


def test_pair_index_set():
    assert pair_index_set(3) == [(1, 0), (2, 0), (2, 1)]
    assert len(pair_index_set(5)) == 10


def test_nbody_zero_potential():
    t = 0.4
    f = lambda b: np.exp(-np.sum(b[:, 0, :] ** 2, axis=-1) / 2.0)
    est = simulate_fk_nbody(X0 + 0.3, t, sched(0.2), None, McConfig(n_paths=20_000, seed=10), f=f)
    r2 = float(np.sum((X0[0] + 0.3) ** 2))
    assert est.within(math.exp(-r2 / (2.0 * (1.0 + t))) / (1.0 + t))


def test_nbody_permutation_symmetry():
    cfg = McConfig(n_paths=10_000, seed=12)
    a = simulate_fk_nbody(X0, 0.3, sched(0.2), PHI, cfg)
    b = simulate_fk_nbody(X0[[2, 0, 1]], 0.3, sched(0.2), PHI, cfg.with_(seed=13))
    assert agree(a, b)


def test_nbody_weight_at_least_one():
    est = simulate_fk_nbody(X0, 0.3, sched(0.2), PHI, McConfig(n_paths=5000, seed=14))
    assert est.mean >= 1.0 - 3.0 * est.std_error


def test_nbody_mixture_importance_agrees_with_plain():
    cfg = McConfig(n_paths=10_000, seed=15)
    # close pair (0, 1) so the interaction matters within t
    x0 = np.array([[0.0, 0.0], [0.3, 0.0], [0.0, 1.5]])
    plain = simulate_fk_nbody(x0, 0.5, sched(0.2), PHI, cfg)
    mix = simulate_fk_nbody(x0, 0.5, sched(0.2), PHI, cfg.with_(seed=16), importance="pair-ground-state")
    assert mix.extra["importance"] == "pair-ground-state"
    assert agree(plain, mix)


def test_nbody_validation():
    cfg = McConfig(n_paths=10)
    with pytest.raises(ValueError):
        simulate_fk_nbody(X0[:2], 0.1, sched(0.2), PHI, cfg)
    with pytest.raises(ValueError):
        simulate_fk_nbody(np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]]), 0.1, sched(0.2), PHI, cfg)
    with pytest.raises(ValueError):
        simulate_fk_nbody(X0, 0.1, sched(0.2), PHI, cfg, importance="ground-state")


def test_hitting_time_at_level_is_zero():
    times, censored = sample_bes2_hitting(1.0, 1.0, McConfig(n_paths=10))
    assert np.all(times == 0.0) and censored == 0.0
    assert estimate_hit_transform(1.0, 1.0, 0.5, McConfig(n_paths=10)).mean == 1.0


HIT_CFG = McConfig(n_paths=30_000, seed=21)


def test_hit_transform_downward():
    est = estimate_hit_transform(2.0, 1.0, 0.5, HIT_CFG)
    assert est.within(hit_transform_down(2.0, 1.0, 0.5))
    assert est.extra["censored"] < 1e-3


def test_hit_transform_upward():
    est = estimate_hit_transform(0.5, 1.0, 0.5, HIT_CFG)
    assert est.within(hit_transform_up(0.5, 1.0, 0.5))


def test_indicator_functional_negative_exponent():
    est = sample_exp_functional("indicator-below-M", 1.5, 1.0, 2.0, -0.3, HIT_CFG)
    assert est.within(occupation_transform_neg(1.5, 1.0, 2.0, 0.3))


def test_exp2beta_functional_positive_exponent():
    est = sample_exp_functional("exp-2beta", 0.3, 0.6, 0.0, 1.0, HIT_CFG)
    assert est.within(exp2beta_transform_pos(0.3, 0.6, 1.0))


def test_exp_functional_trivial_and_refused():
    assert sample_exp_functional("exp-2beta", 0.3, 0.6, 0.0, 0.0, McConfig(n_paths=10)).mean == 1.0
    with pytest.raises(AnalyticContinuationError, match="j01"):
        sample_exp_functional("exp-2beta", 0.3, 2.0, 0.0, 1.0, McConfig(n_paths=10))
    with pytest.raises(AnalyticContinuationError, match="violated"):
        sample_exp_functional("indicator-below-M", 1.5, 0.2, 2.0, 1.0, McConfig(n_paths=10))
    with pytest.raises(ValueError):
        sample_exp_functional("other", 1.0, 1.0, 1.0, 1.0, McConfig(n_paths=10))


POISSON_CFG = McConfig(n_paths=40_000, seed=31)


def test_poisson_constant_field():
    est = simulate_poisson_representation(lambda i, r: 0.4 + 0.0 * r, 2.0, 1.0, 3, POISSON_CFG,
                                          antiderivative=lambda i, a, b: 0.4 * (b - a))
    assert est.within(math.exp(1.2))


def test_poisson_linear_field():
    est = simulate_poisson_representation(lambda i, r: 0.4 * r, 2.0, 1.0, 3, POISSON_CFG)
    assert est.within(math.exp(3 * 0.4 / 2.0))


def test_poisson_zero_field():
    est = simulate_poisson_representation(lambda i, r: 0.0 * r, 2.0, 1.0, 3, POISSON_CFG)
    assert est.within(1.0)


def test_poisson_pair_dependent_field():
    # one pair only: the exponent is c t for that pair and zero for the others
    c = np.array([0.9, 0.0, 0.0])
    est = simulate_poisson_representation(lambda i, r: c[i] + 0.0 * r, 2.0, 1.0, 3, POISSON_CFG)
    assert est.within(math.exp(0.9))

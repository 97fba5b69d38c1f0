"""Acceptance checks, one function per criterion.

Each check returns a ``Check`` with a pass flag, a short detail string, the
measured runtime and its budget in seconds.  The pytest suite and the
``selftest`` subcommand both run these.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .functionals import (exp2beta_transform_pos, exp2beta_transform_pos_bessel, hit_transform_down,
                          hit_transform_up, occupation_transform_neg)
from .kernels import (FOUR_PI, ResolventKernel, SBetaDensity, exponent_identity_I, laplace_of_limit_kernel,
                      limit_semigroup_one, phi_b_remainder)
from .mollifier import (CouplingSchedule, RadialDecomposition, circle_log_integral, compute_beta, lambda_eps,
                        make_bump, make_two_bump)
from .multiparticle import (SeriesBoundViolation, csz_phi_recursion, geometric_majorant, limit_series_terms,
                            unit_cube_product_integral)
from .specfun import bessel_i0, bessel_k0
from .stochastics import (McConfig, estimate_hit_transform, fk_two_particle_radial_pde, sample_exp_functional,
                          simulate_fk_two_particle, simulate_poisson_representation)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    runtime: float
    budget: float
    data: dict = field(default_factory=dict)

    @property
    def on_time(self) -> bool:
        return self.runtime <= self.budget

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        clock = f"{self.runtime:.1f}s/{self.budget:g}s"
        if not self.on_time:
            clock += " over budget"
        return f"[{mark}] {self.name}: {self.detail} ({clock})"


def _timed(name: str, budget: float):
    def wrap(fn):
        def run(*args, **kw):
            t0 = time.perf_counter()
            passed, detail, data = fn(*args, **kw)
            return Check(name, bool(passed), detail, time.perf_counter() - t0, budget, data)
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        run.check_name = name
        run.budget = budget
        return run
    return wrap


@_timed("sbeta-laplace", 2.0)
def criterion_1():
    """Laplace transform of sbeta at beta = 1 against 4 pi / log(q / beta)."""
    sb = SBetaDensity(1.0)
    rows = {}
    for label, q in (("2", 2.0), ("e", math.e), ("5", 5.0), ("10", 10.0)):
        target = FOUR_PI / math.log(q)
        rows[label] = abs(sb.laplace(q) - target) / target
    worst = max(rows.values())
    return worst <= 1e-6, f"max rel err {worst:.2e} over q in {{2, e, 5, 10}}", rows


@_timed("resolvent-vs-time-kernel", 60.0)
def criterion_2():
    """Numerical Laplace transform of the time-domain kernel against the resolvent kernel."""
    beta = compute_beta(make_bump(2, 1.0))
    pairs = (((1.0, 0.0), (-1.0, 0.0)), ((0.5, 0.5), (0.3, -0.8)))
    errs = {}
    for q in (2.0 * beta, 4.0 * beta):
        R = ResolventKernel(beta, q)
        for x, z in pairs:
            ref = R(x, z)
            errs[(round(q / beta), x, z)] = abs(laplace_of_limit_kernel(q, x, z, beta) - ref) / abs(ref)
    worst = max(errs.values())
    return worst <= 1e-4, f"max rel err {worst:.2e} at q in {{2b, 4b}}", {str(k): v for k, v in errs.items()}


@_timed("exponent-identity", 30.0)
def criterion_3():
    """I(q) = log(q / beta) / 2 and its independence of the level b."""
    out = {}
    worst_id = worst_b = 0.0
    for label, phi in (("bump", make_bump(2, 1.0)), ("two-bump", make_two_bump(2, 1.0, 0.3))):
        beta = compute_beta(phi)
        for mult in (1.0, 2.0, 4.0):
            q = mult * beta
            i1 = exponent_identity_I(q, 1.0, phi)
            i_half = exponent_identity_I(q, 0.5, phi)
            d_id = abs(i1 - 0.5 * math.log(mult))
            d_b = abs(i_half - i1)
            out[f"{label} q={mult:g}b"] = (d_id, d_b)
            worst_id, worst_b = max(worst_id, d_id), max(worst_b, d_b)
    ok = worst_id <= 1e-5 and worst_b <= 1e-5
    return ok, f"identity err {worst_id:.2e}, b-spread {worst_b:.2e}", out


@_timed("phib-asymptotics", 10.0)
def criterion_4():
    """Remainder of the two-term expansion of 1/Phi_b, divided by b, shrinks as eps decreases."""
    out = {}
    ok = True
    for b in (0.5, 1.0):
        rem = [phi_b_remainder(eps, b, 1.0) for eps in (1e-2, 1e-3, 1e-4)]
        out[b] = rem
        ok &= all(r1 < r0 for r0, r1 in zip(rem, rem[1:]))
    detail = "; ".join(f"b={b:g}: " + ", ".join(f"{r:.2e}" for r in v) for b, v in out.items())
    return ok, detail, out


def _k0_integral(x: float) -> float:
    from scipy.integrate import quad
    # the integrand is below e^-750 beyond this point
    top = math.acosh(750.0 / x)
    return quad(lambda s: math.exp(-x * math.cosh(s)), 0.0, top, epsabs=0.0, epsrel=1e-13, limit=200)[0]


def _i0_integral(x: float) -> float:
    from scipy.integrate import quad
    return quad(lambda th: math.exp(x * math.cos(th)), 0.0, math.pi, epsabs=0.0, epsrel=1e-13)[0] / math.pi


@_timed("bessel-functionals", 300.0)
def criterion_5(n_paths: int = 100_000, seed: int = 0):
    """Four Monte Carlo estimates against closed forms, and closed forms against integral representations."""
    cfg = McConfig(n_paths=n_paths, seed=seed)
    cases = {
        "hit1": (hit_transform_down(2.0, 1.0, 0.5), lambda: estimate_hit_transform(2.0, 1.0, 0.5, cfg)),
        "hit2": (hit_transform_up(0.5, 1.0, 0.5), lambda: estimate_hit_transform(0.5, 1.0, 0.5, cfg)),
        "prob1": (occupation_transform_neg(1.5, 1.0, 2.0, 0.3),
                  lambda: sample_exp_functional("indicator-below-M", 1.5, 1.0, 2.0, -0.3, cfg)),
        "prob4": (exp2beta_transform_pos(0.3, 0.6, 1.0),
                  lambda: sample_exp_functional("exp-2beta", 0.3, 0.6, 0.0, 1.0, cfg)),
    }
    out = {}
    ok = True
    for key, (exact, mc) in cases.items():
        est = mc()
        z = abs(est.mean - exact) / est.std_error if est.std_error > 0 else math.inf
        out[key] = {"exact": exact, "mc": est.mean, "se": est.std_error, "z": z}
        ok &= z <= 3.0

    # closed forms against their integral representations, at the arguments used above
    rep = 0.0
    for x in (2.0, 1.0):
        rep = max(rep, abs(bessel_k0(x) - _k0_integral(x)) / _k0_integral(x))
    for x in (0.5, 1.0):
        rep = max(rep, abs(bessel_i0(x) - _i0_integral(x)) / _i0_integral(x))
    rep = max(rep, abs(exp2beta_transform_pos(0.3, 0.6, 1.0) - exp2beta_transform_pos_bessel(0.3, 0.6, 1.0)))
    out["representations"] = rep
    ok &= rep <= 1e-10
    zs = ", ".join(f"{k} z={v['z']:.2f}" for k, v in out.items() if k != "representations")
    return ok, f"{zs}; representation err {rep:.1e}", out


@_timed("poisson-representation", 30.0)
def criterion_6(n_paths: int = 100_000, seed: int = 0):
    """Poisson-chain representation for N = 3 against the exact exponential."""
    cfg = McConfig(n_paths=n_paths, seed=seed)
    const = simulate_poisson_representation(lambda i, r: 0.4 + 0.0 * r, 2.0, 1.0, 3, cfg,
                                            antiderivative=lambda i, a, b: 0.4 * (b - a))
    linear = simulate_poisson_representation(lambda i, r: 0.4 * r, 2.0, 1.0, 3, cfg)
    out = {}
    ok = True
    for key, est, exact in (("constant", const, math.exp(1.2)), ("linear", linear, math.exp(0.6))):
        z = abs(est.mean - exact) / est.std_error
        out[key] = {"exact": exact, "mc": est.mean, "se": est.std_error, "z": z}
        ok &= z <= 3.0
    return ok, ", ".join(f"{k} z={v['z']:.2f}" for k, v in out.items()), out


@_timed("csz-recursion", 20.0)
def criterion_7():
    """Bound on the CSZ functions, the closed form at k = 1, and the cube integrals."""
    worst = 0.0
    for k in range(1, 7):
        for v in (0.01, 0.1, 0.5, 0.9):
            worst = max(worst, csz_phi_recursion(k, v) * math.sqrt(v) / (32.0 ** k * math.e))
    phi1 = csz_phi_recursion(1, 1.0)
    closed = 2.0 * math.log(1.0 + math.sqrt(2.0))
    cube = {m: (unit_cube_product_integral(m), 2.0 * math.e * 32.0 ** (m - 1)) for m in range(1, 5)}
    ok = worst <= 1.0 and abs(phi1 - closed) <= 1e-8 and all(val <= bd for val, bd in cube.values())
    detail = f"max phi_k sqrt(v)/(32^k e) = {worst:.3f}, |phi_1(1) - 2ln(1+sqrt2)| = {abs(phi1 - closed):.1e}"
    return ok, detail, {"ratio_max": worst, "phi1": phi1, "cube": cube}


SERIES_X0 = ((0.0, 0.0), (1.0, 0.0), (0.0, 1.5))


@_timed("series-bounds", 300.0)
def criterion_8():
    """N = 3 limit series terms (m <= 2) under their bounds, and the geometric majorant.

    The term bound needs max(m, 2) > beta, so the bump is taken at lam = -1.
    """
    beta = compute_beta(make_bump(2, 1.0), -1.0)
    x0 = np.asarray(SERIES_X0)
    try:
        res = limit_series_terms(3, x0, 1.0, beta, m_max=2)
    except SeriesBoundViolation as exc:
        return False, f"bound violated: {exc}", {}
    # the admissible q makes 32 * 4 pi / log(q / beta) = 1/2
    log_q = 32.0 * FOUR_PI * 2.0
    maj = {m: (geometric_majorant(m, log_q), 2.0 * 0.75 ** m) for m in range(1, 7)}
    ok = all(a <= b for a, b in maj.values())
    terms = ", ".join(f"m={m}: {t:.4g} <= {b:.4g}" for m, (t, b) in enumerate(zip(res.terms, res.bounds)))
    return ok, f"{terms}; majorant ok up to m=6", {"terms": res.terms, "bounds": res.bounds, "majorant": maj,
                                                   "tail": res.tail_label}


TREND_EPS = (0.2, 0.1, 0.05)


@_timed("two-particle-trend", 1800.0)
def criterion_9(n_paths: int = 100_000, seed: int = 1, with_pde: bool = True):
    """Distance of the two-particle FK estimate to the limit semigroup along the eps grid.

    Trend only: d_{k+1} <= d_k + 3 sqrt(se_k^2 + se_{k+1}^2).  The radial PDE
    value of the continuous-time expectation is reported alongside.
    """
    phi = make_bump(2, 1.0)
    beta = compute_beta(phi)
    x = np.array([1.0, 0.0])
    limit = limit_semigroup_one(1.0, x, beta)
    cfg = McConfig(n_paths=n_paths, seed=seed, dt_factor=0.1)
    rows = []
    for eps in TREND_EPS:
        sched = CouplingSchedule.build(phi, eps, 0.0, strict=False, beta=beta)
        est = simulate_fk_two_particle(x, 1.0, sched, phi, cfg, importance="ground-state")
        row = {"eps": eps, "mc": est.mean, "se": est.std_error, "dist": abs(est.mean - limit)}
        if with_pde:
            row["pde"] = fk_two_particle_radial_pde(1.0, 1.0, sched.lambda_eps, phi.scaled(eps))
        rows.append(row)
    ok = all(b["dist"] <= a["dist"] + 3.0 * math.hypot(a["se"], b["se"]) for a, b in zip(rows, rows[1:]))
    detail = "limit {:.4f}; ".format(limit) + ", ".join(f"eps={r['eps']:g}: |d|={r['dist']:.2f}+-{r['se']:.2f}"
                                                       for r in rows)
    return ok, detail, {"limit": limit, "rows": rows}


def _angular_integral(phi, r: float) -> float:
    """int_{-pi}^{pi} phi(r e^{i th}) dth by adaptive quadrature, split where the circle meets a support edge."""
    from scipy.integrate import quad

    pts = []
    for cx, cy in phi._centers:
        d = math.hypot(cx, cy)
        if d == 0.0:
            continue
        kappa = (r * r + d * d - phi.radius ** 2) / (2.0 * r * d)
        if -1.0 < kappa < 1.0:
            a = math.atan2(cy, cx)
            h = math.acos(kappa)
            pts += [(a + s * h + math.pi) % (2.0 * math.pi) - math.pi for s in (-1.0, 1.0)]
    f = lambda th: float(phi(np.array([r * math.cos(th), r * math.sin(th)])))
    return quad(f, -math.pi, math.pi, points=sorted(pts) or None, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


@_timed("mollifier-identities", 5.0)
def criterion_10():
    """Harmonic circle integral, mean-zero fluctuation and positivity of the corrected radial part."""
    harm = max(abs(circle_log_integral(r)) for r in (0.0, 0.3, 0.9, 1.0))

    phi = make_two_bump(2, 1.0, 0.3)
    dec = RadialDecomposition(phi, 0.0)
    edges = sorted({0.0, phi.support_radius, *dec.breaks})
    r_nodes, r_w = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        s, w = np.polynomial.legendre.leggauss(16)
        r_nodes.append(0.5 * (b - a) * s + 0.5 * (a + b))
        r_w.append(0.5 * (b - a) * w)
    r_nodes, r_w = np.concatenate(r_nodes), np.concatenate(r_w)
    hat_ring = np.array([_angular_integral(phi, r) for r in r_nodes]) - 2.0 * math.pi * dec.radial_part(r_nodes)
    mean_zero = {name: abs(float(np.sum(r_w * r_nodes * H(r_nodes) * hat_ring)))
                 for name, H in (("1", np.ones_like), ("|z|", lambda r: r), ("|z|^2", lambda r: r * r))}

    grid = np.linspace(0.0, phi.support_radius, 201)
    corr = RadialDecomposition(phi, lambda_eps(1e-4)).corrected(grid)
    low = float(np.min(corr))

    ok = harm <= 1e-8 and max(mean_zero.values()) <= 1e-8 and low >= -1e-12
    detail = f"harmonic {harm:.1e}, mean-zero {max(mean_zero.values()):.1e}, min corrected {low:.3g}"
    return ok, detail, {"harmonic": harm, "mean_zero": mean_zero, "min_corrected": low}


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
            criterion_8, criterion_9, criterion_10)


def run_all(skip: tuple = (), report=print) -> list[Check]:
    out = []
    for i, fn in enumerate(CRITERIA, start=1):
        if i in skip:
            continue
        chk = fn()
        out.append(chk)
        if report is not None:
            report(f"{i:2d} " + chk.line())
    return out

"""Seeded, stream-parallel Monte Carlo estimators.

Every estimator splits ``n_paths`` over ``n_streams`` counter-based (Philox)
generators keyed by (seed, stream id).  Streams may run on a thread pool, but
per-path samples are concatenated in stream-id order before any reduction, so
results depend only on (seed, n_streams, n_paths).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np

from .functionals import ContinuationDomain
from .mollifier import CouplingSchedule, Mollifier
from .specfun import J01, bessel_k0e, bessel_k1e

HEAVY_TAIL_LOG_WEIGHT = 20.0


class DtPolicyError(ValueError):
    """Time step too coarse to resolve the support of the scaled mollifier."""


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo settings.

    ``dt_policy`` is "resolve-support" (dt = dt_factor * eps^2, dt_factor <= 0.1)
    or "fixed" (dt as given).  ``threads`` caps the worker pool; None reads
    BOSEKIT_THREADS and falls back to one thread.
    """

    n_paths: int = 100_000
    seed: int = 0
    n_streams: int = 8
    dt_policy: str = "resolve-support"
    dt_factor: float = 0.1
    dt: float = 1e-3
    t_max: float = 200.0
    threads: int | None = None
    batch: int = 25_000

    def __post_init__(self):
        if self.n_paths < 1 or self.n_streams < 1:
            raise ValueError("n_paths and n_streams must be positive")
        if self.dt_policy not in {"resolve-support", "fixed"}:
            raise ValueError(f"unknown dt policy {self.dt_policy!r}")

    def step(self, eps: float | None = None) -> float:
        if self.dt_policy == "fixed" or eps is None:
            return self.dt
        return self.dt_factor * eps * eps

    def worker_count(self) -> int:
        if self.threads is not None:
            return max(1, int(self.threads))
        env = os.environ.get("BOSEKIT_THREADS")
        return max(1, int(env)) if env else 1

    def with_(self, **kw) -> "McConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class RandomStream:
    """Generator for stream ``stream_id`` of a run seeded by ``seed``."""

    seed: int
    stream_id: int

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.Philox(ss))


@dataclass
class FkEstimate:
    mean: float
    std_error: float
    n_paths: int
    weight_max: float = 1.0
    flags: tuple = ()
    extra: dict = field(default_factory=dict)

    @property
    def heavy_tail(self) -> bool:
        return "heavy-tail" in self.flags

    def within(self, target: float, n_se: float = 3.0) -> bool:
        return abs(self.mean - target) <= n_se * self.std_error

    def as_dict(self) -> dict:
        return {"mean": self.mean, "std_error": self.std_error, "n_paths": self.n_paths,
                "weight_max": self.weight_max, "flags": list(self.flags), **self.extra}


def _split(n: int, k: int) -> list[int]:
    base, rem = divmod(n, k)
    return [base + (1 if i < rem else 0) for i in range(k)]


def run_streams(cfg: McConfig, worker) -> list:
    """Call worker(rng, n) for each stream and return results in stream order."""
    sizes = _split(cfg.n_paths, cfg.n_streams)
    jobs = [(RandomStream(cfg.seed, i), n) for i, n in enumerate(sizes) if n > 0]

    def call(job):
        stream, n = job
        return worker(stream.generator(), n)

    workers = cfg.worker_count()
    if workers == 1:
        return [call(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(call, jobs))


def _summarize(samples: np.ndarray, weight_max: float = 1.0, flags=(), **extra) -> FkEstimate:
    n = samples.size
    mean = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    flags = tuple(flags)
    if weight_max > math.exp(HEAVY_TAIL_LOG_WEIGHT):
        flags = flags + ("heavy-tail",)
    return FkEstimate(mean, se, n, weight_max, flags, dict(extra))


def _batches(n: int, size: int):
    done = 0
    while done < n:
        m = min(size, n - done)
        yield m
        done += m


# ---------------------------------------------------------------- ground-state proposal

@dataclass(frozen=True)
class GroundStateProposal:
    """Gaussian step proposal built from the ground state psi of Laplacian + Lambda_eps phi_eps.

    psi > 0 solves psi'' + psi'/r = (E0 - Lambda_eps phi_eps) psi with
    psi ~ K0(sqrt(E0) r) outside the support; E0 > 0 comes from shooting.
    Radial mollifiers only.

    From y the step is drawn from the Gaussian fitted to p_h(y' - y) psi(y'):
    precision I / 2h - H and mean shift (I / 2h - H)^{-1} grad log psi, with H
    the Hessian of log psi.  Mean and covariance depend on y alone, so the
    likelihood ratio against the plain step N(0, 2h I) is exact and the
    reweighted walk targets the same discretized expectation.
    """

    energy: float
    support: float
    grid: np.ndarray
    slope: np.ndarray        # (log psi)'
    slope_over_r: np.ndarray
    curvature: np.ndarray    # (log psi)''

    @classmethod
    def build(cls, phi: Mollifier, eps: float, lambda_eps: float, n_grid: int = 4001) -> "GroundStateProposal":
        from scipy.integrate import solve_ivp
        from scipy.optimize import brentq

        if not phi.is_radial:
            raise ValueError("the ground-state proposal needs a radial mollifier")
        R = phi.support_radius
        peak = lambda_eps * float(phi.radial_profile(np.array(0.0)))
        if peak <= 0:
            raise ValueError("the ground-state proposal needs attractive coupling (Lambda_eps > 0)")

        # unit-scale problem in rho = r / eps with e = E0 eps^2
        def shoot(e, grid=None):
            def rhs(r, y):
                return [y[1], (e - lambda_eps * float(phi.radial_profile(np.array(r)))) * y[0] - y[1] / r]
            r0 = 1e-8 * R
            a = (e - peak) / 4.0
            return solve_ivp(rhs, (r0, R), [1.0 + a * r0 * r0, 2.0 * a * r0], method="DOP853",
                             rtol=1e-11, atol=1e-14, t_eval=grid)

        def mismatch(log_e):
            e = math.exp(log_e)
            y = shoot(e).y[:, -1]
            k = math.sqrt(e)
            return y[1] / y[0] + k * float(bessel_k1e(k * R) / bessel_k0e(k * R))

        e = math.exp(brentq(mismatch, -60.0, math.log(peak), xtol=1e-14))
        k = math.sqrt(e)
        rho = np.linspace(1e-8 * R, R, n_grid)
        sol = shoot(e, rho)
        g_in = sol.y[1] / sol.y[0]
        # outer ratio K1/K0 tabulated geometrically so steps avoid Bessel calls
        far = R * np.geomspace(1.0, 1e4, n_grid)[1:]
        g_out = -k * bessel_k1e(k * far) / bessel_k0e(k * far)
        rr = np.concatenate([rho, far])
        g = np.concatenate([g_in, g_out])
        pot = np.concatenate([lambda_eps * phi.radial_profile(rho), np.zeros_like(far)])
        curv = e - pot - g / rr - g * g
        return cls(e / eps ** 2, R * eps, rr * eps, g / eps, g / rr / eps ** 2, curv / eps ** 2)

    def _frame(self, y: np.ndarray, h: float):
        r = np.hypot(y[:, 0], y[:, 1])
        g = np.interp(r, self.grid, self.slope)
        lam_t = np.interp(r, self.grid, self.slope_over_r)
        lam_r = np.interp(r, self.grid, self.curvature)
        at_origin = r == 0
        radial = np.where(at_origin[:, None], [1.0, 0.0], y / np.where(at_origin, 1.0, r)[:, None])
        tangent = np.stack([-radial[:, 1], radial[:, 0]], axis=-1)
        var_r = 2.0 * h / np.maximum(1.0 - 2.0 * h * lam_r, 0.25)
        var_t = 2.0 * h / np.maximum(1.0 - 2.0 * h * lam_t, 0.25)
        return g, var_r, var_t, radial, tangent

    def log_ratio(self, y: np.ndarray, d: np.ndarray, h: float) -> np.ndarray:
        """log[p_h(d) / q(d | y)] for given increments d (n, 2)."""
        g, var_r, var_t, radial, tangent = self._frame(y, h)
        d_r = np.sum(d * radial, axis=-1)
        d_t = np.sum(d * tangent, axis=-1)
        log_p = -(d_r * d_r + d_t * d_t) / (4.0 * h) - math.log(4.0 * math.pi * h)
        zr = (d_r - var_r * g) / np.sqrt(var_r)
        log_q = -0.5 * (zr * zr + d_t * d_t / var_t) - math.log(2.0 * math.pi) - 0.5 * np.log(var_r * var_t)
        return log_p - log_q

    def step(self, y: np.ndarray, h: float, rng) -> tuple[np.ndarray, np.ndarray]:
        """Proposed increments (n, 2) and log[p_h / q](increment) per path."""
        n = y.shape[0]
        r = np.hypot(y[:, 0], y[:, 1])
        g = np.interp(r, self.grid, self.slope)
        lam_t = np.interp(r, self.grid, self.slope_over_r)
        lam_r = np.interp(r, self.grid, self.curvature)
        at_origin = r == 0
        radial = np.where(at_origin[:, None], [1.0, 0.0], y / np.where(at_origin, 1.0, r)[:, None])
        tangent = np.stack([-radial[:, 1], radial[:, 0]], axis=-1)
        # convex spots of log psi would make the fitted precision singular
        var_r = 2.0 * h / np.maximum(1.0 - 2.0 * h * lam_r, 0.25)
        var_t = 2.0 * h / np.maximum(1.0 - 2.0 * h * lam_t, 0.25)
        z = rng.standard_normal((n, 2))
        d_r = var_r * g + np.sqrt(var_r) * z[:, 0]
        d_t = np.sqrt(var_t) * z[:, 1]
        log_p = -(d_r * d_r + d_t * d_t) / (4.0 * h) - math.log(4.0 * math.pi * h)
        log_q = -0.5 * np.sum(z * z, axis=-1) - math.log(2.0 * math.pi) - 0.5 * np.log(var_r * var_t)
        return d_r[:, None] * radial + d_t[:, None] * tangent, log_p - log_q


# ---------------------------------------------------------------- Feynman-Kac

def _check_dt(dt: float, eps: float, cfg: McConfig):
    if cfg.dt_policy == "resolve-support" and cfg.dt_factor > 0.1 + 1e-12:
        raise DtPolicyError(f"dt_factor {cfg.dt_factor} exceeds 0.1")
    if dt > 0.1 * eps * eps * (1.0 + 1e-12):
        raise DtPolicyError(f"time step {dt:.3g} exceeds 0.1*eps^2 = {0.1 * eps * eps:.3g}")


def _grid(t: float, dt: float) -> tuple[int, float]:
    n_steps = max(1, int(math.ceil(t / dt - 1e-9)))
    return n_steps, t / n_steps


def _fk_pair_paths(rng, n, x, t, n_steps, lam_eps, phi_eps, f, zero_potential, proposal=None):
    """Per-path log-weights and f(Y_t) with Y = sqrt(2) W, Y_0 = x (trapezoid rule).

    With a proposal the steps come from it and the log-weight gains the
    likelihood ratio of each step against N(0, 2h I).
    """
    h = t / n_steps
    y = np.tile(np.asarray(x, dtype=float), (n, 1))
    prev = np.zeros(n) if zero_potential else phi_eps(y)
    acc = np.zeros(n)
    lr = np.zeros(n)
    scale = math.sqrt(2.0 * h)
    for _ in range(n_steps):
        if proposal is None:
            dy = scale * rng.standard_normal((n, 2))
        else:
            dy, step_lr = proposal.step(y, h, rng)
            lr += step_lr
        y += dy
        if not zero_potential:
            cur = phi_eps(y)
            acc += prev + cur
            prev = cur
    logw = 0.5 * h * lam_eps * acc + lr
    fy = np.ones(n) if f is None else np.asarray(f(y), dtype=float)
    return logw, fy


def simulate_fk_two_particle(x, t: float, sched: CouplingSchedule, phi: Mollifier | None,
                             cfg: McConfig, f=None, importance: str | None = None) -> FkEstimate:
    """E_{x/sqrt2}[exp{Lambda_eps int_0^t phi_eps(sqrt2 W_r) dr} f(sqrt2 W_t)].

    ``phi=None`` is the zero potential.  ``f`` maps points (n, 2) to values;
    None means f = 1.  ``importance="ground-state"`` draws steps from
    GroundStateProposal and reweights them, which targets the same discretized
    expectation with far smaller variance at critical coupling, where plain
    sampling is dominated by rare paths that linger in the well (radial
    mollifiers only).
    """
    eps = sched.epsilon
    dt = cfg.step(eps)
    _check_dt(dt, eps, cfg)
    n_steps, h = _grid(t, dt)
    phi_eps = None if phi is None else phi.scaled(eps)
    proposal = None
    if importance == "ground-state" and phi is not None:
        proposal = GroundStateProposal.build(phi, eps, sched.lambda_eps)
    elif importance not in (None, "ground-state"):
        raise ValueError(f"unknown importance scheme {importance!r}")

    def worker(rng, n):
        out, wmax = [], -math.inf
        for m in _batches(n, cfg.batch):
            logw, fy = _fk_pair_paths(rng, m, x, t, n_steps, sched.lambda_eps, phi_eps, f, phi is None, proposal)
            out.append(np.exp(logw) * fy)
            wmax = max(wmax, float(np.max(logw)))
        return np.concatenate(out), wmax

    parts = run_streams(cfg, worker)
    samples = np.concatenate([p[0] for p in parts])
    wmax = math.exp(max(p[1] for p in parts))
    extra = dict(dt=h, n_steps=n_steps, epsilon=eps, lambda_eps=sched.lambda_eps, importance=importance or "none")
    if proposal is not None:
        extra["ground_state_energy"] = proposal.energy
    return _summarize(samples, wmax, **extra)


def _sample_mollifier(rng, phi: Mollifier, n: int) -> np.ndarray:
    """Draw n points from the density phi / mass."""
    comp = rng.choice(len(phi.weights), size=n, p=np.asarray(phi.weights))
    s = 1.0 - rng.random(n) ** (1.0 / (phi.k + 1))  # |v|^2 / R^2 has density (k+1)(1-s)^k
    r = phi.radius * np.sqrt(s)
    th = 2.0 * math.pi * rng.random(n)
    c = np.asarray(phi.centers, dtype=float)[comp]
    return c + np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)


def duhamel_check(x, t: float, sched: CouplingSchedule, phi: Mollifier, cfg: McConfig) -> dict:
    """Nested Monte Carlo check of E[e^{A(t)}] = 1 + Lambda int_0^t E[phi_eps(Y_s) u(t - s, Y_s)] ds.

    u(r, y) is the two-particle FK expectation from y over time r.  The
    right-hand side draws s uniformly on (0, t), y from phi_eps, weights by
    the density P_{2s}(y - x) of Y_s and runs one fresh inner path from y.
    """
    eps = sched.epsilon
    dt = cfg.step(eps)
    _check_dt(dt, eps, cfg)
    lhs = simulate_fk_two_particle(x, t, sched, phi, cfg)
    phi_eps = phi.scaled(eps)
    n_steps, _ = _grid(t, dt)
    x = np.asarray(x, dtype=float)

    def worker(rng, n):
        out = []
        for m in _batches(n, cfg.batch):
            s = t * rng.random(m)
            y = _sample_mollifier(rng, phi_eps, m)
            d2 = np.sum((y - x) ** 2, axis=-1)
            dens = np.exp(-d2 / (4.0 * s)) / (4.0 * math.pi * s)
            rest = t - s
            # inner paths share the step count; each runs over its own horizon t - s
            h = rest / n_steps
            pos = y.copy()
            prev = phi_eps(pos)
            acc = np.zeros(m)
            for _ in range(n_steps):
                pos += np.sqrt(2.0 * h)[:, None] * rng.standard_normal((m, 2))
                cur = phi_eps(pos)
                acc += prev + cur
                prev = cur
            inner = np.exp(0.5 * h * sched.lambda_eps * acc)
            out.append(sched.lambda_eps * t * phi_eps.mass * dens * inner)
        return np.concatenate(out)

    rhs = _summarize(np.concatenate(run_streams(cfg.with_(seed=cfg.seed + 1), worker)))
    diff = lhs.mean - 1.0 - rhs.mean
    se = math.hypot(lhs.std_error, rhs.std_error)
    return {"lhs": lhs.mean, "lhs_se": lhs.std_error, "duhamel": 1.0 + rhs.mean, "duhamel_se": rhs.std_error,
            "difference": diff, "combined_se": se}


def pair_index_set(N: int) -> list[tuple[int, int]]:
    """Ordered pairs (i', i) with i' > i, zero-based."""
    return [(j, i) for i, j in combinations(range(N), 2)]


def simulate_fk_nbody(x0, t: float, sched: CouplingSchedule, phi: Mollifier | None, cfg: McConfig,
                      f=None, importance: str | None = None) -> FkEstimate:
    """E_{x0}[exp{Lambda_eps sum_pairs int_0^t phi_eps(B^{i'} - B^i) dr} f(B_t)] for N planar BMs.

    With the pair coordinate B^i = (B^{i'} - B^i)/sqrt2 of each pair, the
    potential phi_eps(sqrt2 B^i) is phi_eps of the raw difference.  ``f`` maps
    arrays (n, N, 2) to values; None means f = 1.

    ``importance="pair-ground-state"`` samples from an equal mixture over the
    pairs: component p moves the separation of pair p by GroundStateProposal
    steps and everything else freely.  The weight divides by the mixture
    density of the whole path, so any path a single component favours keeps
    a bounded likelihood ratio (radial mollifiers only).
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1, 2)
    N = x0.shape[0]
    if N < 3:
        raise ValueError("simulate_fk_nbody needs N >= 3")
    pairs = pair_index_set(N)
    for j, i in pairs:
        if np.all(x0[j] == x0[i]):
            raise ValueError("initial positions must be pairwise distinct")
    eps = sched.epsilon
    dt = cfg.step(eps)
    _check_dt(dt, eps, cfg)
    n_steps, h = _grid(t, dt)
    phi_eps = None if phi is None else phi.scaled(eps)
    jj = np.array([p[0] for p in pairs])
    ii = np.array([p[1] for p in pairs])
    E = len(pairs)
    proposal = None
    if importance == "pair-ground-state" and phi is not None:
        proposal = GroundStateProposal.build(phi, eps, sched.lambda_eps)
    elif importance not in (None, "pair-ground-state"):
        raise ValueError(f"unknown importance scheme {importance!r}")

    def pot(b):
        return phi_eps(b[:, jj, :] - b[:, ii, :]).sum(axis=-1)

    def worker(rng, n):
        out, wmax = [], -math.inf
        for m in _batches(n, max(1, cfg.batch // N)):
            b = np.broadcast_to(x0, (m, N, 2)).copy()
            prev = np.zeros(m) if phi is None else pot(b)
            acc = np.zeros(m)
            sd = math.sqrt(h)
            if proposal is not None:
                comp = rng.integers(0, E, m)
                members = [np.flatnonzero(comp == p) for p in range(E)]
                log_q_over_p = np.zeros((m, E))
            for _ in range(n_steps):
                db = sd * rng.standard_normal((m, N, 2))
                if proposal is not None:
                    sep = b[:, jj, :] - b[:, ii, :]
                    for p, idx in enumerate(members):
                        if idx.size == 0:
                            continue
                        d, _ = proposal.step(sep[idx, p], h, rng)
                        mid = 0.5 * (db[idx, jj[p]] + db[idx, ii[p]])
                        db[idx, jj[p]] = mid + 0.5 * d
                        db[idx, ii[p]] = mid - 0.5 * d
                    dsep = db[:, jj, :] - db[:, ii, :]
                    for p in range(E):
                        log_q_over_p[:, p] -= proposal.log_ratio(sep[:, p], dsep[:, p], h)
                b += db
                if phi is not None:
                    cur = pot(b)
                    acc += prev + cur
                    prev = cur
            logw = 0.5 * h * sched.lambda_eps * acc
            if proposal is not None:
                top = np.max(log_q_over_p, axis=1)
                mix = top + np.log(np.mean(np.exp(log_q_over_p - top[:, None]), axis=1))
                logw = logw - mix
            fy = np.ones(m) if f is None else np.asarray(f(b), dtype=float)
            out.append(np.exp(logw) * fy)
            wmax = max(wmax, float(np.max(logw)))
        return np.concatenate(out), wmax

    parts = run_streams(cfg, worker)
    samples = np.concatenate([p[0] for p in parts])
    wmax = math.exp(max(p[1] for p in parts))
    return _summarize(samples, wmax, dt=h, n_steps=n_steps, epsilon=eps, lambda_eps=sched.lambda_eps, N=N,
                      importance=importance)


# ---------------------------------------------------------------- hitting times

@dataclass(frozen=True)
class StepRule:
    """Adaptive step dt = clip(c * dist^2, dt_min, dt_max), dist = distance to the target level."""

    c: float = 0.04
    dt_min: float = 1e-7
    dt_max: float = 0.01

    def __call__(self, dist):
        return np.clip(self.c * dist * dist, self.dt_min, self.dt_max)

    def refined(self) -> "StepRule":
        return StepRule(self.c / 2.0, self.dt_min / 2.0, self.dt_max / 2.0)


def _radial_hits(rng, n, a, b, horizon, rule: StepRule):
    """First passage of |W| (planar BM, |W_0| = a) to level b, per path stopped at ``horizon``.

    ``horizon`` is an array (killing clocks) or a scalar cap.  Returns
    (hit flag, passage time or stopping time).  Sub-step crossings use the
    Brownian-bridge probability exp(-2 d0 d1 / dt) on the radial distance.
    """
    pos = np.zeros((n, 2))
    pos[:, 0] = a
    clock = np.zeros(n)
    hit = np.zeros(n, dtype=bool)
    cap = np.broadcast_to(np.asarray(horizon, dtype=float), (n,)).copy()
    active = np.arange(n)
    side = math.copysign(1.0, a - b)
    while active.size:
        p = pos[active]
        rho = np.hypot(p[:, 0], p[:, 1])
        d0 = side * (rho - b)
        dt = np.minimum(rule(d0), cap[active] - clock[active])
        p = p + np.sqrt(dt)[:, None] * rng.standard_normal((active.size, 2))
        rho1 = np.hypot(p[:, 0], p[:, 1])
        d1 = side * (rho1 - b)
        crossed = d1 <= 0
        bridge = ~crossed & (rng.random(active.size) < np.exp(-2.0 * d0 * d1 / dt))
        new_clock = clock[active] + dt
        done_hit = crossed | bridge
        pos[active] = p
        clock[active] = new_clock
        hit[active[done_hit]] = True
        expired = ~done_hit & (new_clock >= cap[active])
        active = active[~(done_hit | expired)]
    return hit, clock


def sample_bes2_hitting(a: float, b: float, cfg: McConfig, rule: StepRule = StepRule()):
    """Samples of T_b for the 2D Bessel process from a, censored at cfg.t_max.

    Returns (times, censored fraction); censored paths carry time = t_max.
    """
    if a <= 0 or b <= 0:
        raise ValueError("levels must be positive")
    if a == b:
        return np.zeros(cfg.n_paths), 0.0

    def worker(rng, n):
        hit, clock = _radial_hits(rng, n, a, b, cfg.t_max, rule)
        return clock, hit

    parts = run_streams(cfg, worker)
    times = np.concatenate([p[0] for p in parts])
    hits = np.concatenate([p[1] for p in parts])
    return times, float(1.0 - hits.mean())


def estimate_hit_transform(a: float, b: float, mu: float, cfg: McConfig, rule: StepRule = StepRule()) -> FkEstimate:
    """E_a[exp(-mu T_b)] as the probability that T_b precedes an independent Exp(mu) clock."""
    if a == b or mu == 0:
        return FkEstimate(1.0, 0.0, cfg.n_paths)

    def worker(rng, n):
        kill = rng.exponential(1.0 / mu, n)
        hit, _ = _radial_hits(rng, n, a, b, np.minimum(kill, cfg.t_max), rule)
        return hit.astype(float), float(np.mean(kill > cfg.t_max))

    parts = run_streams(cfg, worker)
    censored = float(np.mean([p[1] for p in parts]))
    return _summarize(np.concatenate([p[0] for p in parts]), censored=censored)


def _reflected_hits(rng, n, x0, low, top, horizon, rule: StepRule):
    """1D BM from x0 reflected (folded) at ``top``, stopped at the first passage to ``low`` or at horizon."""
    x = np.full(n, float(x0))
    clock = np.zeros(n)
    hit = np.zeros(n, dtype=bool)
    cap = np.broadcast_to(np.asarray(horizon, dtype=float), (n,)).copy()
    active = np.arange(n)
    while active.size:
        xa = x[active]
        d0 = xa - low
        dt = np.minimum(rule(d0), cap[active] - clock[active])
        x1 = xa + np.sqrt(dt) * rng.standard_normal(active.size)
        x1 = np.where(x1 > top, 2.0 * top - x1, x1)
        d1 = x1 - low
        crossed = d1 <= 0
        bridge = ~crossed & (rng.random(active.size) < np.exp(-2.0 * d0 * d1 / dt))
        done_hit = crossed | bridge
        x[active] = x1
        clock[active] = clock[active] + dt
        hit[active[done_hit]] = True
        expired = ~done_hit & (clock[active] >= cap[active])
        active = active[~(done_hit | expired)]
    return hit, clock


def sample_exp_functional(kind: str, a: float, b: float, M: float, nu: float, cfg: McConfig,
                          rule: StepRule = StepRule()) -> FkEstimate:
    """Monte Carlo for exponential functionals of 1D BM beta from log a stopped at T_{log b}.

    kind "indicator-below-M": E[exp(nu int 1{beta_v <= log M} dv)], b <= a.  Time
      above log M does not count, so beta is folded at log M; nu < 0 uses an
      Exp(-nu) clock, nu > 0 the weight e^{nu T}.
    kind "exp-2beta": E[exp(nu int e^{2 beta_v} dv)], a <= b.  By the
      skew-product representation the functional is T_b of planar BM from
      radius a; nu > 0 uses the weight e^{nu T}, nu < 0 a clock.
    """
    if nu == 0:
        return FkEstimate(1.0, 0.0, cfg.n_paths)
    if kind == "indicator-below-M":
        if not 0 < b <= a:
            raise ValueError("indicator-below-M needs 0 < b <= a")
        if nu > 0:
            ContinuationDomain("cos-positive-exponent-interval", nu=nu, M=M).check(b)
        low, top, x0 = math.log(b), math.log(M), math.log(min(a, M))
        if b >= M:
            return FkEstimate(1.0, 0.0, cfg.n_paths)

        def run(rng, n, horizon):
            return _reflected_hits(rng, n, x0, low, top, horizon, rule)
    elif kind == "exp-2beta":
        if not 0 < a <= b:
            raise ValueError("exp-2beta needs 0 < a <= b")
        if nu > 0:
            ContinuationDomain("cos-positive-exponent-I0", nu=nu, j01=J01).check(b)

        def run(rng, n, horizon):
            return _radial_hits(rng, n, a, b, horizon, rule)
    else:
        raise ValueError(f"unknown functional kind {kind!r}")

    def worker(rng, n):
        if nu < 0:
            kill = rng.exponential(-1.0 / nu, n)
            hit, _ = run(rng, n, np.minimum(kill, cfg.t_max))
            return hit.astype(float), float(np.mean(kill > cfg.t_max)), 0.0
        hit, clock = run(rng, n, cfg.t_max)
        logw = nu * clock
        return np.where(hit, np.exp(logw), 0.0), float(1.0 - hit.mean()), float(np.max(logw))

    parts = run_streams(cfg, worker)
    censored = float(np.mean([p[1] for p in parts]))
    wmax = math.exp(max(p[2] for p in parts))
    flags = ("censored",) if censored >= 1e-3 else ()
    return _summarize(np.concatenate([p[0] for p in parts]), wmax, flags, censored=censored)


# ---------------------------------------------------------------- Poisson representation

def simulate_poisson_representation(phi_field, q: float, t: float, N: int, cfg: McConfig,
                                    antiderivative=None) -> FkEstimate:
    """e^{qt} E_{mu_E}[prod_{n <= Lambda_t} phi(xi_n, S_n)/(q/E_n) exp(int_{S_n}^{S_{n+1} ^ t} phi(xi_n, r) dr)].

    Lambda is a rate-q Poisson process with jump times S_n, xi a chain on the
    pairs started uniform and jumping uniformly to a different pair, E_1 = E
    and E_n = E - 1 afterwards.  ``phi_field(pair_index, r)`` is vectorized;
    ``antiderivative(pair_index, r0, r1)`` gives int_{r0}^{r1} phi dr (a 16-node
    GL rule is used when omitted).
    """
    if q <= 0:
        raise ValueError("q must be positive")
    E = N * (N - 1) // 2
    if antiderivative is None:
        xg, wg = np.polynomial.legendre.leggauss(16)

        def antiderivative(idx, r0, r1):
            mid, half = 0.5 * (r0 + r1), 0.5 * (r1 - r0)
            nodes = mid[:, None] + half[:, None] * xg[None, :]
            return half * np.sum(phi_field(idx[:, None], nodes) * wg[None, :], axis=-1)

    def worker(rng, n):
        counts = rng.poisson(q * t, n)
        kmax = int(counts.max()) if n else 0
        # given the count, jump times are order statistics of uniforms on [0, t]
        jumps = rng.random((n, max(kmax, 1))) * t
        jumps = np.sort(np.where(np.arange(max(kmax, 1))[None, :] < counts[:, None], jumps, np.inf), axis=1)
        logw = np.full(n, q * t)
        pair = rng.integers(0, E, n)
        for k in range(kmax):
            live = counts > k
            if k > 0:
                step = rng.integers(1, E, n)
                pair = np.where(live, (pair + step) % E, pair)
            s_k = np.where(live, jumps[:, k], 0.0)
            nxt = jumps[:, k + 1] if k + 1 < jumps.shape[1] else np.full(n, np.inf)
            s_next = np.where(live, np.minimum(nxt, t), 0.0)
            En = E if k == 0 else E - 1
            val = phi_field(pair, s_k)
            with np.errstate(divide="ignore"):
                contrib = np.log(np.maximum(val, 0.0) * En / q) + antiderivative(pair, s_k, s_next)
            logw = np.where(live, logw + contrib, logw)
        return np.exp(logw)

    samples = np.concatenate(run_streams(cfg, worker))
    return _summarize(samples, float(np.max(samples)) if samples.size else 1.0)


# ---------------------------------------------------------------- deterministic cross-check

def fk_two_particle_radial_pde(r0: float, t: float, lambda_eps: float, phi_eps: Mollifier,
                               n_cells: int = 2000, n_steps: int = 4000) -> float:
    """Deterministic value of the two-particle FK expectation with f = 1 for a radial mollifier.

    Solves u_t = Laplacian(u) + Lambda_eps phi_eps(|y|) u, u(0) = 1, for radial u
    by finite volumes on a grid graded towards the support of phi_eps, with
    Crank-Nicolson steps after four implicit-Euler start-up steps, and returns
    u(t, r0).
    """
    from scipy.linalg import solve_banded

    if not phi_eps.is_radial:
        raise ValueError("the radial solver needs a radial mollifier")
    M = phi_eps.support_radius
    r_far = max(r0, M) + 12.0 * math.sqrt(2.0 * t) + 1.0
    n_in = n_cells // 4
    inner = np.linspace(0.0, 1.5 * M, n_in + 1)
    outer = 1.5 * M + (r_far - 1.5 * M) * np.linspace(0.0, 1.0, n_cells - n_in + 1)[1:] ** 2
    faces = np.concatenate([inner, outer])
    centers = 0.5 * (faces[1:] + faces[:-1])
    vol = 0.5 * (faces[1:] ** 2 - faces[:-1] ** 2)
    pot = lambda_eps * phi_eps.radial_profile(centers)
    cond = faces[1:-1] / np.diff(centers)
    n = centers.size
    # operator L u = (flux differences) / vol + pot * u, zero flux at both ends
    lower = np.zeros(n)
    upper = np.zeros(n)
    diag = np.zeros(n)
    upper[:-1] = cond / vol[:-1]
    lower[1:] = cond / vol[1:]
    diag[:-1] -= cond / vol[:-1]
    diag[1:] -= cond / vol[1:]
    diag += pot

    def apply(u):
        out = diag * u
        out[:-1] += upper[:-1] * u[1:]
        out[1:] += lower[1:] * u[:-1]
        return out

    def implicit(u, theta, h):
        ab = np.zeros((3, n))
        ab[0, 1:] = -theta * h * upper[:-1]
        ab[1] = 1.0 - theta * h * diag
        ab[2, :-1] = -theta * h * lower[1:]
        rhs = u + (1.0 - theta) * h * apply(u) if theta < 1.0 else u
        return solve_banded((1, 1), ab, rhs)

    u = np.ones(n)
    h = t / n_steps
    for _ in range(4):
        u = implicit(u, 1.0, h / 2.0)
    for _ in range(n_steps - 2):
        u = implicit(u, 0.5, h)
    return float(np.interp(r0, centers, u))

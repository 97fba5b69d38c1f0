"""Mollifiers, the critical coupling Lambda_eps, the constant beta and the
radial/fluctuation split with its logarithmic-energy correction.

Mollifiers are finite mixtures of polynomial bumps
``c_k (1 - |x - c_i|^2 / R^2)^k`` on ``|x - c_i| <= R``.  Because each bump is
a polynomial in ``|x - c_i|^2`` its logarithmic potential and its circle
averages have closed forms (or smooth integrands), which is what makes the
deterministic evaluators below accurate to near machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._quad import QuadratureError, gauss_legendre, panel_integral
from .specfun import EULER_GAMMA

SQRT2 = math.sqrt(2.0)


class CriticalWindowError(ValueError):
    """Lambda_eps falls outside (0, 1) or 1 + lambda/log(1/eps) outside (0, 2]."""


def _binom(k: int, j: int) -> float:
    return float(math.comb(k, j))


def bump_normalizer(k: int, radius: float) -> float:
    """c_k with c_k * int (1 - |x/R|^2)^k dx = 1, i.e. (k + 1) / (pi R^2)."""
    if k < 1:
        raise ValueError("bump exponent k must be >= 1")
    return (k + 1) / (math.pi * radius * radius)


def bump_log_potential(rho, k: int, radius: float):
    """int b(|v|) log|rho e - v| dv for the unit-mass bump b of radius R.

    Uses the angular identity (circle average of log|a - b e^{i th}| is
    log max(|a|, |b|)) and exact integration of polynomial-times-log terms.
    """
    rho = np.asarray(rho, dtype=float)
    s = rho / radius
    inside = s < 1.0
    si = np.where(inside, s, 0.5)
    a = si * si
    # s^2 log s -> 0 at the origin, so log(1) there is harmless
    log_a = np.log(np.where(a > 0, a, 1.0))
    # 2 (k + 1) * J(s) with J(s) = int_0^1 (1 - x^2)^k x log max(x, s) dx
    head = 0.5 * log_a * (1.0 - (1.0 - a) ** (k + 1)) / (2.0 * (k + 1))
    tail = np.zeros_like(a)
    for j in range(k + 1):
        p = j + 1.0
        tail += _binom(k, j) * (-1.0) ** j * (-1.0 / p ** 2 - a ** p * (log_a / p - 1.0 / p ** 2))
    j_in = head + 0.25 * tail
    w_in = math.log(radius) + 2.0 * (k + 1) * j_in
    with np.errstate(divide="ignore"):
        w_out = np.log(np.where(inside, 1.0, rho))
    out = np.where(inside, w_in, w_out)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Mollifier:
    """Mixture ``mass * sum_i w_i b(x - c_i)`` of unit-mass bumps b of radius R."""

    k: int
    radius: float
    centers: tuple = ((0.0, 0.0),)
    weights: tuple = (1.0,)
    mass: float = 1.0
    name: str = "bump"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("bump exponent k must be >= 1")
        if self.radius <= 0:
            raise ValueError("support radius must be positive")
        if len(self.centers) != len(self.weights):
            raise ValueError("centers and weights differ in length")
        if abs(sum(self.weights) - 1.0) > 1e-14:
            raise ValueError("mixture weights must sum to one")

    # -- geometry ---------------------------------------------------------
    @property
    def amplitude(self) -> float:
        return bump_normalizer(self.k, self.radius)

    @cached_property
    def _centers(self) -> np.ndarray:
        return np.asarray(self.centers, dtype=float).reshape(-1, 2)

    @cached_property
    def _weights(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    @property
    def center_distances(self) -> np.ndarray:
        return np.hypot(self._centers[:, 0], self._centers[:, 1])

    @property
    def support_radius(self) -> float:
        """M with supp(phi) inside the closed disc of radius M."""
        return float(np.max(self.center_distances) + self.radius)

    @property
    def is_radial(self) -> bool:
        return bool(np.all(self.center_distances == 0.0))

    def radial_breaks(self) -> list[float]:
        """Radii where the circle average has reduced smoothness."""
        d = self.center_distances
        pts = {0.0, self.support_radius}
        for di in d:
            pts.add(abs(di - self.radius))
            pts.add(di + self.radius)
        return sorted(pts)

    # -- transformations ----------------------------------------------------
    def dilate(self, s: float) -> "Mollifier":
        """The function x -> phi(s x)."""
        return Mollifier(self.k, self.radius / s, tuple(map(tuple, self._centers / s)),
                         self.weights, self.mass / (s * s), f"{self.name}(x*{s:g})")

    def scaled(self, eps: float) -> "Mollifier":
        """phi_eps(x) = eps^{-2} phi(x / eps); mass is preserved."""
        return Mollifier(self.k, self.radius * eps, tuple(map(tuple, self._centers * eps)),
                         self.weights, self.mass, f"{self.name}_eps{eps:g}")

    def varphi(self) -> "Mollifier":
        """x -> phi(sqrt(2) x), which has mass 1/2."""
        return self.dilate(SQRT2)

    # -- evaluation ---------------------------------------------------------
    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r2 = 1.0 / (self.radius * self.radius)
        out = np.zeros(x.shape[:-1])
        for (cx, cy), w in zip(self._centers, self._weights):
            d2 = (x[..., 0] - cx) ** 2 + (x[..., 1] - cy) ** 2
            out += w * np.maximum(1.0 - d2 * r2, 0.0) ** self.k
        return self.mass * self.amplitude * out

    evaluate = __call__

    def radial_profile(self, r) -> np.ndarray:
        """phi(r, 0); equals phi(x) at |x| = r when the mollifier is radial."""
        r = np.asarray(r, dtype=float)
        return self(np.stack([r, np.zeros_like(r)], axis=-1))

    def log_potential(self, y) -> np.ndarray:
        """int phi(z) log|y - z| dz, exact for bump mixtures."""
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape[:-1])
        for (cx, cy), w in zip(self._centers, self._weights):
            rho = np.hypot(y[..., 0] - cx, y[..., 1] - cy)
            out += w * bump_log_potential(rho, self.k, self.radius)
        return self.mass * out

    def circle_average(self, r, n: int = 24) -> np.ndarray:
        """(1/2pi) int phi(r e^{i th}) dth, using GL on the exact arcs inside each disc."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.zeros_like(r)
        c = self.amplitude
        R2 = self.radius ** 2
        for d, w in zip(self.center_distances, self._weights):
            if d == 0.0:
                out += w * c * np.maximum(1.0 - r * r / R2, 0.0) ** self.k
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                kappa = (r * r + d * d - R2) / (2.0 * r * d)
            kappa = np.where(r > 0, kappa, np.where(d < self.radius, -2.0, 2.0))
            theta = np.arccos(np.clip(kappa, -1.0, 1.0))
            th, wt = gauss_legendre(0.0, theta, n)
            rho2 = r[:, None] ** 2 + d * d - 2.0 * r[:, None] * d * np.cos(th)
            vals = np.maximum(1.0 - rho2 / R2, 0.0) ** self.k
            avg = c * np.sum(vals * wt, axis=-1) / math.pi
            # r = 0 is the point itself
            avg = np.where(r > 0, avg, c * max(1.0 - d * d / R2, 0.0) ** self.k)
            out += w * avg
        return self.mass * out


def make_bump(k: int, support_radius: float = 1.0) -> Mollifier:
    """Radial bump c_k (1 - |x/R|^2)^k with unit mass."""
    return Mollifier(int(k), float(support_radius), name=f"bump:k={k},R={support_radius:g}")


def make_two_bump(k: int = 2, support_radius: float = 1.0, offset: float = 0.3) -> Mollifier:
    """Equal-weight average of two bumps centred at (+offset, 0) and (-offset, 0)."""
    return Mollifier(int(k), float(support_radius), ((offset, 0.0), (-offset, 0.0)), (0.5, 0.5),
                     name=f"twobump:k={k},R={support_radius:g},offset={offset:g}")


def mollifier_from_spec(spec: str) -> Mollifier:
    """Parse ``bump:k=2,R=1`` or ``twobump:k=2,R=1,offset=0.3``."""
    family, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, eq, val = item.partition("=")
        if not eq:
            raise ValueError(f"bad mollifier parameter {item!r}")
        params[key.strip()] = float(val)
    allowed = {"bump": {"k", "R"}, "twobump": {"k", "R", "offset"}}
    if family not in allowed:
        raise ValueError(f"unknown mollifier family {family!r}")
    unknown = set(params) - allowed[family]
    if unknown:
        raise ValueError(f"unknown mollifier parameters {sorted(unknown)}")
    k = int(params.get("k", 2))
    R = params.get("R", 1.0)
    if family == "bump":
        return make_bump(k, R)
    return make_two_bump(k, R, params.get("offset", 0.3))


# ---------------------------------------------------------------- coupling

def lambda_eps(eps: float, lam: float = 0.0, strict: bool = True) -> float:
    """Lambda_eps = 2 pi / log(1/eps) + 2 pi lam / log(1/eps)^2.

    With ``strict`` the critical window (Lambda_eps in (0, 1) and
    1 + lam / log(1/eps) in (0, 2]) is enforced.
    """
    if not 0.0 < eps < 1.0:
        raise CriticalWindowError(f"eps must lie in (0, 1), got {eps}")
    L = math.log(1.0 / eps)
    value = 2.0 * math.pi / L + 2.0 * math.pi * lam / (L * L)
    if strict:
        ratio = 1.0 + lam / L
        if not 0.0 < value < 1.0:
            raise CriticalWindowError(f"outside critical window: Lambda_eps = {value:.6g} not in (0, 1)")
        if not 0.0 < ratio <= 2.0:
            raise CriticalWindowError(f"outside critical window: 1 + lambda/log(1/eps) = {ratio:.6g} not in (0, 2]")
    return value


def window_conditions(eps: float, lam: float = 0.0) -> dict:
    """Report which standing conditions hold at (eps, lam)."""
    L = math.log(1.0 / eps)
    value = 2.0 * math.pi / L + 2.0 * math.pi * lam / (L * L)
    return {
        "lambda_eps": value,
        "lambda_eps_in_unit_interval": 0.0 < value < 1.0,
        "ratio_in_(0,2]": 0.0 < 1.0 + lam / L <= 2.0,
    }


def log_pair_energy(phi: Mollifier, n: int = 96) -> float:
    """int int log|z - z'| phi(z) phi(z') dz dz' via the exact bump potentials."""
    c = phi._centers
    w = phi._weights
    R = phi.radius
    amp = phi.amplitude
    r, wr = gauss_legendre(0.0, R, n)
    prof = amp * (1.0 - (r / R) ** 2) ** phi.k
    ntheta = 4 * n
    th = 2.0 * math.pi * np.arange(ntheta) / ntheta
    total = 0.0
    for i in range(len(w)):
        for j in range(len(w)):
            dx, dy = c[i] - c[j]
            if dx == 0.0 and dy == 0.0:
                e = 2.0 * math.pi * np.sum(wr * r * prof * bump_log_potential(r, phi.k, R))
            else:
                ux = r[:, None] * np.cos(th)[None, :] + dx
                uy = r[:, None] * np.sin(th)[None, :] + dy
                W = bump_log_potential(np.hypot(ux, uy), phi.k, R)
                e = np.sum((wr * r * prof)[:, None] * W) * (2.0 * math.pi / ntheta)
            total += w[i] * w[j] * e
    return phi.mass * phi.mass * float(total)


def compute_beta(phi: Mollifier, lam: float = 0.0, full_output: bool = False, rtol: float = 1e-6):
    """beta from log(beta)/2 = -int int log|z-z'| phi phi + log 2 + lam - gamma_EM.

    The double integral is evaluated at two resolutions; their difference is
    the reported error estimate, and a relative estimate above ``rtol`` raises.
    """
    e1 = log_pair_energy(phi, 64)
    e2 = log_pair_energy(phi, 128)
    beta = math.exp(2.0 * (-e2 + math.log(2.0) + lam - EULER_GAMMA))
    err = 2.0 * abs(e2 - e1) * beta
    if err > rtol * beta:
        raise QuadratureError("beta quadrature did not converge", err)
    return (beta, err) if full_output else beta


@dataclass(frozen=True)
class CouplingSchedule:
    epsilon: float
    lam: float
    lambda_eps: float
    beta: float

    @classmethod
    def build(cls, phi: Mollifier, eps: float, lam: float = 0.0, strict: bool = True,
              beta: float | None = None) -> "CouplingSchedule":
        value = lambda_eps(eps, lam, strict=strict)
        return cls(eps, lam, value, compute_beta(phi, lam) if beta is None else beta)


# ---------------------------------------------------------------- logarithmic energy

def log_energy(f, y, support_radius: float, n: int = 96, full_output: bool = False):
    """(1/pi) f(y) int f(z) log(1/|y - z|) dz for f supported in |z| <= M.

    Polar coordinates centred at y remove the logarithmic singularity; the
    radial variable is further graded (rho = rho_max s^2).  The estimate is the
    difference between resolutions n and n/2.
    """
    y = np.asarray(y, dtype=float)
    fy = float(f(y))

    def integral(m):
        nt = 2 * m
        th = 2.0 * math.pi * (np.arange(nt) + 0.5) / nt
        e = np.stack([np.cos(th), np.sin(th)], axis=-1)
        yd = e @ y
        disc = support_radius ** 2 - y @ y + yd ** 2
        rmax = np.where(disc > 0, -yd + np.sqrt(np.maximum(disc, 0.0)), 0.0)
        s, ws = gauss_legendre(0.0, 1.0, m)
        rho = rmax[:, None] * s[None, :] ** 2
        jac = rmax[:, None] * 2.0 * s[None, :] * ws[None, :]
        pts = y + rho[..., None] * e[:, None, :]
        with np.errstate(divide="ignore"):
            kern = np.where(rho > 0, -np.log(rho), 0.0) * rho
        return float(np.sum(f(pts) * kern * jac) * (2.0 * math.pi / nt))

    hi = integral(n)
    lo = integral(n // 2)
    value = fy * hi / math.pi
    err = abs(fy) * abs(hi - lo) / math.pi
    return (value, err) if full_output else value


# ---------------------------------------------------------------- radial decomposition

@dataclass
class RadialDecomposition:
    """phi = radial_part(|x|) + fluctuation(x), with the corrected radial part.

    ``energy_bar(r)`` is the circle average of E(phi_hat); the corrected part
    is radial_part + Lambda_eps * energy_bar.
    """

    phi: Mollifier
    lambda_eps: float
    n_nodes: int = 32
    _cache: dict = field(default_factory=dict, repr=False)

    def radial_part(self, r):
        return self.phi.circle_average(r)

    def fluctuation(self, x):
        x = np.asarray(x, dtype=float)
        r = np.hypot(x[..., 0], x[..., 1])
        return self.phi(x) - self.radial_part(r.ravel()).reshape(r.shape)

    @property
    def breaks(self) -> list[float]:
        return self.phi.radial_breaks()

    @property
    def radial_mass(self) -> float:
        return float(panel_integral(lambda r: 2.0 * math.pi * r * self.radial_part(r.ravel()).reshape(r.shape),
                                    self.breaks, 0.0, self.phi.support_radius, self.n_nodes))

    def radial_log_potential(self, rho):
        """int radial_part(|z|) log|y - z| dz at |y| = rho, i.e. 2 pi int phibar(r) r log max(r, rho) dr."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        M = self.phi.support_radius
        br = self.breaks

        def inner(r):
            return 2.0 * math.pi * r * self.radial_part(r.ravel()).reshape(r.shape)

        def inner_log(r):
            return inner(r) * np.log(np.maximum(r, 1e-300))

        below = panel_integral(lambda r: inner(r), br, 0.0, np.minimum(rho, M), self.n_nodes)
        with np.errstate(divide="ignore"):
            logrho = np.where(rho > 0, np.log(np.maximum(rho, 1e-300)), 0.0)
        above = panel_integral(inner_log, br, np.minimum(rho, M), M, self.n_nodes)
        return logrho * below + above

    def _circle_breaks(self, r: float) -> list[float]:
        pts = [-math.pi, math.pi]
        R = self.phi.radius
        for (cx, cy), d in zip(self.phi._centers, self.phi.center_distances):
            if d == 0.0 or r == 0.0:
                continue
            kappa = (r * r + d * d - R * R) / (2.0 * r * d)
            if -1.0 < kappa < 1.0:
                alpha = math.atan2(cy, cx)
                half = math.acos(kappa)
                for a in (alpha - half, alpha + half):
                    pts.append((a + math.pi) % (2.0 * math.pi) - math.pi)
        return sorted(set(pts))

    def energy_bar(self, r):
        """Circle average of E(phi_hat) at radius r."""
        r_arr = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.empty_like(r_arr)
        if self.phi.is_radial:
            out[:] = 0.0
            return out
        pot_bar = self.radial_log_potential(r_arr)
        phibar = self.radial_part(r_arr)
        n = self.n_nodes
        for idx, rv in enumerate(r_arr):
            if rv == 0.0:
                out[idx] = 0.0  # phi_hat(0) = 0
                continue
            br = self._circle_breaks(rv)
            acc = 0.0
            for a, b in zip(br[:-1], br[1:]):
                th, wt = gauss_legendre(a, b, n)
                pts = rv * np.stack([np.cos(th), np.sin(th)], axis=-1)
                vals = self.phi(pts)
                if not np.any(vals):
                    continue
                acc += float(np.sum(vals * self.phi.log_potential(pts) * wt))
            avg = acc / (2.0 * math.pi)
            out[idx] = -(avg - phibar[idx] * pot_bar[idx]) / math.pi
        return out

    def corrected(self, r):
        """radial_part + Lambda_eps * energy_bar."""
        return self.radial_part(r) + self.lambda_eps * self.energy_bar(r)


def radial_decompose(phi: Mollifier, eps: float, lam: float = 0.0, strict: bool = True,
                     n_nodes: int = 32) -> RadialDecomposition:
    """Radial/fluctuation split of ``phi`` with the eps-corrected radial part.

    The decomposition is of the function passed in; the two-particle analysis
    applies it to ``phi.varphi()``.
    """
    return RadialDecomposition(phi, lambda_eps(eps, lam, strict=strict), n_nodes)


def circle_log_integral(r: float, n: int = 200) -> float:
    """int_{-pi}^{pi} log|1 - r e^{i th}| dth, which vanishes for 0 <= r <= 1."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    if r == 1.0:
        # log|1 - e^{i th}| = log(2 sin(th/2)); grade the nodes into the th = 0 singularity
        s, ws = gauss_legendre(0.0, 1.0, n)
        th = math.pi * s ** 4
        jac = 4.0 * math.pi * s ** 3 * ws
        return float(2.0 * np.sum(np.log(2.0 * np.sin(0.5 * th)) * jac))
    # periodic analytic integrand: trapezoid error decays like r^N
    m = max(n, int(60.0 / max(1e-3, -math.log(max(r, 1e-300)))) + 1) if r > 0 else n
    th = 2.0 * math.pi * np.arange(m) / m - math.pi
    return float(np.mean(np.log(np.abs(1.0 - r * np.exp(1j * th)))) * 2.0 * math.pi)


def positivity_threshold(phi: Mollifier, lam: float = 0.0, radii=None, tol: float = -1e-12,
                         n_bisect: int = 30) -> float:
    """Largest eps (within the coupling window) with min corrected radial part >= tol.

    Bisection in log(eps); returns the upper window edge when positivity holds
    throughout the window.
    """
    if radii is None:
        radii = np.linspace(0.0, phi.support_radius, 241)[1:]
    dec = RadialDecomposition(phi, 0.0)
    phibar = dec.radial_part(radii)
    ebar = dec.energy_bar(radii)

    def ok(eps):
        return float(np.min(phibar + lambda_eps(eps, lam, strict=False) * ebar)) >= tol

    # the window Lambda_eps < 1: log(1/eps) larger than the positive root of L^2 - 2 pi L - 2 pi lam
    L_edge = math.pi + math.sqrt(math.pi ** 2 + 2.0 * math.pi * lam) if math.pi ** 2 + 2.0 * math.pi * lam > 0 else 2.0 * math.pi
    L_edge = max(L_edge, -lam) * (1.0 + 1e-9)
    if ok(math.exp(-L_edge)):
        return math.exp(-L_edge)
    lo, hi = L_edge, L_edge
    while not ok(math.exp(-hi)):
        hi *= 2.0
        if hi > 1e6:
            raise ArithmeticError("positivity never attained")
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        if ok(math.exp(-mid)):
            hi = mid
        else:
            lo = mid
    return math.exp(-hi)

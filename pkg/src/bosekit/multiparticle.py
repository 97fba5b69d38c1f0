"""The N-particle limit series at desk scale.

The m-th term is a sum over chains of pairs (i_1 != i_2 != ... != i_m).  Along
a chain, pair i_l meets at time s_l, stays glued for an sbeta-distributed
duration v_l (its centre of mass keeps diffusing, its relative coordinate is
frozen), then everything moves freely until the next meeting.  With the
Gaussian weights at scale zero the particle positions form a linear Gaussian
system, so for every timing the spatial integrals collapse to the joint
density at 0 of the successive pair separations.  What is left is an
integral over the time simplex against the sbeta factors.

Also here: pair-index combinatorics and the chain on pairs, the CSZ sequence
phi_k and its unit-cube corollary, and the geometric term and tail majorants.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._quad import QuadratureError, gauss_legendre
from .kernels import FOUR_PI, SBetaDensity
from .mollifier import CouplingSchedule, Mollifier
from .stochastics import McConfig, simulate_fk_nbody

CSZ_BASE = 32.0


# ---------------------------------------------------------------- pairs and chain

@dataclass(frozen=True)
class PairIndexSet:
    """Ordered pairs (i', i) with i' > i among N particles (0-based)."""

    N: int

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("need at least two particles")

    @cached_property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        return tuple((j, i) for i in range(self.N) for j in range(i + 1, self.N))

    @property
    def E(self) -> int:
        return len(self.pairs)

    def transition_matrix(self) -> np.ndarray:
        """Jump to a uniformly chosen different pair."""
        E = self.E
        if E < 2:
            raise ValueError("the chain needs at least two pairs")
        P = np.full((E, E), 1.0 / (E - 1))
        np.fill_diagonal(P, 0.0)
        return P

    def stationary(self) -> np.ndarray:
        return np.full(self.E, 1.0 / self.E)

    def chain_paths(self, m: int):
        """All (path, probability) for xi_1..xi_m with xi_1 ~ uniform, in lexicographic order."""
        E = self.E
        for path in itertools.product(range(E), repeat=m):
            if all(a != b for a, b in zip(path, path[1:])):
                yield path, (1.0 / E) * (1.0 / (E - 1)) ** (m - 1)

    def weight_product(self, m: int) -> int:
        """E_1 ... E_m with E_1 = E and E_n = E - 1 afterwards."""
        return self.E * (self.E - 1) ** (m - 1)

    def sample_chain(self, n_steps: int, size: int, rng) -> np.ndarray:
        """(size, n_steps + 1) chain states started from the uniform law."""
        E = self.E
        out = np.empty((size, n_steps + 1), dtype=np.int64)
        out[:, 0] = rng.integers(0, E, size)
        for k in range(n_steps):
            # a uniform draw among the E - 1 other states
            jump = rng.integers(0, E - 1, size)
            out[:, k + 1] = jump + (jump >= out[:, k])
        return out


# ---------------------------------------------------------------- Gaussian chain weights

class ChainWeight:
    """Spatial weight of one chain of pairs at scale zero.

    ``durations`` has trailing axis (u_1, v_1, u_2, ..., u_m, v_m, u_{m+1}).
    The value is the joint density at 0 of the pair separations at the m
    meeting times (in R^2), times E[f(X_t) | all meetings] for the Gaussian
    product test function f(x) = prod_k exp(-|x^k|^2 / 2 width^2) when
    ``width`` is given; f = 1 otherwise.
    """

    def __init__(self, x0, chain, pairs: PairIndexSet, width: float | None = None):
        self.x0 = np.asarray(x0, dtype=float).reshape(-1, 2)
        N = self.x0.shape[0]
        if N != pairs.N:
            raise ValueError("x0 does not match the pair set")
        self.m = m = len(chain)
        self.width = width
        vec = np.zeros((m, N))
        for l, p in enumerate(chain):
            a, b = pairs.pairs[p]
            vec[l, a], vec[l, b] = 1.0, -1.0
        self.vec = vec
        # per-interval covariance generators: free intervals diffuse every
        # particle; a glued interval moves the pair by its midpoint
        gens = []
        for l in range(m):
            gens.append(np.eye(N))
            a, b = pairs.pairs[chain[l]]
            G = np.eye(N)
            G[a, a] = G[b, b] = G[a, b] = G[b, a] = 0.5
            gens.append(G)
        gens.append(np.eye(N))
        self.gens = np.array(gens)
        n_int = 2 * m + 1
        # interval j contributes to separation l iff it ends by s_l (index 2l)
        before = np.array([[j <= 2 * l for l in range(m)] for j in range(n_int)], dtype=float)
        self._cov_dd = np.einsum("jl,jk,lp,jpq,kq->jlk", before, before, vec, self.gens, vec)
        self._cov_xd = np.einsum("jl,jpq,lq->jpl", before, self.gens, vec)
        self._mean = vec @ self.x0   # (m, 2)

    def __call__(self, durations) -> np.ndarray:
        d = np.asarray(durations, dtype=float)
        m = self.m
        C = np.einsum("...j,jlk->...lk", d, self._cov_dd)
        Ci = np.linalg.inv(C)
        det = np.linalg.det(C)
        quad = np.einsum("ld,...lk,kd->...", self._mean, Ci, self._mean)
        dens = np.exp(-0.5 * quad) / ((2.0 * math.pi) ** m * det)
        if self.width is None:
            return dens
        Sxx = np.einsum("...j,jpq->...pq", d, self.gens)
        Sxd = np.einsum("...j,jpl->...pl", d, self._cov_xd)
        K = Sxd @ Ci
        S = Sxx - K @ np.swapaxes(Sxd, -1, -2)
        mean = self.x0 - np.einsum("...pl,ld->...pd", K, self._mean)
        return dens * _gaussian_product_mean(mean, S, self.width)


def _gaussian_product_mean(mean, S, width):
    """E[prod_k exp(-|X^k|^2 / 2 w^2)] for X = mean + N(0, S) in each planar coordinate."""
    N = S.shape[-1]
    A = S + width * width * np.eye(N)
    det = np.linalg.det(np.eye(N) + S / (width * width))
    Ai = np.linalg.inv(A)
    quad = np.einsum("...pd,...pq,...qd->...", mean, Ai, mean)
    return np.exp(-0.5 * quad) / det


def free_term(x0, t: float, width: float | None = None) -> float:
    """E[f(B_t)] for the Gaussian product f (or 1)."""
    x0 = np.asarray(x0, dtype=float).reshape(-1, 2)
    if width is None:
        return 1.0
    N = x0.shape[0]
    return float(_gaussian_product_mean(x0, t * np.eye(N), width))


# ---------------------------------------------------------------- time-simplex quadrature

def _excess_nodes(per_decade: int, floor_exp: float = 14.0):
    """Nodes on (0, 1), one GL panel per decade down to 10^-floor_exp, for
    integrands whose only roughness at 0 is through log c."""
    edges = np.concatenate([[0.0], np.logspace(-floor_exp, 0.0, int(floor_exp) + 1)])
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        x, w = gauss_legendre(a, b, per_decade)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def _chunked(func, x, size: int = 20000):
    return np.concatenate([np.atleast_1d(func(x[i:i + size])) for i in range(0, x.size, size)])


@dataclass(frozen=True)
class SimplexGrid:
    """Tensor quadrature over Delta_m(t) = {u, v : sum(u_l + v_l) + u_{m+1} = t}.

    Stick-breaking order u_1, v_1, ..., u_m, v_m with u_{m+1} the remainder.
    Each u takes a Gauss-Legendre fraction of what is left.  Each v takes a
    fraction on log-spaced panels from exp(-v_floor) to 1, carrying the sbeta
    density in its weight; the piece [0, exp(-v_floor)] gets the exact sbeta
    mass with the integrand frozen at its left end.
    """

    m: int
    t: float
    beta: float
    n_u: int = 12
    n_v: int = 3
    v_floor: float = 30.0
    v_panel: float = 1.0

    def nodes(self):
        """Durations (K, 2m + 1) and weights (K,), weights > 0."""
        sb = SBetaDensity(self.beta)
        fu, wu = gauss_legendre(0.0, 1.0, self.n_u)
        edges = np.arange(-self.v_floor, 0.0 + 1e-12, self.v_panel)
        px, pw = gauss_legendre(edges[:-1], edges[1:], self.n_v)
        lx = px.ravel()
        lw = pw.ravel()
        fv = np.exp(lx)
        # fraction nodes for v: the floor piece first
        fv = np.concatenate([[0.5 * math.exp(-self.v_floor)], fv])
        rem = np.full(1, float(self.t))
        dur = np.zeros((1, 0))
        wt = np.ones(1)
        for _ in range(self.m):
            # u step
            u = rem[:, None] * fu[None, :]
            wt = (wt[:, None] * rem[:, None] * wu[None, :]).ravel()
            dur = np.concatenate([np.repeat(dur, fu.size, axis=0), u.reshape(-1, 1)], axis=1)
            rem = (rem[:, None] - u).ravel()
            # v step
            v = rem[:, None] * fv[None, :]
            dens = np.empty_like(v)
            dens[:, 0] = _chunked(sb.cumulative, rem * math.exp(-self.v_floor))
            dens[:, 1:] = _chunked(sb, v[:, 1:].ravel()).reshape(v[:, 1:].shape) * v[:, 1:] * lw[None, :]
            wt = (wt[:, None] * dens).ravel()
            dur = np.concatenate([np.repeat(dur, fv.size, axis=0), v.reshape(-1, 1)], axis=1)
            rem = (rem[:, None] - v).ravel()
        dur = np.concatenate([dur, rem[:, None]], axis=1)
        return dur, wt

    def integrate(self, func) -> float:
        dur, wt = self.nodes()
        return float(np.sum(wt * func(dur)))


def _cumulative_table(sb: SBetaDensity, t: float, decades: float = 16.0, n: int = 801):
    """Cubic spline of w -> int_0^w sbeta in log w on [t 10^-decades, t]."""
    from scipy.interpolate import CubicSpline

    lw = np.linspace(math.log(t) - decades * math.log(10.0), math.log(t), n)
    spline = CubicSpline(lw, sb.cumulative(np.exp(lw)))
    lo = lw[0]
    s_lo = float(spline(lo))

    def S(w):
        w = np.asarray(w, dtype=float)
        out = np.zeros_like(w)
        pos = w > 0
        lwp = np.log(w[pos])
        inside = lwp >= lo
        vals = np.empty_like(lwp)
        vals[inside] = spline(lwp[inside])
        # below the table the leading 4 pi / log(1/(beta w)) shape takes over
        far = -np.log(sb.beta) - lwp[~inside]
        vals[~inside] = s_lo * (-math.log(sb.beta) - lo) / far
        out[pos] = vals
        return out
    return S


def _chain_term_m1(weight: ChainWeight, sb: SBetaDensity, t: float, decay: float, n: int) -> float:
    u_frac, u_w = _excess_nodes(max(3, n // 4))

    def H(w):
        w = np.atleast_1d(w)
        v = t - w
        u = w[:, None] * u_frac[None, :]
        dur = np.stack([u, np.broadcast_to(v[:, None], u.shape), w[:, None] - u], axis=-1)
        return np.sum(weight(dur) * u_w[None, :], axis=-1) * w
    return sb.convolve(H, t, decay=decay)


def _chain_term_m2(weight: ChainWeight, sb: SBetaDensity, S, t: float, decay: float, n: int) -> float:
    a, wa = gauss_legendre(0.0, 1.0, n)
    c, wc = _excess_nodes(max(3, n // 4))
    A, C = np.meshgrid(a, c, indexing="ij")
    W2 = np.outer(wa, wc)

    def G(w):
        w = np.atleast_1d(w)
        v1 = t - w
        u1 = w[:, None, None] * A
        rest = w[:, None, None] * (1.0 - A)
        r = rest * C
        u2 = rest - r
        shape = u1.shape
        dur = np.stack([u1, np.broadcast_to(v1[:, None, None], shape), u2,
                        np.zeros(shape), r], axis=-1)
        vals = weight(dur) * S(r) * w[:, None, None] * rest
        return np.sum(vals * W2, axis=(-2, -1))
    return sb.convolve(G, t, decay=decay)


# ---------------------------------------------------------------- term bounds

def max_pair_heat(dx) -> float:
    """max_s P_{2s}(dx) = 1 / (pi e |dx|^2)."""
    r2 = float(np.sum(np.asarray(dx, dtype=float) ** 2))
    if r2 == 0:
        raise ValueError("coincident particles")
    return 1.0 / (math.pi * math.e * r2)


def term_bound(m: int, t: float, beta: float, max_heat: float) -> float:
    """Majorant of one chain's integrated weight with q = max(m, 2)."""
    q = max(m, 2)
    if q <= beta:
        raise ValueError(f"term bound needs max(m, 2) > beta (beta = {beta:.6g})")
    return (max_heat * 2.0 * math.e * t * t * math.exp(q * t) * CSZ_BASE ** (m - 1)
            * (FOUR_PI / math.log(q / beta)) ** m)


def csz_ratio(log_q_over_beta: float) -> float:
    """32 * 4 pi / log(q / beta)."""
    if log_q_over_beta <= 0:
        raise ValueError("need q > beta")
    return CSZ_BASE * FOUR_PI / log_q_over_beta


def geometric_majorant(m: int, log_q_over_beta: float) -> float:
    """32^m [2 (4 pi / log(q / beta))^m], the scale-zero form of the per-order majorant."""
    return 2.0 * csz_ratio(log_q_over_beta) ** m


def log_series_tail_bound(m: int, t: float, beta: float, q: float | None = None, prefactor: float = 1.0,
                          branching: float = 1.0, log_q_over_beta: float | None = None) -> float:
    """log of the geometric majorant of all terms of order > m.

    Order n is bounded by prefactor * 2e t^2 e^{qt} branching^{n-1} 32^{n-1}
    (4 pi / log(q / beta))^n.  q may be given through log(q / beta) since
    admissible values overflow a double.  Refuses 32 * 4 pi / log(q / beta) > 1/2
    and a non-summable ratio branching * that.
    """
    if log_q_over_beta is None:
        if q is None or q <= beta:
            raise ValueError("need q > beta")
        log_q_over_beta = math.log(q / beta)
    a = csz_ratio(log_q_over_beta)
    if a > 0.5:
        raise ValueError(f"q too close to beta: 32*4pi/log(q/beta) = {a:.4g} > 1/2")
    ratio = branching * a
    if ratio >= 1:
        raise ValueError(f"tail is not summable: branching * 32*4pi/log(q/beta) = {ratio:.4g} >= 1")
    log_qt = math.log(beta) + log_q_over_beta + math.log(t)
    qt = math.exp(log_qt) if log_qt < 700 else math.inf
    return (math.log(prefactor) + math.log(2.0 * math.e) + 2.0 * math.log(t) + qt - math.log(CSZ_BASE * branching)
            + math.log(2.0) + (m + 1) * math.log(ratio) - math.log1p(-ratio))


def series_tail_bound(m: int, t: float, beta: float, q: float | None = None, prefactor: float = 1.0,
                      branching: float = 1.0, log_q_over_beta: float | None = None) -> float:
    """exp(log_series_tail_bound); inf when the majorant overflows."""
    lb = log_series_tail_bound(m, t, beta, q, prefactor, branching, log_q_over_beta)
    return math.exp(lb) if lb < 709 else math.inf


# ---------------------------------------------------------------- the series

class SeriesBoundViolation(AssertionError):
    """A computed term exceeds its majorant."""


@dataclass
class SeriesTerms:
    terms: list
    errors: list
    bounds: list            # per order: sum over chains of the chain majorant (nan if unavailable)
    chains: dict            # (order, chain) -> (value, bound)
    log_tail_bound: float
    tail_label: str
    meta: dict = field(default_factory=dict)

    @property
    def partial_sum(self) -> float:
        return float(sum(self.terms))


def limit_series_terms(N: int, x0, t: float, beta: float, m_max: int = 2, width: float | None = None,
                       n: int = 24, tail_ratio: float = 0.25, check_bounds: bool = True) -> SeriesTerms:
    """Terms m = 0..m_max of the scale-zero series and a tail majorant.

    Term m sums the integrated chain weights over all chains of length m;
    (prod E_n) E_mu[.] reduces to that plain sum.  Each term carries the gap
    to a half-resolution evaluation as its error.  When max(m, 2) > beta every
    chain is checked against its majorant and a violation raises
    SeriesBoundViolation.  The tail majorant uses q with
    32 * 4 pi / log(q / beta) = tail_ratio and branching E - 1; a logarithm
    above 0 is labelled "uncontrolled".
    """
    if N != 3:
        raise ValueError("the quadrature route supports N = 3")
    if not 0 <= m_max <= 2:
        raise ValueError("m_max must be 0, 1 or 2")
    if width is not None and m_max == 2:
        raise ValueError("the order-2 quadrature is written for f = 1")
    x0 = np.asarray(x0, dtype=float).reshape(N, 2)
    pairs = PairIndexSet(N)
    seps = {p: x0[a] - x0[b] for p, (a, b) in enumerate(pairs.pairs)}
    for p, d in seps.items():
        if np.all(d == 0):
            raise ValueError("initial positions must be pairwise distinct")
    sb = SBetaDensity(beta)
    S = _cumulative_table(sb, t) if m_max >= 2 else None

    terms = [free_term(x0, t, width)]
    errors = [0.0]
    bounds = [1.0 if width is None else math.nan]
    chains = {}
    for m in range(1, m_max + 1):
        total = err = bsum = 0.0
        for chain, _ in pairs.chain_paths(m):
            weight = ChainWeight(x0, chain, pairs, width)
            decay = float(np.sum(seps[chain[0]] ** 2)) / 4.0
            if m == 1:
                f = lambda k: _chain_term_m1(weight, sb, t, decay, k)
            else:
                f = lambda k: _chain_term_m2(weight, sb, S, t, decay, k)
            val = f(n)
            gap = abs(val - f(max(6, n // 2)))
            try:
                bound = term_bound(m, t, beta, max_pair_heat(seps[chain[0]]))
            except ValueError:
                bound = math.nan
            if check_bounds and not math.isnan(bound) and val > bound:
                raise SeriesBoundViolation(f"term_bound: order {m} chain {chain} value {val:.6g} > {bound:.6g}")
            chains[(m, chain)] = (val, bound)
            total += val
            err += gap
            bsum += bound
        terms.append(total)
        errors.append(err)
        bounds.append(bsum)

    prefactor = sum(max_pair_heat(d) for d in seps.values())
    log_ratio = CSZ_BASE * FOUR_PI / tail_ratio
    ltb = log_series_tail_bound(m_max, t, beta, prefactor=prefactor, branching=pairs.E - 1,
                                log_q_over_beta=log_ratio)
    label = "controlled" if ltb < 0 else "uncontrolled"
    meta = dict(N=N, t=t, beta=beta, m_max=m_max, width=width, n=n, tail_ratio=tail_ratio,
                log_q_over_beta=log_ratio)
    return SeriesTerms(terms, errors, bounds, chains, ltb, label, meta)


def compare_series_vs_mc(x0, t: float, eps_grid, phi: Mollifier, cfg: McConfig, lam: float = 0.0,
                         beta: float | None = None, m_max: int = 2, width: float | None = None,
                         importance: str | None = "pair-ground-state") -> dict:
    """Partial sum and tail label of the limit series next to N = 3 Feynman-Kac estimates.

    beta defaults to the mollifier's; the coupling at each epsilon uses lam.
    Report only: whether |MC - partial sum| shrinks along the grid.
    """
    from .mollifier import compute_beta

    beta = compute_beta(phi, lam) if beta is None else beta
    series = limit_series_terms(3, x0, t, beta, m_max=m_max, width=width, check_bounds=False)
    f = None
    if width is not None:
        f = lambda b: np.exp(-np.sum(b * b, axis=(-2, -1)) / (2.0 * width * width))
    rows = []
    for eps in eps_grid:
        sched = CouplingSchedule.build(phi, eps, lam, strict=False, beta=beta)
        est = simulate_fk_nbody(x0, t, sched, phi, cfg, f, importance=importance)
        rows.append(dict(epsilon=eps, mean=est.mean, std_error=est.std_error,
                         distance=abs(est.mean - series.partial_sum), heavy_tail=est.heavy_tail))
    d = [r["distance"] for r in rows]
    trend = [b <= a for a, b in zip(d, d[1:])]
    return dict(partial_sum=series.partial_sum, terms=series.terms, term_errors=series.errors,
                log_tail_bound=series.log_tail_bound, tail=series.tail_label, beta=beta,
                rows=rows, non_increasing_steps=sum(trend), steps=len(trend))


# ---------------------------------------------------------------- CSZ sequence

@dataclass(frozen=True)
class CszRecursion:
    """phi_0 = 1, phi_k(v) = int_0^1 phi_{k-1}(s) ds / sqrt(s (s + v)).

    In y = -log s the kernel becomes (1 + v/s)^{-1/2} dy, a smooth step of
    unit width, and phi_{k-1} grows only polynomially in y; a Nystrom rule
    on unit GL panels over y in [0, y_max] then carries the recursion.
    """

    y_max: float = 140.0
    per_panel: int = 12

    @cached_property
    def _grid(self):
        edges = np.arange(0.0, self.y_max + 1e-9, 1.0)
        y, w = gauss_legendre(edges[:-1], edges[1:], self.per_panel)
        return y.ravel(), w.ravel()

    @cached_property
    def _tables(self):
        y, w = self._grid
        s = np.exp(-y)
        K = w[None, :] / np.sqrt(1.0 + s[:, None] / s[None, :])
        return s, w, K

    def values_at_nodes(self, k: int) -> np.ndarray:
        s, w, K = self._tables
        vals = np.ones_like(s)
        for _ in range(k):
            vals = K @ vals
        return vals

    def __call__(self, k: int, v) -> np.ndarray:
        if k < 0:
            raise ValueError("k must be nonnegative")
        v = np.asarray(v, dtype=float)
        if np.any((v <= 0) | (v > 1)):
            raise ValueError("v must lie in (0, 1]")
        if k == 0:
            return np.ones_like(v)
        s, w, _ = self._tables
        prev = self.values_at_nodes(k - 1)
        kern = w / np.sqrt(1.0 + v[..., None] / s)
        return np.sum(kern * prev, axis=-1)

    def cube_integral(self, m: int) -> float:
        """int_{(0,1)^{m+1}} prod_{l=1}^{m-1} (u_{l+1}(u_{l+1} + u_l))^{-1/2} du = int_0^1 phi_{m-1}."""
        if m < 1:
            raise ValueError("m must be >= 1")
        s, w, _ = self._tables
        # ds = s dy on the same grid
        return float(np.sum(w * s * self.values_at_nodes(m - 1)))


_CSZ = CszRecursion()


def csz_phi_recursion(k: int, v: float) -> float:
    """phi_k(v) of the CSZ sequence."""
    return float(_CSZ(k, v))


def unit_cube_product_integral(m: int) -> float:
    return _CSZ.cube_integral(m)

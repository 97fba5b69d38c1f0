"""Small Gauss-Legendre helpers shared by the deterministic evaluators."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


class QuadratureError(ArithmeticError):
    """Raised when an error estimate exceeds the requested tolerance."""

    def __init__(self, message: str, estimate: float):
        super().__init__(f"{message} (error estimate {estimate:.3e})")
        self.estimate = estimate


@lru_cache(maxsize=64)
def _leggauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(a, b, n: int):
    """Nodes and weights on [a, b]; a and b may be broadcastable arrays.

    Returned arrays carry a trailing axis of length n.
    """
    x, w = _leggauss(n)
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def panel_integral(func, breaks, lo, hi, n: int = 32):
    """Integrate func over [lo, hi] using GL panels split at `breaks`.

    `lo` and `hi` may be arrays of the same shape; func must be vectorized.
    Panels outside [lo, hi] contribute zero.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    br = np.asarray(sorted(set(float(b) for b in breaks)), dtype=float)
    total = np.zeros(np.broadcast(lo, hi).shape)
    for a, b in zip(br[:-1], br[1:]):
        aa = np.clip(lo, a, b)
        bb = np.clip(hi, a, b)
        if np.all(bb <= aa):
            continue
        x, w = gauss_legendre(aa, bb, n)
        total = total + np.sum(func(x) * w, axis=-1)
    return total


def graded_nodes(a: float, b: float, n: int, power: int = 3):
    """GL nodes on [a, b] graded towards a by t = a + (b - a) s^power."""
    s, ws = gauss_legendre(0.0, 1.0, n)
    t = a + (b - a) * s ** power
    w = (b - a) * power * s ** (power - 1) * ws
    return t, w

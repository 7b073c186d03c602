"""Polynomials in Bernstein form on the unit interval."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import comb

from .errors import DomainError


@dataclass(frozen=True, eq=False)
class BernsteinPoly:
    """Polynomial ``sum_i coeffs[i] * B_i^n(xi)`` with ``xi`` in [0, 1]."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.size == 0:
            raise ValueError("a Bernstein polynomial needs at least one coefficient")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    def __call__(self, xi):
        return bernstein_eval(self, xi)

    def __add__(self, other: BernsteinPoly) -> BernsteinPoly:
        a, b = _match_degree(self, other)
        return BernsteinPoly(a + b)

    def __sub__(self, other: BernsteinPoly) -> BernsteinPoly:
        a, b = _match_degree(self, other)
        return BernsteinPoly(a - b)

    def __mul__(self, other):
        if isinstance(other, BernsteinPoly):
            return bernstein_mul(self, other)
        return BernsteinPoly(self.coeffs * float(other))

    __rmul__ = __mul__

    def integral(self) -> float:
        """Exact integral over [0, 1] (mean of the coefficients)."""
        return float(np.mean(self.coeffs))

    def elevate(self, degree: int) -> BernsteinPoly:
        return BernsteinPoly(elevation_matrix(self.degree, degree) @ self.coeffs)


def de_casteljau(coeffs, xi):
    """Evaluate Bernstein coefficients at ``xi`` by repeated interpolation.

    ``coeffs`` has shape ``(n+1,)`` or ``(n+1, d)``; ``xi`` may be a scalar
    or an array. No range check is done here; values outside [0, 1] are
    extrapolated.
    """
    c = np.asarray(coeffs, dtype=float)
    vector = c.ndim == 2
    c2 = c if vector else c[:, None]
    x = np.asarray(xi, dtype=float)
    b = np.broadcast_to(c2, x.shape + c2.shape)
    t = x[..., None, None]
    for r in range(c2.shape[0] - 1, 0, -1):
        b = (1.0 - t) * b[..., :r, :] + t * b[..., 1 : r + 1, :]
    out = b[..., 0, :]
    return out if vector else out[..., 0]


def bernstein_eval(p: BernsteinPoly, xi):
    """Evaluate ``p`` at ``xi`` in [0, 1]; raises DomainError outside."""
    x = np.asarray(xi, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0) or np.any(~np.isfinite(x)):
        raise DomainError(f"xi must lie in [0, 1], got {xi!r}")
    out = de_casteljau(p.coeffs, x)
    return float(out) if np.ndim(out) == 0 else out


@lru_cache(maxsize=None)
def product_tensor(m: int, n: int) -> np.ndarray:
    """Tensor ``T[k, i, j]`` such that ``(a*b)_k = sum_ij T[k,i,j] a_i b_j``."""
    t = np.zeros((m + n + 1, m + 1, n + 1))
    for i in range(m + 1):
        for j in range(n + 1):
            t[i + j, i, j] = comb(m, i, exact=True) * comb(n, j, exact=True) / comb(
                m + n, i + j, exact=True
            )
    t.flags.writeable = False
    return t


def bernstein_mul(a: BernsteinPoly, b: BernsteinPoly) -> BernsteinPoly:
    """Exact product, of degree ``a.degree + b.degree``."""
    t = product_tensor(a.degree, b.degree)
    return BernsteinPoly(np.einsum("kij,i,j->k", t, a.coeffs, b.coeffs))


def bernstein_derivative(p: BernsteinPoly) -> BernsteinPoly:
    """Derivative in Bernstein form; a constant maps to the zero constant."""
    if p.degree == 0:
        return BernsteinPoly([0.0])
    return BernsteinPoly(p.degree * np.diff(p.coeffs))


@lru_cache(maxsize=None)
def elevation_matrix(n: int, r: int) -> np.ndarray:
    """Matrix raising Bernstein coefficients from degree ``n`` to ``r >= n``."""
    if r < n:
        raise ValueError("cannot lower the degree by elevation")
    e = np.zeros((r + 1, n + 1))
    for k in range(r + 1):
        for i in range(max(0, k - (r - n)), min(n, k) + 1):
            e[k, i] = comb(n, i, exact=True) * comb(r - n, k - i, exact=True) / comb(
                r, k, exact=True
            )
    e.flags.writeable = False
    return e


def _match_degree(a: BernsteinPoly, b: BernsteinPoly):
    d = max(a.degree, b.degree)
    return elevation_matrix(a.degree, d) @ a.coeffs, elevation_matrix(b.degree, d) @ b.coeffs


def basis(n: int, xi) -> np.ndarray:
    """Bernstein basis values ``B_i^n(xi)``, shape ``xi.shape + (n+1,)``."""
    x = np.asarray(xi, dtype=float)[..., None]
    i = np.arange(n + 1)
    return comb(n, i) * x**i * (1.0 - x) ** (n - i)

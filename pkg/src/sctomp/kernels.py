"""Differentiable (JAX) versions of the PH segment computations.

These mirror :mod:`sctomp.ph` but operate on raw coefficient arrays so they
can be traced, jitted and differentiated inside the stage-1 and stage-2
problems. Tests cross-check every function here against the numpy path.
"""

from __future__ import annotations

import jax.numpy as jnp
import numpy as np
from scipy.special import comb

from .bernstein import product_tensor


def prod(a, b):
    t = product_tensor(a.shape[0] - 1, b.shape[0] - 1)
    return jnp.einsum("kij,i,j->k", t, a, b)


def hodograph_coeffs(tuples):
    u, v, g, h = tuples.T
    x = prod(u, u) + prod(v, v) - prod(g, g) - prod(h, h)
    y = 2.0 * (prod(u, h) + prod(v, g))
    z = 2.0 * (prod(v, h) - prod(u, g))
    return jnp.stack([x, y, z], axis=1)


def sigma_coeffs(tuples):
    u, v, g, h = tuples.T
    return prod(u, u) + prod(v, v) + prod(g, g) + prod(h, h)


def control_points(origin, tuples):
    """Bezier control points (2n+2, 3) of the segment starting at ``origin``."""
    hod = hodograph_coeffs(tuples)
    deg = hod.shape[0]
    return jnp.concatenate([origin[None, :], origin[None, :] + jnp.cumsum(hod, axis=0) / deg])


def basis(n, s):
    """Bernstein basis of degree ``n`` at scalar ``s`` (integer powers keep AD finite)."""
    return jnp.stack([comb(n, i) * s**i * (1.0 - s) ** (n - i) for i in range(n + 1)])


def quat_at(tuples, s):
    """``Z(s)`` and ``Z'(s)``."""
    n = tuples.shape[0] - 1
    q = basis(n, s) @ tuples
    dq = basis(n - 1, s) @ (n * jnp.diff(tuples, axis=0))
    return q, dq


def rotation_columns(q):
    u, v, g, h = q
    e1 = jnp.stack([u * u + v * v - g * g - h * h, 2 * (v * g + u * h), 2 * (v * h - u * g)])
    e2 = jnp.stack([2 * (v * g - u * h), u * u - v * v + g * g - h * h, 2 * (g * h + u * v)])
    e3 = jnp.stack([2 * (v * h + u * g), 2 * (g * h - u * v), u * u - v * v - g * g + h * h])
    return jnp.stack([e1, e2, e3], axis=1)


def chi_numerator(q, dq):
    u, v, g, h = q
    du, dv, dg, dh = dq
    return 2.0 * jnp.stack(
        [
            u * dv - v * du - g * dh + h * dg,
            u * dg - g * du - h * dv + v * dh,
            u * dh - h * du - v * dg + g * dv,
        ]
    )


def frame_at(tuples, s):
    """``(sigma, R, chi)`` of one segment at local parameter ``s``."""
    q, dq = quat_at(tuples, s)
    sigma = q @ q
    return sigma, rotation_columns(q) / sigma, chi_numerator(q, dq) / sigma


def position_at(points, s):
    return basis(points.shape[0] - 1, s) @ points


def gauss_legendre(npts: int):
    """Nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w

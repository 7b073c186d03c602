"""Path-parametrized dynamics along a PH spline.

A point ``p`` moving with velocity ``v`` near the spline is described by the
path parameter ``xi`` and transverse offsets ``w = (w1, w2)`` along the
frame axes ``e2, e3``. With the rotation rate ``chi`` of the frame::

    xi_dot = e1 . v / (sigma - chi3 w1 + chi2 w2)
    w1_dot = e2 . v + xi_dot chi1 w2
    w2_dot = e3 . v - xi_dot chi1 w1

Using ``xi`` as independent variable turns ``x_dot = f(x, u)`` into
``dx/dxi = f / xi_dot`` and ``dt/dxi = 1 / xi_dot``.
"""

from __future__ import annotations

import math

import jax.numpy as jnp
import numpy as np

from .errors import ForwardProgressError, OutOfTubeError
from .models import DynamicsModel
from .spline import PHSpline

DENOM_MIN = 1e-6
XIDOT_MIN = 1e-3


def transverse_coordinates(spline: PHSpline, xi: float, p):
    """Offsets ``(w1, w2)`` of ``p`` from ``gamma(xi)`` along ``e2(xi), e3(xi)``."""
    fr = spline.frame(xi)
    d = np.asarray(p, float) - fr.position
    return float(fr.e2 @ d), float(fr.e3 @ d)


def rate_denominator(spline: PHSpline, xi: float, p) -> float:
    fr = spline.frame(xi)
    d = np.asarray(p, float) - fr.position
    w1, w2 = fr.e2 @ d, fr.e3 @ d
    return float(fr.sigma - fr.chi[2] * w1 + fr.chi[1] * w2)


def spatial_rate(spline: PHSpline, xi: float, p, v, denom_min: float = DENOM_MIN) -> float:
    """Rate of the path parameter for a point at ``p`` moving with velocity ``v``.

    Raises
    ------
    OutOfTubeError
        If the denominator is at most ``denom_min``: the point is too far
        from the path (beyond the local radius of curvature) for the
        projection to be well posed.
    """
    fr = spline.frame(xi)
    d = np.asarray(p, float) - fr.position
    w1, w2 = fr.e2 @ d, fr.e3 @ d
    den = fr.sigma - fr.chi[2] * w1 + fr.chi[1] * w2
    if not den > denom_min:
        raise OutOfTubeError(f"point leaves the tube at xi={xi:.6g} (denominator {den:.3e})")
    return float(fr.e1 @ np.asarray(v, float) / den)


def transverse_rates(spline: PHSpline, xi: float, p, v, denom_min: float = DENOM_MIN):
    """``(xi_dot, w1_dot, w2_dot)`` for a point at ``p`` with velocity ``v``."""
    fr = spline.frame(xi)
    v = np.asarray(v, float)
    w1, w2 = transverse_coordinates(spline, xi, p)
    xd = spatial_rate(spline, xi, p, v, denom_min)
    return (
        xd,
        float(fr.e2 @ v + xd * fr.chi[0] * w2),
        float(fr.e3 @ v - xd * fr.chi[0] * w1),
    )


def spatial_ode(model: DynamicsModel, spline: PHSpline, xidot_min: float = XIDOT_MIN,
                denom_min: float = DENOM_MIN):
    """Right-hand side ``(xi, x, u) -> (dx/dxi, dt/dxi)``.

    Raises ForwardProgressError when ``xi_dot <= xidot_min`` and
    OutOfTubeError when the rate is undefined.
    """

    def rhs(xi, x, u):
        x = np.asarray(x, float)
        xd = spatial_rate(spline, xi, np.asarray(model.h(x)), np.asarray(model.velocity(x)),
                          denom_min)
        if not xd > xidot_min:
            raise ForwardProgressError(
                f"path parameter rate {xd:.3e} at xi={xi:.6g} is below {xidot_min:g}"
            )
        return np.asarray(model.f(x, np.asarray(u, float))) / xd, 1.0 / xd

    return rhs


def rk4_step(fun, x, u, dt):
    k1 = fun(x, u)
    k2 = fun(x + 0.5 * dt * k1, u)
    k3 = fun(x + 0.5 * dt * k2, u)
    k4 = fun(x + dt * k3, u)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate(model: DynamicsModel, x0, inputs, durations, steps: int = 40):
    """Time-domain RK4 with piecewise-constant inputs; returns the states at interval ends."""
    x = jnp.asarray(x0, float)
    out = [np.asarray(x)]
    for u, dt in zip(np.asarray(inputs, float), np.asarray(durations, float)):
        h = dt / steps
        u = jnp.asarray(u)
        for _ in range(steps):
            x = model.normalize(rk4_step(model.f, x, u, h))
        out.append(np.asarray(x))
    return np.array(out)


def roundtrip_check(model: DynamicsModel, spline: PHSpline, xi_grid, states, inputs,
                    times=None, substeps: int = 4, refine: int = 10) -> float:
    """Largest deviation between a spatial trajectory and its time-domain re-simulation.

    ``states`` holds one row per grid point. The time grid is taken from
    ``times`` or, when that is omitted, from the last column of ``states``
    (the time channel). The simulation uses the same piecewise-constant
    inputs and ``refine * substeps`` RK4 steps per interval.
    """
    xi_grid = np.asarray(xi_grid, float)
    if xi_grid.size < 2:
        return 0.0
    if xi_grid[0] < 0.0 or xi_grid[-1] > spline.m + 1e-12:
        raise ValueError(f"xi grid leaves [0, {spline.m}]")
    states = np.asarray(states, float)
    if times is None:
        times = states[:, -1]
        states = states[:, :-1]
    times = np.asarray(times, float)
    sim = simulate(model, states[0], inputs, np.diff(times), steps=refine * substeps)
    dev = float(np.max(np.abs(sim - states)))
    return dev if math.isfinite(dev) else math.inf

"""Pythagorean-hodograph segments generated by quaternion polynomials.

A quaternion polynomial ``Z = u + v i + g j + h k`` of degree ``n`` generates
the hodograph ``Z i Z*`` (degree ``2n``), the parametric speed
``sigma = |Z|^2`` and the Euler-Rodrigues frame, whose columns are the images
of the basis vectors under ``Z . Z*`` normalized by ``sigma``. Everything here
is numpy and stays in Bernstein form on the local parameter interval [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bernstein import BernsteinPoly, de_casteljau, product_tensor
from .errors import DegenerateCurveError, DomainError, RegularityError

SIGMA_EPS = 1e-8


# --- quaternion helpers -----------------------------------------------------


def qmul(p, q):
    """Hamilton product of quaternions stored as ``(w, x, y, z)``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    w1, x1, y1, z1 = np.moveaxis(p, -1, 0)
    w2, x2, y2, z2 = np.moveaxis(q, -1, 0)
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def qconj(q):
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def rotation_columns(q):
    """Unnormalized ``[q i q*, q j q*, q k q*]``; equals ``|q|^2`` times a rotation."""
    u, v, g, h = np.moveaxis(np.asarray(q, dtype=float), -1, 0)
    cols = [
        [u * u + v * v - g * g - h * h, 2 * (v * g + u * h), 2 * (v * h - u * g)],
        [2 * (v * g - u * h), u * u - v * v + g * g - h * h, 2 * (g * h + u * v)],
        [2 * (v * h + u * g), 2 * (g * h - u * v), u * u - v * v - g * g + h * h],
    ]
    # stack so that [..., row, col]
    return np.stack([np.stack(c, axis=-1) for c in cols], axis=-1)


def quat_to_matrix(q):
    q = np.asarray(q, dtype=float)
    return rotation_columns(q) / np.sum(q * q, axis=-1)[..., None, None]


def shortest_arc(direction):
    """Unit quaternion rotating the x axis onto ``direction`` by the smallest angle."""
    d = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(d)
    if norm == 0.0:
        return np.array([1.0, 0.0, 0.0, 0.0])
    d = d / norm
    q = np.array([1.0 + d[0], 0.0, -d[2], d[1]])
    n = np.linalg.norm(q)
    if n < 1e-12:  # antiparallel: half turn about z
        return np.array([0.0, 0.0, 0.0, 1.0])
    return q / n


# --- quaternion polynomials -------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuaternionPolynomial:
    """Degree-``n`` quaternion polynomial; ``tuples[i] = (u_i, v_i, g_i, h_i)``."""

    tuples: np.ndarray

    def __post_init__(self):
        t = np.array(self.tuples, dtype=float)
        if t.ndim != 2 or t.shape[1] != 4 or t.shape[0] < 1:
            raise ValueError(f"expected an (n+1, 4) array of tuples, got shape {t.shape}")
        if not np.all(np.isfinite(t)):
            raise ValueError("quaternion coefficients must be finite")
        if not np.any(t):
            raise DegenerateCurveError("quaternion polynomial is identically zero")
        t.flags.writeable = False
        object.__setattr__(self, "tuples", t)

    @property
    def n(self) -> int:
        return self.tuples.shape[0] - 1

    def channel(self, i: int) -> BernsteinPoly:
        return BernsteinPoly(self.tuples[:, i])

    @property
    def u(self):
        return self.channel(0)

    @property
    def v(self):
        return self.channel(1)

    @property
    def g(self):
        return self.channel(2)

    @property
    def h(self):
        return self.channel(3)

    def __call__(self, xi):
        return de_casteljau(self.tuples, xi)

    def derivative_tuples(self) -> np.ndarray:
        """Bernstein tuples of ``Z'`` (degree ``n - 1``; one zero tuple if ``n = 0``)."""
        if self.n == 0:
            return np.zeros((1, 4))
        return self.n * np.diff(self.tuples, axis=0)

    @classmethod
    def constant(cls, q, n: int = 4) -> QuaternionPolynomial:
        return cls(np.tile(np.asarray(q, dtype=float), (n + 1, 1)))


def _prod(a, b):
    """Bernstein product of coefficient vectors (degrees inferred)."""
    return np.einsum("kij,i,j->k", product_tensor(a.size - 1, b.size - 1), a, b)


def _hodograph_coeffs(tuples):
    u, v, g, h = tuples.T
    x = _prod(u, u) + _prod(v, v) - _prod(g, g) - _prod(h, h)
    y = 2.0 * (_prod(u, h) + _prod(v, g))
    z = 2.0 * (_prod(v, h) - _prod(u, g))
    return np.stack([x, y, z], axis=1)


def _sigma_coeffs(tuples):
    return sum(_prod(c, c) for c in tuples.T)


def _frame_numerator_coeffs(tuples):
    """Coefficients of the unnormalized frame columns, shape (2n+1, 3, 3)."""
    u, v, g, h = tuples.T
    p = _prod
    e1 = [p(u, u) + p(v, v) - p(g, g) - p(h, h), 2 * (p(v, g) + p(u, h)), 2 * (p(v, h) - p(u, g))]
    e2 = [2 * (p(v, g) - p(u, h)), p(u, u) - p(v, v) + p(g, g) - p(h, h), 2 * (p(g, h) + p(u, v))]
    e3 = [2 * (p(v, h) + p(u, g)), 2 * (p(g, h) - p(u, v)), p(u, u) - p(v, v) - p(g, g) + p(h, h)]
    return np.stack([np.stack(e1, axis=-1), np.stack(e2, axis=-1), np.stack(e3, axis=-1)], axis=-1)


def _chi_numerator_coeffs(tuples):
    """Coefficients of ``2 vec(Z* Z')``, so that ``chi = numerator / sigma``."""
    n = tuples.shape[0] - 1
    if n == 0:
        return np.zeros((1, 3))
    u, v, g, h = tuples.T
    du, dv, dg, dh = (n * np.diff(tuples, axis=0)).T
    p = _prod
    c1 = 2 * (p(u, dv) - p(v, du) - p(g, dh) + p(h, dg))
    c2 = 2 * (p(u, dg) - p(g, du) - p(h, dv) + p(v, dh))
    c3 = 2 * (p(u, dh) - p(h, du) - p(v, dg) + p(g, dv))
    return np.stack([c1, c2, c3], axis=1)


def hodograph(z: QuaternionPolynomial):
    """Components ``(x', y', z')`` of ``Z i Z*`` as degree-``2n`` Bernstein polynomials."""
    c = _hodograph_coeffs(z.tuples)
    return tuple(BernsteinPoly(c[:, k]) for k in range(3))


def parametric_speed(z: QuaternionPolynomial) -> BernsteinPoly:
    """``sigma = u^2 + v^2 + g^2 + h^2`` in Bernstein form."""
    return BernsteinPoly(_sigma_coeffs(z.tuples))


def _check_xi(xi):
    if not (0.0 <= xi <= 1.0):
        raise DomainError(f"local parameter must lie in [0, 1], got {xi!r}")


def erf_frame(z: QuaternionPolynomial, xi: float) -> np.ndarray:
    """Euler-Rodrigues frame at ``xi``; columns are ``e1, e2, e3``."""
    _check_xi(xi)
    q = z(xi)
    sigma = float(q @ q)
    if sigma < SIGMA_EPS:
        raise DegenerateCurveError(f"parametric speed {sigma:.3e} vanishes at xi={xi}")
    return rotation_columns(q) / sigma


def frame_angular_velocity(z: QuaternionPolynomial, xi: float) -> np.ndarray:
    """Frame rotation rate ``(chi1, chi2, chi3)`` per unit of ``xi``, in frame axes."""
    _check_xi(xi)
    q = z(xi)
    sigma = float(q @ q)
    if sigma < SIGMA_EPS:
        raise DegenerateCurveError(f"parametric speed {sigma:.3e} vanishes at xi={xi}")
    dq = de_casteljau(z.derivative_tuples(), xi)
    return 2.0 * qmul(qconj(q), dq)[1:] / sigma


# --- segments ---------------------------------------------------------------


@dataclass(frozen=True)
class FrameSample:
    position: np.ndarray
    rotation: np.ndarray
    sigma: float
    chi: np.ndarray

    @property
    def e1(self):
        return self.rotation[:, 0]

    @property
    def e2(self):
        return self.rotation[:, 1]

    @property
    def e3(self):
        return self.rotation[:, 2]


def _rational_jet(num_jet, den_jet):
    """Value and first two derivatives of ``num / den`` from their jets."""
    n0, n1, n2 = num_jet
    d0, d1, d2 = den_jet
    f0 = n0 / d0
    f1 = (n1 - f0 * d1) / d0
    f2 = (n2 - 2.0 * f1 * d1 - f0 * d2) / d0
    return f0, f1, f2


def _poly_jet(coeffs, xi, order=2):
    """Values of a Bernstein polynomial and its derivatives up to ``order``."""
    out = []
    c = np.asarray(coeffs, dtype=float)
    for _ in range(order + 1):
        out.append(de_casteljau(c, xi))
        deg = c.shape[0] - 1
        c = deg * np.diff(c, axis=0) if deg > 0 else np.zeros_like(c[:1])
    return out


@dataclass(frozen=True, eq=False)
class PHSegment:
    """One PH curve piece starting at ``origin``.

    Construction precomputes the hodograph, parametric speed and Bezier
    control points, and rejects segments whose speed polynomial has a
    non-positive Bernstein coefficient.
    """

    z: QuaternionPolynomial
    origin: np.ndarray
    hodograph_coeffs: np.ndarray = field(init=False, repr=False)
    sigma: BernsteinPoly = field(init=False, repr=False)
    control_points: np.ndarray = field(init=False, repr=False)
    _frame_num: np.ndarray = field(init=False, repr=False)
    _chi_num: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not isinstance(self.z, QuaternionPolynomial):
            object.__setattr__(self, "z", QuaternionPolynomial(self.z))
        o = np.array(self.origin, dtype=float).reshape(3)
        o.flags.writeable = False
        object.__setattr__(self, "origin", o)
        t = self.z.tuples
        sig = _sigma_coeffs(t)
        if np.any(sig <= 0.0):
            k = int(np.argmin(sig))
            raise RegularityError(
                f"parametric speed coefficient {k} is {sig[k]:.3e} (must be > 0)", coefficient=k
            )
        hod = _hodograph_coeffs(t)
        pts = np.vstack([o, o + np.cumsum(hod, axis=0) / (2 * self.z.n + 1)])
        for name, val in [
            ("hodograph_coeffs", hod),
            ("sigma", BernsteinPoly(sig)),
            ("control_points", pts),
            ("_frame_num", _frame_numerator_coeffs(t)),
            ("_chi_num", _chi_numerator_coeffs(t)),
        ]:
            if isinstance(val, np.ndarray):
                val.flags.writeable = False
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.z.n

    @property
    def degree(self) -> int:
        """Degree of the curve itself, ``2n + 1``."""
        return 2 * self.z.n + 1

    @property
    def end(self) -> np.ndarray:
        return self.control_points[-1]

    def position(self, xi):
        return de_casteljau(self.control_points, xi)

    def velocity(self, xi):
        return de_casteljau(self.hodograph_coeffs, xi)

    def frame(self, xi: float) -> FrameSample:
        _check_xi(xi)
        sigma = float(de_casteljau(self.sigma.coeffs, xi))
        if sigma < SIGMA_EPS:
            raise DegenerateCurveError(f"parametric speed {sigma:.3e} vanishes at xi={xi}")
        return FrameSample(
            position=self.position(xi),
            rotation=de_casteljau(self._frame_num.reshape(-1, 9), xi).reshape(3, 3) / sigma,
            sigma=sigma,
            chi=de_casteljau(self._chi_num, xi) / sigma,
        )

    def jet(self, xi: float):
        """``sigma``, ``R`` and ``chi`` with their first two derivatives at ``xi``.

        Returns a dict of three-element lists (value, first, second derivative),
        computed exactly by the quotient rule on the polynomial numerators.
        """
        s = _poly_jet(self.sigma.coeffs, xi)
        num = _poly_jet(self._frame_num.reshape(-1, 9), xi)
        rot = _rational_jet(num, [x for x in s])
        chi = _rational_jet(_poly_jet(self._chi_num, xi), s)
        return {
            "sigma": list(s),
            "rotation": [r.reshape(3, 3) for r in rot],
            "chi": list(chi),
        }


def control_points(seg: PHSegment) -> np.ndarray:
    """Bezier control points of ``seg`` (``2n + 2`` points)."""
    return np.array(seg.control_points)


def arc_length(seg: PHSegment) -> float:
    """Exact arc length: integral of ``sigma`` over the unit interval."""
    return seg.sigma.integral()

"""Stage 1: a C3-joined PH spline inside a corridor, optimal for a geometric criterion.

Public parametrization (``FreeCoefficients``)
---------------------------------------------
A flat vector of reals, 4 per quaternion tuple, in this order:

* segment 1, tuples 1..4 (tuple 0 is fixed by the start frame);
* segments 2..m, the last tuple (tuples 0..3 follow from C3 continuity).

When the corridor fixes the goal frame, the last tuple of segment ``m`` is
taken from it and is dropped from the vector. Lengths are therefore
``16 + 4(m-1)`` and ``12 + 4(m-1)``.

Internal parametrization
------------------------
Chaining the continuity relations segment after segment is an
extrapolation; it amplifies rounding and makes the optimization landscape
badly scaled for more than a few segments. The optimizer therefore works
on the equivalent clamped quartic B-spline form of ``Z(xi)`` (``m + 4``
control quaternions, interior knots at the segment joins), which spans
exactly the same C3 space. Results are converted back to the public
layout.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import jax
import jax.numpy as jnp
import numpy as np
from scipy.interpolate import BSpline

from . import kernels
from .bernstein import basis
from .corridor import Corridor
from .errors import RegularityError, SplineOptimizationError
from .kernels import gauss_legendre
from .nlp import NlpOptions, NlpProblem, SolveReport, minimize
from .ph import PHSegment, QuaternionPolynomial, shortest_arc
from .spline import PHSpline

log = logging.getLogger(__name__)

DEGREE = 4
CRITERIA = ("arc_length", "energy", "twist")


@dataclass(frozen=True)
class SplineConfig:
    """Stage-1 settings.

    Parameters
    ----------
    start_scale, goal_scale
        Magnitude of the boundary quaternions; sets the parametric speed
        ``sigma = scale**2`` at the ends.
    sigma_min
        Lower bound on every Bernstein coefficient of ``sigma``.
    margin
        Control points are kept this far inside every halfspace.
    planar
        ``None`` detects xy-planar corridors and restricts ``Z`` to
        ``u + h k``; ``False`` always optimizes all four components.
    """

    start_scale: float = 1.0
    goal_scale: float = 1.0
    sigma_min: float = 1e-3
    margin: float = 1e-5
    jitter: float = 1e-3
    seed: int = 0
    planar: bool | None = None
    quadrature_points: int = 64
    nlp: NlpOptions = field(
        default_factory=lambda: NlpOptions(tol_feas=1e-9, tol_opt=1e-6, max_outer=60, max_inner=2000)
    )


# -- coefficient bookkeeping --------------------------------------------------


def coefficient_ledger(m: int, fixed_start: bool = True, fixed_goal_frame: bool = True,
                       endpoint: str = "constraint") -> int:
    """Degrees of freedom left after continuity, frame fixing and the endpoint condition."""
    if m < 1:
        raise ValueError("m must be at least 1")
    if endpoint not in ("constraint", "none"):
        raise ValueError("endpoint must be 'constraint' or 'none'")
    dof = 20 + 4 * (m - 1)
    dof -= 4 * int(fixed_start) + 4 * int(fixed_goal_frame)
    dof -= 3 if endpoint == "constraint" else 0
    return dof


def free_length(m: int, fixed_goal_frame: bool) -> int:
    return (12 if fixed_goal_frame else 16) + 4 * (m - 1)


def continuity_tuples(prev) -> np.ndarray:
    """First four tuples of the next quartic segment, C3-joined to ``prev`` (5, 4)."""
    a = np.asarray(prev, float)
    return np.stack([
        a[4],
        2 * a[4] - a[3],
        a[2] - 4 * a[3] + 4 * a[4],
        -a[1] + 6 * a[2] - 12 * a[3] + 8 * a[4],
    ])


def start_quaternion(corridor: Corridor, config: SplineConfig) -> np.ndarray:
    """Boundary tuple of segment 1: the start frame (or chord-aligned default) times scale."""
    q = corridor.start_frame
    if q is None:
        wp = corridor.waypoints()
        q = shortest_arc(wp[1] - wp[0])
    return config.start_scale * np.asarray(q, float)


def goal_quaternion(corridor: Corridor, config: SplineConfig, previous) -> np.ndarray | None:
    """Goal tuple, with its sign matched to ``previous`` (both signs give the same frame)."""
    if corridor.goal_frame is None:
        return None
    q = config.goal_scale * np.asarray(corridor.goal_frame, float)
    return -q if np.dot(q, previous) < 0.0 else q


def _segments(tuples, start) -> PHSpline:
    segs = []
    origin = np.asarray(start, float)
    for k, t in enumerate(tuples):
        try:
            seg = PHSegment(QuaternionPolynomial(t), origin)
        except RegularityError as err:
            raise RegularityError(f"segment {k + 1}: {err}", segment=k + 1,
                                  coefficient=err.coefficient) from None
        segs.append(seg)
        origin = seg.end
    return PHSpline(tuple(segs))


def assemble_tuples(free, corridor: Corridor, config: SplineConfig | None = None) -> np.ndarray:
    """All Bernstein tuples ``(m, 5, 4)`` from the public free-coefficient vector."""
    config = config or SplineConfig()
    m = corridor.m
    fixed_goal = corridor.goal_frame is not None
    free = np.asarray(free, float).reshape(-1)
    if free.size != free_length(m, fixed_goal):
        raise ValueError(
            f"expected {free_length(m, fixed_goal)} free coefficients for m={m}, got {free.size}"
        )
    f = free.reshape(-1, 4)
    out = np.zeros((m, 5, 4))
    out[0, 0] = start_quaternion(corridor, config)
    if m == 1 and fixed_goal:
        out[0, 1:4] = f[:3]
        out[0, 4] = goal_quaternion(corridor, config, out[0, 3])
        return out
    out[0, 1:5] = f[:4]
    for k in range(1, m):
        out[k, :4] = continuity_tuples(out[k - 1])
        if k == m - 1 and fixed_goal:
            out[k, 4] = goal_quaternion(corridor, config, out[k, 3])
        else:
            out[k, 4] = f[3 + k]
    return out


def assemble_spline(free, corridor: Corridor, config: SplineConfig | None = None) -> PHSpline:
    """Spline from free coefficients; raises RegularityError on a non-positive sigma coefficient."""
    return _segments(assemble_tuples(free, corridor, config), corridor.start)


def spline_control_points(free, corridor: Corridor, config: SplineConfig | None = None):
    """Per-segment Bezier control points ``(2n+2, 3)`` of the assembled spline."""
    return assemble_spline(free, corridor, config).control_points()


def free_from_tuples(tuples, fixed_goal_frame: bool) -> np.ndarray:
    """Inverse of :func:`assemble_tuples` for tuples that already satisfy the joins."""
    t = np.asarray(tuples, float)
    m = t.shape[0]
    parts = [t[0, 1:4]] if (m == 1 and fixed_goal_frame) else [t[0, 1:5]]
    last = m - 1 if fixed_goal_frame else m
    parts += [t[k, 4:5] for k in range(1, last)]
    return np.concatenate(parts).reshape(-1)


# -- B-spline form --------------------------------------------------------------


@lru_cache(maxsize=None)
def bspline_to_bernstein(m: int, n: int = DEGREE) -> np.ndarray:
    """Matrix ``M`` with ``tuples[k] = M[k] @ P`` for clamped B-spline coefficients ``P``."""
    knots = np.r_[np.zeros(n + 1), np.arange(1, m), np.full(n + 1, m)]
    nb = m + n
    spl = BSpline(knots, np.eye(nb), n)
    s = np.linspace(0.0, 1.0, n + 1)
    vander = np.stack([basis(n, x) for x in s])
    mats = np.stack([np.linalg.solve(vander, spl(k + s)) for k in range(m)])
    mats[np.abs(mats) < 1e-14] = 0.0
    return mats


def greville(m: int, n: int = DEGREE) -> np.ndarray:
    knots = np.r_[np.zeros(n + 1), np.arange(1, m), np.full(n + 1, m)]
    return np.array([knots[j + 1 : j + n + 1].mean() for j in range(m + n)])


def _slerp(a, b, t):
    a_n, b_n = np.linalg.norm(a), np.linalg.norm(b)
    ua, ub = a / a_n, b / b_n
    dot = np.clip(ua @ ub, -1.0, 1.0)
    ang = math.acos(dot)
    if ang < 1e-9:
        u = ua
    else:
        u = (math.sin((1 - t) * ang) * ua + math.sin(t * ang) * ub) / math.sin(ang)
    return ((1 - t) * a_n + t * b_n) * u / np.linalg.norm(u)


def planar_mode(corridor: Corridor, config: SplineConfig) -> bool:
    if config.planar is False:
        return False
    compatible = all(
        q is None or (abs(q[1]) < 1e-12 and abs(q[2]) < 1e-12)
        for q in (corridor.start_frame, corridor.goal_frame)
    )
    if config.planar:
        if not compatible:
            raise ValueError("planar mode needs boundary frames that rotate about z only")
        return True
    return compatible and corridor.is_planar()


def initial_control_quaternions(corridor: Corridor, config: SplineConfig) -> np.ndarray:
    """B-spline coefficients ``(m+4, 4)`` of a chord-following start guess.

    Each segment gets the constant quaternion that maps i onto its waypoint
    chord with length-matched scale; control quaternions interpolate these
    (slerp) at the Greville abscissae. The boundary ones are the fixed frames.
    """
    m = corridor.m
    wp = corridor.waypoints()
    p0 = start_quaternion(corridor, config)
    seg_q = []
    prev = p0
    for k in range(m):
        chord = wp[k + 1] - wp[k]
        length = max(float(np.linalg.norm(chord)), 1e-3)
        q = math.sqrt(length) * shortest_arc(chord)
        if q @ prev < 0.0:
            q = -q
        seg_q.append(q)
        prev = q
    P = np.zeros((m + 4, 4))
    for j, g in enumerate(greville(m)):
        t = min(max(g - 0.5, 0.0), m - 1.0)
        k = min(int(math.floor(t)), m - 2) if m > 1 else 0
        P[j] = seg_q[0] if m == 1 else _slerp(seg_q[k], seg_q[k + 1], t - k)
    P[0] = p0
    goal = goal_quaternion(corridor, config, P[-2])
    if goal is not None:
        P[-1] = goal
    return P


# -- the stage-1 problem ----------------------------------------------------------


@dataclass
class _Stage1:
    corridor: Corridor
    config: SplineConfig
    criterion: str

    def __post_init__(self):
        c = self.corridor
        m = c.m
        self.m = m
        self.M = bspline_to_bernstein(m)
        self.planar = planar_mode(c, self.config)
        self.P0 = initial_control_quaternions(c, self.config)
        fixed_goal = c.goal_frame is not None
        rows = list(range(1, m + 3)) + ([] if fixed_goal else [m + 3])
        cols = [0, 3] if self.planar else [0, 1, 2, 3]
        self.free_idx = np.array([r * 4 + k for r in rows for k in cols])

        nodes, weights = gauss_legendre(self.config.quadrature_points)
        self.weights = jnp.asarray(weights)
        self.B = jnp.asarray(np.stack([basis(DEGREE, s) for s in nodes]))
        dbasis = np.zeros((nodes.size, DEGREE + 1))
        low = np.stack([basis(DEGREE - 1, s) for s in nodes])
        dbasis[:, :-1] -= DEGREE * low
        dbasis[:, 1:] += DEGREE * low
        self.dB = jnp.asarray(dbasis)

        # containment rows: every control point except the fixed start and goal
        rows_a, rows_b, rows_seg, rows_pt = [], [], [], []
        npts = 2 * DEGREE + 2
        for k, region in enumerate(c.regions):
            norms = np.linalg.norm(region.A, axis=1)
            for i in range(npts):
                if (k == 0 and i == 0) or (k == m - 1 and i == npts - 1):
                    continue
                rows_a.append(region.A)
                rows_b.append(region.b - self.config.margin * norms)
                rows_seg += [k] * len(region.b)
                rows_pt += [i] * len(region.b)
        self.cont_A = jnp.asarray(np.vstack(rows_a))
        self.cont_b = jnp.asarray(np.concatenate(rows_b))
        self.cont_seg = np.array(rows_seg)
        self.cont_pt = np.array(rows_pt)
        self.n_cont = self.cont_b.shape[0]

        self._obj = jax.jit(jax.value_and_grad(self._objective))
        self._eq = jax.jit(self._eq_fun)
        self._eq_jac = jax.jit(jax.jacfwd(self._eq_fun))
        self._ineq = jax.jit(self._ineq_fun)
        self._ineq_jac = jax.jit(jax.jacfwd(self._ineq_fun))

    # variables <-> coefficients
    def tuples(self, y):
        P = jnp.asarray(self.P0.reshape(-1)).at[self.free_idx].set(y).reshape(-1, 4)
        return jnp.einsum("kij,jc->kic", self.M, P)

    def y0(self):
        rng = np.random.default_rng(self.config.seed)
        y = self.P0.reshape(-1)[self.free_idx]
        return y + rng.uniform(-self.config.jitter, self.config.jitter, y.size)

    def _points(self, T):
        origin = jnp.asarray(self.corridor.start)
        pts = []
        for k in range(self.m):
            cp = kernels.control_points(origin, T[k])
            pts.append(cp)
            origin = cp[-1]
        return jnp.stack(pts)

    def _chi_sigma(self, T):
        q = jnp.einsum("si,kic->ksc", self.B, T)
        dq = jnp.einsum("si,kic->ksc", self.dB, T)
        u, v, g, h = (q[..., i] for i in range(4))
        du, dv, dg, dh = (dq[..., i] for i in range(4))
        sig = u * u + v * v + g * g + h * h
        chi = 2.0 * jnp.stack([
            u * dv - v * du - g * dh + h * dg,
            u * dg - g * du - h * dv + v * dh,
            u * dh - h * du - v * dg + g * dv,
        ], axis=-1) / sig[..., None]
        return chi, sig

    def functionals(self, T):
        length = jnp.sum(jax.vmap(kernels.sigma_coeffs)(T)) / (2 * DEGREE + 1)
        chi, _ = self._chi_sigma(T)
        energy = jnp.sum(self.weights[None, :] * jnp.sum(chi * chi, axis=-1))
        twist = jnp.sum(self.weights[None, :] * chi[..., 0] ** 2)
        return length, energy, twist

    def _objective(self, y):
        vals = dict(zip(CRITERIA, self.functionals(self.tuples(y))))
        return vals[self.criterion]

    def _eq_fun(self, y):
        pts = self._points(self.tuples(y))
        return pts[-1, -1] - jnp.asarray(self.corridor.goal)

    def _ineq_fun(self, y):
        T = self.tuples(y)
        pts = self._points(T)
        p = pts[self.cont_seg, self.cont_pt]
        cont = jnp.sum(self.cont_A * p, axis=1) - self.cont_b
        sig = jax.vmap(kernels.sigma_coeffs)(T).reshape(-1)
        return jnp.concatenate([cont, self.config.sigma_min - sig])

    def ineq_label(self, i: int) -> str:
        if i < self.n_cont:
            return f"containment(segment {self.cont_seg[i] + 1}, point {self.cont_pt[i]})"
        j = i - self.n_cont
        return f"sigma_min(segment {j // (2 * DEGREE + 1) + 1}, coefficient {j % (2 * DEGREE + 1)})"

    def problem(self) -> NlpProblem:
        def objective(y):
            f, g = self._obj(jnp.asarray(y))
            return float(f), np.asarray(g)

        def eq(y):
            y = jnp.asarray(y)
            return np.asarray(self._eq(y)), np.asarray(self._eq_jac(y))

        def ineq(y):
            y = jnp.asarray(y)
            return np.asarray(self._ineq(y)), np.asarray(self._ineq_jac(y))

        return NlpProblem(
            n=self.free_idx.size,
            objective=objective,
            eq=eq,
            ineq=ineq,
            eq_labels=lambda i: f"endpoint[{'xyz'[i]}]",
            ineq_labels=self.ineq_label,
        )


def optimize_spline(corridor: Corridor, criterion: str = "arc_length",
                    config: SplineConfig | None = None):
    """Minimize ``criterion`` over C3 PH splines whose control points stay in the corridor.

    Returns
    -------
    spline : PHSpline
    free : ndarray
        Public free-coefficient vector of the result.
    report : SolveReport
        Backend report; ``report.objective`` is the criterion value.

    Raises
    ------
    SplineOptimizationError
        The solver stopped with a constraint violation above 1e-6.
    RegularityError
        The result has a non-positive parametric speed coefficient.
    """
    if criterion not in CRITERIA:
        raise ValueError(f"criterion must be one of {CRITERIA}, got {criterion!r}")
    config = config or SplineConfig()
    stage = _Stage1(corridor, config, criterion)
    problem = stage.problem()
    y, report = minimize(problem, stage.y0(), config.nlp)
    log.info("stage 1 (%s): %s, objective %.6g, violation %.2e", criterion, report.status,
             report.objective, report.violation)
    if not report.violation <= 1e-6:
        raise SplineOptimizationError(
            f"stage 1 infeasible ({report.status}); worst constraint {report.worst_constraint}",
            report=report,
            constraint=report.worst_constraint,
        )
    tuples = np.asarray(stage.tuples(jnp.asarray(y)))
    spline = _segments(tuples, corridor.start)
    free = free_from_tuples(tuples, corridor.goal_frame is not None)
    return spline, free, report


def initial_spline(corridor: Corridor, config: SplineConfig | None = None) -> PHSpline:
    """Spline of the (jittered) initial guess used by :func:`optimize_spline`."""
    config = config or SplineConfig()
    stage = _Stage1(corridor, config, "arc_length")
    return _segments(np.asarray(stage.tuples(jnp.asarray(stage.y0()))), corridor.start)


__all__ = [
    "CRITERIA",
    "SplineConfig",
    "SolveReport",
    "assemble_spline",
    "assemble_tuples",
    "bspline_to_bernstein",
    "coefficient_ledger",
    "continuity_tuples",
    "free_from_tuples",
    "free_length",
    "initial_spline",
    "optimize_spline",
    "spline_control_points",
]

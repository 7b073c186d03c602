"""Stage 2: minimum-time motion along a fixed PH spline by multiple shooting.

The path parameter ``xi in [0, m]`` is split into ``N`` uniform sections per
segment. Decision variables are the node states ``X_k``, node times ``t_k``
and one input ``U_k`` per section. Two shooting schemes are available:

``time_scaled`` (default)
    Each section is integrated in time over ``t_{k+1} - t_k`` on the
    augmented state ``(x, xi)``, where ``xi`` follows the spatial rate. The
    defects demand ``x -> X_{k+1}`` and ``xi -> xi_{k+1}``. This is the
    same fixed-xi-grid problem, but it stays well defined when the vehicle
    is at rest (``xi_dot = 0``), e.g. at a rest-to-rest boundary.
``spatial``
    Each section is integrated over ``xi`` with ``dx/dxi = f / xi_dot`` and
    ``dt/dxi = 1 / xi_dot``; the defects demand ``x -> X_{k+1}`` and
    ``t -> t_{k+1}``. Requires ``xi_dot > 0`` everywhere, including the
    initial state.

Both use RK4 with a fixed number of substeps and minimize ``t_K``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import jax
import jax.numpy as jnp
import numpy as np
import scipy.sparse as sp

from . import kernels
from .corridor import Corridor
from .errors import ForwardProgressError, SetupError, SolverError
from .models import DynamicsModel
from .nlp import NlpOptions, NlpProblem, SolveReport, minimize
from .spatial import roundtrip_check
from .spline import PHSpline

log = logging.getLogger(__name__)

MODES = ("time_scaled", "spatial")


@dataclass(frozen=True)
class TranscriptionConfig:
    """Stage-2 discretization and solver settings.

    Parameters
    ----------
    nodes_per_segment
        Sections per spline segment (``N``); the grid has ``m N + 1`` nodes.
    xidot_min
        Floor on the path-parameter rate at interior nodes.
    substeps
        RK4 steps per section.
    terminal_tol
        Half-width of the terminal position box (m).
    v_guess
        Cruise speed of the initial guess (m/s).
    ramp_fraction
        Share of the path over which the initial guess accelerates from the
        initial speed to ``v_guess``.
    denom_min
        Floor on the spatial-rate denominator at nodes (tube condition).
    mode
        ``"time_scaled"`` or ``"spatial"``, see the module docstring.
    """

    nodes_per_segment: int = 25
    xidot_min: float = 1e-3
    substeps: int = 4
    terminal_tol: float = 1e-4
    v_guess: float = 1.0
    ramp_fraction: float = 0.2
    denom_min: float = 1e-6
    mode: str = "time_scaled"
    nlp: NlpOptions = field(
        default_factory=lambda: NlpOptions(max_outer=60, max_inner=200, inner="gauss_newton",
                                           tol_opt=1e-4)
    )

    def __post_init__(self):
        if self.nodes_per_segment < 2:
            raise ValueError("nodes_per_segment must be at least 2")
        if self.substeps < 1:
            raise ValueError("substeps must be at least 1")
        for name in ("xidot_min", "terminal_tol", "v_guess", "denom_min"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.ramp_fraction <= 1.0:
            raise ValueError("ramp_fraction must be in (0, 1]")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["nlp"] = asdict(self.nlp)
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> TranscriptionConfig:
        doc = dict(doc)
        nlp = NlpOptions(**doc.pop("nlp", {}))
        return cls(nlp=nlp, **doc)


# -- geometry kernels -----------------------------------------------------------


def _rate(model, x, tuples, points, s):
    """``(xi_dot, denominator, e1 . (h(x) - gamma))`` at local parameter ``s``."""
    sig, R, chi = kernels.frame_at(tuples, s)
    d = model.h(x) - kernels.position_at(points, s)
    w1 = R[:, 1] @ d
    w2 = R[:, 2] @ d
    den = sig - chi[2] * w1 + chi[1] * w2
    return R[:, 0] @ model.velocity(x) / den, den, R[:, 0] @ d


def _rk4(fun, y, s, h, steps, post):
    """``steps`` RK4 steps of ``y' = fun(y, s)`` from ``s`` with step ``h``."""

    def body(_, carry):
        y, s = carry
        k1 = fun(y, s)
        k2 = fun(y + 0.5 * h * k1, s + 0.5 * h)
        k3 = fun(y + 0.5 * h * k2, s + 0.5 * h)
        k4 = fun(y + h * k3, s + h)
        return post(y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)), s + h

    return jax.lax.fori_loop(0, steps, body, (y, s))[0]


@lru_cache(maxsize=32)
def _core_kernel(model: DynamicsModel, mode: str, substeps: int, N: int):
    """Jitted evaluation of all defects and node quantities with their Jacobians.

    Cached per model instance and discretization so that repeated solves
    (other splines, same shapes) reuse the compiled code.
    """
    nx = model.n_x
    dxi = 1.0 / N

    def post(y):
        return jnp.concatenate([model.normalize(y[:nx]), y[nx:]])

    if mode == "time_scaled":
        def interval(xk, tk, uk, xk1, tk1, T, P, s0):
            def rhs(y, _):
                xd, _, _ = _rate(model, y[:nx], T, P, y[nx])
                return jnp.concatenate([model.f(y[:nx], uk), xd[None]])

            y = _rk4(rhs, jnp.concatenate([xk, s0[None]]), 0.0, (tk1 - tk) / substeps,
                     substeps, post)
            # progress defect measured in sections, so that stopping
            # (zero progress) costs a unit defect per interval
            return jnp.concatenate([y[:nx] - xk1, ((y[nx] - s0) / dxi - 1.0)[None]])
    else:
        def interval(xk, tk, uk, xk1, tk1, T, P, s0):
            def rhs(y, s):
                xd, _, _ = _rate(model, y[:nx], T, P, s)
                return jnp.concatenate([model.f(y[:nx], uk), jnp.ones(1)]) / xd

            y = _rk4(rhs, jnp.concatenate([xk, tk[None]]), s0, dxi / substeps, substeps, post)
            return jnp.concatenate([y[:nx] - xk1, (y[nx] - tk1)[None]])

    def node(x, u, T, P, s):
        xd, den, _ = _rate(model, x, T, P, s)
        return jnp.concatenate([model.h(x), xd[None], den[None],
                                jnp.atleast_1d(model.path_constraints(x, u))])

    @jax.jit
    def core(X, t, U, Ti, Pi, s0, Tn, Pn, sn):
        args = (X[:-1], t[:-1], U, X[1:], t[1:], Ti, Pi, s0)
        D = jax.vmap(interval)(*args)
        JD = jax.vmap(jax.jacfwd(interval, argnums=(0, 1, 2, 3, 4)))(*args)
        Un = jnp.concatenate([U, U[-1:]])
        Q = jax.vmap(node)(X, Un, Tn, Pn, sn)
        JQx, JQu = jax.vmap(jax.jacfwd(node, argnums=(0, 1)))(X, Un, Tn, Pn, sn)
        JD = jnp.concatenate([JD[0], JD[1][..., None], JD[2], JD[3], JD[4][..., None]], axis=2)
        return D, JD, Q, JQx, JQu

    return core


# -- trajectory container -------------------------------------------------------


@dataclass
class SpatialTrajectory:
    """Solution of the stage-2 problem on the ``xi`` grid."""

    xi_grid: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    times: np.ndarray
    state_names: tuple
    input_names: tuple
    report: SolveReport | None = None
    meta: dict = field(default_factory=dict)

    @property
    def total_time(self) -> float:
        return float(self.times[-1])

    @property
    def nodes(self) -> int:
        return len(self.xi_grid)

    def table(self) -> np.ndarray:
        """Rows ``xi, t, x..., u...`` with the last input repeated on the closing node."""
        u = np.vstack([self.inputs, self.inputs[-1:]])
        return np.column_stack([self.xi_grid, self.times, self.states, u])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["xi", "t", *self.state_names, *self.input_names])
        for row in self.table():
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def sidecar(self) -> dict:
        doc = {"total_time": self.total_time, "nodes": self.nodes}
        if self.report is not None:
            doc["report"] = self.report.to_dict()
        doc.update(self.meta)
        return doc

    def save(self, csv_path) -> Path:
        """Write the CSV and a JSON sidecar next to it; returns the sidecar path."""
        csv_path = Path(csv_path)
        csv_path.write_text(self.to_csv())
        side = csv_path.with_suffix(".json")
        side.write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n")
        return side


def load_trajectory(csv_path, n_x: int) -> SpatialTrajectory:
    """Read a trajectory CSV written by :meth:`SpatialTrajectory.save`."""
    text = Path(csv_path).read_text().splitlines()
    header = next(csv.reader(text[:1]))
    data = np.array([[float(v) for v in row] for row in csv.reader(text[1:])], float)
    if data.ndim != 2 or data.shape[1] != len(header) or data.shape[1] < 2 + n_x:
        raise ValueError(f"{csv_path}: malformed trajectory table")
    meta = {}
    side = Path(csv_path).with_suffix(".json")
    if side.exists():
        meta = json.loads(side.read_text())
    return SpatialTrajectory(
        xi_grid=data[:, 0],
        states=data[:, 2 : 2 + n_x],
        inputs=data[:-1, 2 + n_x :],
        times=data[:, 1],
        state_names=tuple(header[2 : 2 + n_x]),
        input_names=tuple(header[2 + n_x :]),
        meta=meta,
    )


# -- transcription --------------------------------------------------------------


class Transcription:
    """Multiple-shooting NLP of the spatial minimum-time problem.

    Use :func:`transcribe` to build one. ``problem`` is the
    :class:`~sctomp.nlp.NlpProblem`; the decision vector is
    ``[X (K+1, n_x), t (K+1), U (K, n_u)]`` flattened in that order.
    """

    def __init__(self, model: DynamicsModel, spline: PHSpline, corridor: Corridor, x0, yf,
                 config: TranscriptionConfig, terminal_mask=None, xf=None):
        self.model = model
        self.spline = spline
        self.corridor = corridor
        self.config = config
        nx, nu = model.n_x, model.n_u
        self.nx, self.nu = nx, nu
        m = spline.m
        if corridor.m != m:
            raise SetupError(f"spline has {m} segments but the corridor has {corridor.m} regions")
        N = config.nodes_per_segment
        self.N = N
        self.K = K = m * N
        self.xi_grid = np.arange(K + 1) / N
        self.x0 = np.asarray(x0, float).reshape(-1)
        self.yf = np.asarray(corridor.goal if yf is None else yf, float).reshape(3)
        self.terminal_mask = (np.zeros(nx, bool) if terminal_mask is None
                              else np.asarray(terminal_mask, bool).reshape(nx))
        self.xf = self.x0.copy() if xf is None else np.asarray(xf, float).reshape(nx)

        self.node_seg = np.minimum(np.arange(K + 1) // N, m - 1)
        self.node_s = self.xi_grid - self.node_seg
        self.int_seg = np.arange(K) // N
        self.int_s0 = (np.arange(K) % N) / N

        T = np.asarray(spline.tuples)
        P = np.stack(spline.control_points())
        self._T, self._P = T, P
        self._check_setup()

        self.off_t = (K + 1) * nx
        self.off_u = self.off_t + K + 1
        self.n = self.off_u + K * nu
        self._build_patterns()
        self._cache_key = None
        self._cache = None
        self.problem = self._make_problem()

    # layout helpers
    def ix(self, k):
        return k * self.nx + np.arange(self.nx)

    def it(self, k):
        return self.off_t + k

    def iu(self, k):
        return self.off_u + k * self.nu + np.arange(self.nu)

    def unpack(self, z):
        z = np.asarray(z, float)
        X = z[: self.off_t].reshape(self.K + 1, self.nx)
        t = z[self.off_t : self.off_u]
        U = z[self.off_u :].reshape(self.K, self.nu)
        return X, t, U

    def pack(self, X, t, U):
        return np.concatenate([np.ravel(X), np.ravel(t), np.ravel(U)])

    def regions_of_node(self, k: int) -> list[int]:
        """0-based region indices a node must satisfy (both neighbours at a join)."""
        j = int(self.node_seg[k])
        if k % self.N == 0 and 0 < k < self.K:
            return [j - 1, j]
        return [j]

    # -- setup checks ------------------------------------------------------------

    def _node_quantities_np(self, x, k):
        seg, s = int(self.node_seg[k]), float(self.node_s[k])
        return [float(v) for v in _rate(self.model, jnp.asarray(x), jnp.asarray(self._T[seg]),
                                         jnp.asarray(self._P[seg]), s)]

    def _check_setup(self):
        model, cfg = self.model, self.config
        if self.x0.size != self.nx:
            raise SetupError(f"x0 has {self.x0.size} entries, model needs {self.nx}")
        lb, ub = model.state_bounds()
        if np.any(self.x0 < lb - 1e-9) or np.any(self.x0 > ub + 1e-9):
            raise SetupError("x0 violates the state bounds")
        p0 = np.asarray(model.h(self.x0))
        if self.corridor.regions[0].violation(p0) > 1e-9:
            raise SetupError("initial position lies outside region 1")
        if np.any(np.abs(self.yf - self.corridor.goal) > cfg.terminal_tol):
            raise SetupError("terminal position does not match the corridor goal")
        if np.any(np.abs(self.spline.end - self.yf) > cfg.terminal_tol):
            raise SetupError("spline does not end at the terminal position")
        xd, den, along = self._node_quantities_np(self.x0, 0)
        if abs(along) > 1e-6:
            raise SetupError("initial position is not abeam the start of the spline")
        if den <= cfg.denom_min:
            raise SetupError("initial position lies outside the tube of the spline")
        if cfg.mode == "spatial" and xd <= cfg.xidot_min:
            raise SetupError("spatial shooting needs a positive initial path rate")
        if np.any(self.terminal_mask & ((self.xf < lb - 1e-9) | (self.xf > ub + 1e-9))):
            raise SetupError("terminal state violates the state bounds")

    # -- evaluation ----------------------------------------------------------------

    def _core(self, z):
        K, nx, nu = self.K, self.nx, self.nu
        core = _core_kernel(self.model, self.config.mode, self.config.substeps, self.N)
        return core(
            z[: self.off_t].reshape(K + 1, nx),
            z[self.off_t : self.off_u],
            z[self.off_u :].reshape(K, nu),
            self._T[self.int_seg], self._P[self.int_seg], self.int_s0,
            self._T[self.node_seg], self._P[self.node_seg], self.node_s,
        )

    def evaluate(self, z):
        key = np.asarray(z, float).tobytes()
        if key != self._cache_key:
            out = self._core(np.asarray(z, float))
            self._cache = tuple(np.asarray(a) for a in out)
            self._cache_key = key
        return self._cache

    def _build_patterns(self):
        K, nx = self.K, self.nx
        cfg = self.config
        # defect Jacobian: interval block columns [x_k, t_k, u_k, x_k+1, t_k+1]
        cols = np.stack([
            np.concatenate([self.ix(k), [self.it(k)], self.iu(k), self.ix(k + 1), [self.it(k + 1)]])
            for k in range(K)
        ])
        nd = nx + 1
        self.d_rows = np.repeat(np.arange(K * nd).reshape(K, nd, 1), cols.shape[1], axis=2).ravel()
        self.d_cols = np.repeat(cols[:, None, :], nd, axis=1).ravel()

        # node inequality rows
        reg_node, reg_a, reg_b, reg_id = [], [], [], []
        for k in range(1, K + 1):
            for j in self.regions_of_node(k):
                r = self.corridor.regions[j]
                reg_node += [k] * len(r.b)
                reg_a.append(r.A)
                reg_b.append(r.b)
                reg_id += [(j, i) for i in range(len(r.b))]
        self.reg_node = np.array(reg_node)
        self.reg_a = np.vstack(reg_a)
        self.reg_b = np.concatenate(reg_b)
        self.reg_id = reg_id
        if cfg.mode == "time_scaled":
            self.floor_nodes = np.arange(1, K)
        else:
            self.floor_nodes = np.arange(1, K + 1)
        self.den_nodes = np.arange(1, K + 1)
        self.nc = len(self.model.path_constraint_names)
        self.path_nodes = np.arange(K + 1)
        self.order_rows = K if cfg.mode == "time_scaled" else 0

        labels = []
        labels += [f"region {j + 1} row {i} at node {k}" for k, (j, i) in zip(reg_node, reg_id)]
        labels += [f"xidot_min at node {k}" for k in self.floor_nodes]
        labels += [f"tube at node {k}" for k in self.den_nodes]
        labels += [f"{name} at node {k}" for k in self.path_nodes
                   for name in self.model.path_constraint_names]
        labels += [f"time order at node {k + 1}" for k in range(self.order_rows)]
        labels += [f"terminal {s}{a}" for s in "+-" for a in "xyz"]
        self.ineq_label_list = labels
        self.ineq_node = np.concatenate([
            self.reg_node, self.floor_nodes, self.den_nodes,
            np.repeat(self.path_nodes, self.nc), np.arange(1, self.order_rows + 1),
            np.full(6, K),
        ]).astype(int)

        # sparse pattern of the inequality Jacobian, matching _ineq's data order
        rows, colsl = [], []
        r0 = 0

        def block(node_list, width_cols):
            nonlocal r0
            for k in node_list:
                c = width_cols(k)
                rows.append(np.full(c.size, r0))
                colsl.append(c)
                r0 += 1

        block(self.reg_node, self.ix)
        block(self.floor_nodes, self.ix)
        block(self.den_nodes, self.ix)
        for k in self.path_nodes:
            for _ in range(self.nc):
                c = np.concatenate([self.ix(k), self.iu(min(k, K - 1))])
                rows.append(np.full(c.size, r0))
                colsl.append(c)
                r0 += 1
        for k in range(self.order_rows):
            rows.append(np.full(2, r0))
            colsl.append(np.array([self.it(k), self.it(k + 1)]))
            r0 += 1
        for _ in range(6):
            rows.append(np.full(nx, r0))
            colsl.append(self.ix(K))
            r0 += 1
        self.i_rows = np.concatenate(rows)
        self.i_cols = np.concatenate(colsl)
        self.n_ineq = r0

    def _eq(self, z):
        D, JD, _, _, _ = self.evaluate(z)
        J = sp.csr_matrix((JD.ravel(), (self.d_rows, self.d_cols)), shape=(D.size, self.n))
        return D.ravel(), J

    def _ineq(self, z):
        _, _, Q, JQx, JQu = self.evaluate(z)
        cfg, K, nc = self.config, self.K, self.nc
        pos = Q[:, 0:3]
        vals = [
            np.sum(self.reg_a * pos[self.reg_node], axis=1) - self.reg_b,
            cfg.xidot_min - Q[self.floor_nodes, 3],
            cfg.denom_min - Q[self.den_nodes, 4],
            Q[:, 5 : 5 + nc].ravel(),
        ]
        data = [
            np.einsum("ri,rij->rj", self.reg_a, JQx[self.reg_node, 0:3, :]).ravel(),
            -JQx[self.floor_nodes, 3, :].ravel(),
            -JQx[self.den_nodes, 4, :].ravel(),
            np.concatenate([JQx[:, 5 : 5 + nc, :], JQu[:, 5 : 5 + nc, :]], axis=2).ravel(),
        ]
        if self.order_rows:
            t = np.asarray(z, float)[self.off_t : self.off_u]
            vals.append(t[:-1] - t[1:])
            data.append(np.tile([1.0, -1.0], self.order_rows))
        e = pos[K] - self.yf
        vals.append(np.concatenate([e - cfg.terminal_tol, -e - cfg.terminal_tol]))
        data.append(np.concatenate([JQx[K, 0:3, :], -JQx[K, 0:3, :]]).ravel())
        J = sp.csr_matrix((np.concatenate(data), (self.i_rows, self.i_cols)),
                          shape=(self.n_ineq, self.n))
        return np.concatenate(vals), J

    def bounds(self):
        lbx, ubx = self.model.state_bounds()
        lbu, ubu = self.model.input_bounds()
        K = self.K
        lb = np.concatenate([np.tile(lbx, K + 1), np.zeros(K + 1), np.tile(lbu, K)])
        ub = np.concatenate([np.tile(ubx, K + 1), np.full(K + 1, np.inf), np.tile(ubu, K)])
        lb[self.ix(0)] = ub[self.ix(0)] = self.x0
        lb[self.it(0)] = ub[self.it(0)] = 0.0
        fixed = self.ix(K)[self.terminal_mask]
        lb[fixed] = ub[fixed] = self.xf[self.terminal_mask]
        return lb, ub

    def _make_problem(self) -> NlpProblem:
        lb, ub = self.bounds()
        grad = np.zeros(self.n)
        grad[self.it(self.K)] = 1.0
        names = self.model.state_names + ("xi" if self.config.mode == "time_scaled" else "t",)
        nd = self.nx + 1

        def objective(z):
            return float(z[self.it(self.K)]), grad

        return NlpProblem(
            n=self.n,
            objective=objective,
            eq=self._eq,
            ineq=self._ineq,
            lb=lb,
            ub=ub,
            eq_labels=lambda i: f"defect {names[i % nd]} on interval {i // nd}",
            ineq_labels=lambda i: self.ineq_label_list[i],
        )

    # -- initial guess -------------------------------------------------------------

    def initial_guess(self) -> np.ndarray:
        """Nodes on the spline with a speed ramp up to ``v_guess``, inputs at trim.

        The speed grows as ``v^2 = v0^2 + (v_guess^2 - v0^2) min(1, d / d_ramp)``
        (constant acceleration) from the initial speed along the tangent, so a
        start from rest gets sections long enough to move in.
        """
        model, cfg = self.model, self.config
        try:
            x_trim, u_trim = model.trim()
        except NotImplementedError:
            log.warning("model %s has no trim; seeding zeros", model.name)
            x_trim, u_trim = np.zeros(self.nx), np.zeros(self.nu)
        nodes, weights = kernels.gauss_legendre(8)
        dist = np.zeros(self.K + 1)
        for k in range(self.K):
            seg = self.spline.segments[self.int_seg[k]]
            s = self.int_s0[k] + nodes / self.N
            dist[k + 1] = dist[k] + weights @ seg.sigma(s) / self.N
        v0 = float(np.asarray(model.velocity(self.x0)) @ self.spline.frame(0.0).e1)
        v0 = min(max(v0, 0.0), cfg.v_guess)
        ramp = np.minimum(1.0, dist / (cfg.ramp_fraction * dist[-1]))
        speed = np.sqrt(v0**2 + (cfg.v_guess**2 - v0**2) * ramp)
        X = np.zeros((self.K + 1, self.nx))
        for k, xi in enumerate(self.xi_grid):
            fr = self.spline.frame(float(xi))
            X[k] = model.seed_state(fr.position, speed[k] * fr.e1, x_trim)
        X[0] = self.x0
        X[-1, self.terminal_mask] = self.xf[self.terminal_mask]
        t = np.concatenate([[0.0], np.cumsum(2.0 * np.diff(dist) / (speed[1:] + speed[:-1]))])
        U = np.tile(u_trim, (self.K, 1))
        lb, ub = self.problem.lb, self.problem.ub
        return np.clip(self.pack(X, t, U), lb, ub)

    # -- diagnostics ---------------------------------------------------------------

    def node_rates(self, z) -> np.ndarray:
        _, _, Q, _, _ = self.evaluate(z)
        return Q[:, 3].copy()

    def stalled_node(self, z) -> int | None:
        """First of two consecutive interior nodes whose path rate sits on its floor."""
        xd = self.node_rates(z)
        floor = self.config.xidot_min * (1.0 + 1e-3) + 1e-9
        low = xd[1:-1] <= floor
        for k in range(low.size - 1):
            if low[k] and low[k + 1]:
                return k + 1
        return None

    def worst_node(self, z) -> tuple[int | None, str | None]:
        c, _ = self._eq(z)
        d, _ = self._ineq(z)
        vc = np.abs(c).max() if c.size else 0.0
        vd = d.max() if d.size else 0.0
        if vc >= vd and c.size:
            i = int(np.argmax(np.abs(c)))
            return i // (self.nx + 1), self.problem.eq_labels(i)
        if d.size:
            i = int(np.argmax(d))
            return int(self.ineq_node[i]), self.ineq_label_list[i]
        return None, None

    def trajectory(self, z, report=None) -> SpatialTrajectory:
        X, t, U = self.unpack(z)
        return SpatialTrajectory(
            xi_grid=self.xi_grid.copy(),
            states=X.copy(),
            inputs=U.copy(),
            times=t.copy(),
            state_names=self.model.state_names,
            input_names=self.model.input_names,
            report=report,
            meta={"config": self.config.to_dict(), "model": self.model.name},
        )


def transcribe(model: DynamicsModel, spline: PHSpline, corridor: Corridor, x0, yf=None,
               config: TranscriptionConfig | None = None, terminal_mask=None,
               xf=None) -> Transcription:
    """Build the stage-2 NLP; raises SetupError on inconsistent boundary data."""
    return Transcription(model, spline, corridor, x0, yf, config or TranscriptionConfig(),
                         terminal_mask, xf)


def initial_guess(model, spline, corridor, x0, config=None, **kwargs) -> np.ndarray:
    return transcribe(model, spline, corridor, x0, None, config, **kwargs).initial_guess()


def verify_trajectory(traj: SpatialTrajectory, model: DynamicsModel, spline: PHSpline,
                      corridor: Corridor, yf=None, tol: float = 1e-6,
                      terminal_tol: float = 1e-4, roundtrip_tol: float = 1e-3,
                      projection_tol: float = 1e-3) -> list[str]:
    """All violated trajectory invariants as readable strings (empty when valid)."""
    fails = []
    xi, X, U, t = traj.xi_grid, traj.states, traj.inputs, traj.times
    K = len(xi) - 1
    m = spline.m
    if X.shape != (K + 1, model.n_x) or U.shape != (K, model.n_u) or t.shape != (K + 1,):
        return [f"array shapes do not match model {model.name}"]
    if K < 1 or K % m or corridor.m != m:
        return [f"grid of {K} sections does not fit {m} segments / {corridor.m} regions"]
    N = K // m
    if np.max(np.abs(xi - np.arange(K + 1) / N)) > 1e-12:
        fails.append("xi grid is not uniform on [0, m]")
    if abs(t[0]) > 1e-12:
        fails.append(f"times[0] = {t[0]:.3e}, expected 0")
    bad = np.flatnonzero(np.diff(t) <= 0.0)
    if bad.size:
        fails.append(f"time does not increase at node {bad[0] + 1}")

    lbx, ubx = model.state_bounds()
    lbu, ubu = model.input_bounds()
    for k in range(K + 1):
        p = np.asarray(model.h(X[k]))
        seg = min(k // N, m - 1)
        regs = [seg - 1, seg] if (k % N == 0 and 0 < k < K) else [seg]
        for j in regs:
            v = corridor.regions[j].violation(p)
            if v > tol:
                fails.append(f"node {k}: outside region {j + 1} by {v:.3e}")
        over = np.maximum(X[k] - ubx, lbx - X[k])
        if np.any(over > tol):
            i = int(np.argmax(over))
            fails.append(f"node {k}: state {model.state_names[i]} out of bounds by {over[i]:.3e}")
        u = U[min(k, K - 1)]
        if k < K:
            over = np.maximum(u - ubu, lbu - u)
            if np.any(over > tol):
                i = int(np.argmax(over))
                fails.append(f"node {k}: input {model.input_names[i]} out of bounds by {over[i]:.3e}")
        c = np.atleast_1d(np.asarray(model.path_constraints(X[k], u)))
        if c.size and c.max() > tol:
            i = int(np.argmax(c))
            fails.append(f"node {k}: {model.path_constraint_names[i]} violated by {c[i]:.3e}")
        fr = spline.frame(float(xi[k]))
        along = float(fr.e1 @ (p - fr.position))
        if abs(along) > projection_tol:
            fails.append(f"node {k}: position is {along:.3e} off its path parameter")
    yf = corridor.goal if yf is None else np.asarray(yf, float)
    e = np.abs(np.asarray(model.h(X[-1])) - yf)
    if np.any(e > terminal_tol + tol):
        fails.append(f"node {K}: terminal position misses the goal by {e.max():.3e}")
    dev = roundtrip_check(model, spline, xi, X, U, times=t)
    if not dev <= roundtrip_tol:
        fails.append(f"time-domain re-simulation deviates by {dev:.3e}")
    return fails


def solve_min_time(model: DynamicsModel, spline: PHSpline, corridor: Corridor, x0, yf=None,
                   config: TranscriptionConfig | None = None, terminal_mask=None,
                   xf=None, z_init=None) -> SpatialTrajectory:
    """Minimum-time trajectory along ``spline``.

    Raises
    ------
    SetupError
        Inconsistent boundary data.
    ForwardProgressError
        The solve failed with the path rate pinned at its floor.
    SolverError
        Any other solver failure or a failed post-hoc check; carries the
        node and worst constraint.
    """
    tr = transcribe(model, spline, corridor, x0, yf, config, terminal_mask, xf)
    z0 = tr.initial_guess() if z_init is None else np.asarray(z_init, float)
    z, report = minimize(tr.problem, z0, tr.config.nlp)
    log.info("stage 2: %s after %d outer / %d inner iterations, T=%.6g, violation %.2e",
             report.status, report.iterations, report.inner_iterations, report.objective,
             report.violation)
    if not report.converged:
        node = tr.stalled_node(z)
        if node is not None and report.violation > tr.config.nlp.tol_feas:
            raise ForwardProgressError(
                f"stage 2 {report.status}: path rate pinned at its floor from node {node}",
                node=node,
            )
        node, label = tr.worst_node(z)
        raise SolverError(
            f"stage 2 {report.status}: worst constraint {report.worst_constraint}",
            report=report, node=node, constraint=label,
        )
    traj = tr.trajectory(z, report)
    fails = verify_trajectory(traj, model, spline, corridor, tr.yf,
                              terminal_tol=tr.config.terminal_tol)
    if fails:
        raise SolverError("post-hoc verification failed: " + "; ".join(fails[:5]),
                          report=report, constraint=fails[0])
    return traj


def plot_data(traj: SpatialTrajectory, model: DynamicsModel, spline: PHSpline) -> dict:
    """Per-node series for external plotting."""
    pos = np.array([np.asarray(model.h(x)) for x in traj.states])
    vel = np.array([np.asarray(model.velocity(x)) for x in traj.states])
    rates = []
    for xi, p, v in zip(traj.xi_grid, pos, vel):
        fr = spline.frame(float(xi))
        d = p - fr.position
        den = fr.sigma - fr.chi[2] * (fr.e2 @ d) + fr.chi[1] * (fr.e3 @ d)
        rates.append(float(fr.e1 @ v / den))
    u = np.vstack([traj.inputs, traj.inputs[-1:]])
    return {
        "xi": traj.xi_grid.tolist(),
        "t": traj.times.tolist(),
        "position": pos.tolist(),
        "speed": np.linalg.norm(vel, axis=1).tolist(),
        "inputs": {name: u[:, i].tolist() for i, name in enumerate(traj.input_names)},
        "xidot": rates,
    }


__all__ = [
    "MODES",
    "SpatialTrajectory",
    "Transcription",
    "TranscriptionConfig",
    "initial_guess",
    "load_trajectory",
    "plot_data",
    "solve_min_time",
    "transcribe",
    "verify_trajectory",
]

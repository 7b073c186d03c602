"""Reference dynamic systems for the spatial planner.

Every model exposes ``f(x, u)`` (time derivative), ``h(x)`` (position in
R^3), ``velocity(x)`` (time derivative of ``h`` along ``f``), box bounds on
states and inputs, and extra path constraints ``c(x, u) <= 0``. All
functions are written with ``jax.numpy`` so the transcription can trace and
differentiate them; they accept plain numpy arrays as well.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import jax.numpy as jnp
import numpy as np

log = logging.getLogger(__name__)

GRAVITY = 9.81


class DynamicsModel:
    """Base class; subclasses fill in the dimensions, names and dynamics."""

    name = "model"
    state_names: tuple = ()
    input_names: tuple = ()
    path_constraint_names: tuple = ()

    @property
    def n_x(self) -> int:
        return len(self.state_names)

    @property
    def n_u(self) -> int:
        return len(self.input_names)

    n_y = 3

    def f(self, x, u):
        raise NotImplementedError

    def h(self, x):
        raise NotImplementedError

    def velocity(self, x):
        raise NotImplementedError

    def path_constraints(self, x, u):
        return jnp.zeros(0)

    def state_bounds(self):
        return np.full(self.n_x, -np.inf), np.full(self.n_x, np.inf)

    def input_bounds(self):
        return np.full(self.n_u, -np.inf), np.full(self.n_u, np.inf)

    def normalize(self, x):
        """Project a state back onto its manifold after an integration step."""
        return x

    def trim(self):
        """Equilibrium ``(x, u)``; models without one raise NotImplementedError."""
        raise NotImplementedError

    def seed_state(self, position, velocity, trim_state):
        raise NotImplementedError

    def params(self) -> dict:
        return {}


class DoubleIntegratorModel(DynamicsModel):
    """Point moving along a fixed axis: ``p' = v``, ``v' = a``, ``|a| <= a_max``."""

    name = "double_integrator"
    state_names = ("p", "v")
    input_names = ("a",)

    def __init__(self, a_max=1.0, origin=(0.0, 0.0, 0.0), axis=(1.0, 0.0, 0.0)):
        self.a_max = float(a_max)
        self.origin = np.asarray(origin, float)
        axis = np.asarray(axis, float)
        self.axis = axis / np.linalg.norm(axis)

    def f(self, x, u):
        return jnp.stack([x[1], u[0]])

    def h(self, x):
        return self.origin + x[0] * self.axis

    def velocity(self, x):
        return x[1] * self.axis

    def input_bounds(self):
        return np.array([-self.a_max]), np.array([self.a_max])

    def trim(self):
        return np.zeros(2), np.zeros(1)

    def seed_state(self, position, velocity, trim_state):
        return np.array([
            float(np.dot(np.asarray(position) - self.origin, self.axis)),
            float(np.dot(velocity, self.axis)),
        ])

    def params(self):
        return {"a_max": self.a_max, "origin": self.origin.tolist(), "axis": self.axis.tolist()}


class CarModel(DynamicsModel):
    """Planar bicycle with a first-order drivetrain.

    States ``(p_x, p_y, psi, v, D, delta)``, inputs ``(dD, ddelta)``::

        p_x' = v cos(psi)         p_y' = v sin(psi)
        psi' = v tan(delta) / wheelbase
        v'   = c_m D - c_r v      (zero at rest with zero throttle)
        D'   = dD                 delta' = ddelta

    Longitudinal acceleration ``a_par = v'`` and lateral acceleration
    ``a_perp = v psi'`` are limited through path constraints. The default
    coefficients describe a small-scale car; they are not calibrated to any
    particular vehicle.
    """

    name = "car"
    state_names = ("p_x", "p_y", "psi", "v", "D", "delta")
    input_names = ("dD", "ddelta")
    path_constraint_names = ("a_par_max", "a_par_min", "a_perp_max", "a_perp_min")

    D_BOUNDS = (-1.0, 1.0)
    DELTA_BOUNDS = (-0.4, 0.4)
    DD_BOUNDS = (-10.0, 10.0)
    DDELTA_BOUNDS = (-2.0, 2.0)
    ACC_BOUNDS = (-4.0, 4.0)

    def __init__(self, wheelbase=0.06, c_m=8.0, c_r=1.0):
        self.wheelbase = float(wheelbase)
        self.c_m = float(c_m)
        self.c_r = float(c_r)

    def accelerations(self, x):
        v, D, delta = x[3], x[4], x[5]
        a_par = self.c_m * D - self.c_r * v
        a_perp = v * v * jnp.tan(delta) / self.wheelbase
        return a_par, a_perp

    def f(self, x, u):
        psi, v, delta = x[2], x[3], x[5]
        a_par, _ = self.accelerations(x)
        return jnp.stack([
            v * jnp.cos(psi),
            v * jnp.sin(psi),
            v * jnp.tan(delta) / self.wheelbase,
            a_par,
            u[0],
            u[1],
        ])

    def h(self, x):
        return jnp.stack([x[0], x[1], jnp.zeros_like(x[0])])

    def velocity(self, x):
        return jnp.stack([x[3] * jnp.cos(x[2]), x[3] * jnp.sin(x[2]), jnp.zeros_like(x[0])])

    def path_constraints(self, x, u):
        lo, hi = self.ACC_BOUNDS
        a_par, a_perp = self.accelerations(x)
        return jnp.stack([a_par - hi, lo - a_par, a_perp - hi, lo - a_perp])

    def state_bounds(self):
        lb = np.full(6, -np.inf)
        ub = np.full(6, np.inf)
        lb[4], ub[4] = self.D_BOUNDS
        lb[5], ub[5] = self.DELTA_BOUNDS
        return lb, ub

    def input_bounds(self):
        return (np.array([self.DD_BOUNDS[0], self.DDELTA_BOUNDS[0]]),
                np.array([self.DD_BOUNDS[1], self.DDELTA_BOUNDS[1]]))

    def trim(self):
        return np.zeros(6), np.zeros(2)

    def seed_state(self, position, velocity, trim_state):
        x = np.array(trim_state, float)
        x[0], x[1] = position[0], position[1]
        x[2] = np.arctan2(velocity[1], velocity[0])
        x[3] = np.hypot(velocity[0], velocity[1])
        # throttle that holds the seeded speed
        x[4] = np.clip(self.c_r * x[3] / self.c_m, *self.D_BOUNDS)
        return x

    def params(self):
        return {"wheelbase": self.wheelbase, "c_m": self.c_m, "c_r": self.c_r}


def quat_rotate_z(q):
    """Third column of the rotation matrix of unit quaternion ``q = (w, x, y, z)``."""
    w, x, y, z = q
    return jnp.stack([2 * (x * z + w * y), 2 * (y * z - w * x), w * w - x * x - y * y + z * z])


class QuadrotorModel(DynamicsModel):
    """Rigid quadrotor with collective thrust and body rates as inputs.

    States ``(p, v, q)`` with ``q = (w, x, y, z)`` body-to-world; inputs
    ``(f_c, w_x, w_y, w_z)``::

        p' = v,   v' = R(q) [0, 0, f_c] / mass - [0, 0, g],   q' = q (x) [0, w] / 2
    """

    name = "quadrotor"
    state_names = ("p_x", "p_y", "p_z", "v_x", "v_y", "v_z", "q_w", "q_x", "q_y", "q_z")
    input_names = ("f_c", "w_x", "w_y", "w_z")

    THRUST_BOUNDS = (0.0, 27.52)
    RATE_XY_BOUNDS = (-15.0, 15.0)
    RATE_Z_BOUNDS = (-0.3, 0.3)

    def __init__(self, mass=0.8, gravity=GRAVITY):
        self.mass = float(mass)
        self.gravity = float(gravity)

    def f(self, x, u):
        v = x[3:6]
        q = x[6:10]
        q = q / jnp.sqrt(q @ q)
        acc = quat_rotate_z(q) * (u[0] / self.mass) - jnp.array([0.0, 0.0, self.gravity])
        w, qx, qy, qz = q
        wx, wy, wz = u[1], u[2], u[3]
        dq = 0.5 * jnp.stack([
            -qx * wx - qy * wy - qz * wz,
            w * wx + qy * wz - qz * wy,
            w * wy - qx * wz + qz * wx,
            w * wz + qx * wy - qy * wx,
        ])
        return jnp.concatenate([v, acc, dq])

    def h(self, x):
        return x[0:3]

    def velocity(self, x):
        return x[3:6]

    def input_bounds(self):
        return (np.array([self.THRUST_BOUNDS[0], self.RATE_XY_BOUNDS[0], self.RATE_XY_BOUNDS[0],
                          self.RATE_Z_BOUNDS[0]]),
                np.array([self.THRUST_BOUNDS[1], self.RATE_XY_BOUNDS[1], self.RATE_XY_BOUNDS[1],
                          self.RATE_Z_BOUNDS[1]]))

    def normalize(self, x):
        q = x[6:10]
        return jnp.concatenate([x[:6], q / jnp.sqrt(q @ q)])

    def trim(self):
        x = np.zeros(10)
        x[6] = 1.0
        return x, np.array([self.mass * self.gravity, 0.0, 0.0, 0.0])

    def seed_state(self, position, velocity, trim_state):
        x = np.array(trim_state, float)
        x[0:3] = position
        x[3:6] = velocity
        return x

    def params(self):
        return {"mass": self.mass, "gravity": self.gravity}


MODELS = {
    "double_integrator": DoubleIntegratorModel,
    "car": CarModel,
    "quadrotor": QuadrotorModel,
}


@dataclass
class ModelSetup:
    """Model plus its boundary data, as read from a model config file."""

    model: DynamicsModel
    x0: np.ndarray
    terminal_mask: np.ndarray = field(default=None)
    xf: np.ndarray = field(default=None)

    def __post_init__(self):
        n = self.model.n_x
        self.x0 = np.asarray(self.x0, float).reshape(-1)
        if self.x0.size != n:
            raise ValueError(f"x0 has {self.x0.size} entries, model {self.model.name} needs {n}")
        if self.terminal_mask is None:
            self.terminal_mask = np.zeros(n, bool)
        self.terminal_mask = np.asarray(self.terminal_mask, bool).reshape(-1)
        if self.terminal_mask.size != n:
            raise ValueError(f"terminal_mask needs {n} entries")
        self.xf = self.x0.copy() if self.xf is None else np.asarray(self.xf, float).reshape(-1)
        if self.xf.size != n:
            raise ValueError(f"xf needs {n} entries")

    def to_dict(self) -> dict:
        doc = {"model": self.model.name, "params": self.model.params(), "x0": self.x0.tolist()}
        if self.terminal_mask.any():
            doc["terminal_mask"] = self.terminal_mask.tolist()
            doc["xf"] = self.xf.tolist()
        return doc


def model_from_dict(doc: dict) -> ModelSetup:
    try:
        cls = MODELS[doc["model"]]
    except KeyError:
        raise ValueError(f"unknown or missing model name: {doc.get('model')!r}") from None
    model = cls(**doc.get("params", {}))
    x0 = doc.get("x0")
    if x0 is None:
        x0 = model.trim()[0]
    return ModelSetup(model, x0, doc.get("terminal_mask"), doc.get("xf"))


def load_model(path) -> ModelSetup:
    return model_from_dict(json.loads(Path(path).read_text()))

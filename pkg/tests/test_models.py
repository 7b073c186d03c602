import json
import math

import numpy as np
import pytest

from sctomp.models import (
    CarModel,
    DoubleIntegratorModel,
    ModelSetup,
    QuadrotorModel,
    load_model,
    model_from_dict,
)
from sctomp.spatial import simulate

# limits transcribed from the reference table
CAR_LIMITS = {"D": (-1, 1), "delta": (-0.4, 0.4), "dD": (-10, 10), "ddelta": (-2, 2), "acc": (-4, 4)}
QUAD_LIMITS = {"f_c": (0, 27.52), "w_xy": (-15, 15), "w_z": (-0.3, 0.3)}


def test_car_bounds_match_table():
    m = CarModel()
    lb, ub = m.state_bounds()
    assert (lb[4], ub[4]) == CAR_LIMITS["D"]
    assert (lb[5], ub[5]) == CAR_LIMITS["delta"]
    assert np.all(np.isinf(lb[:4])) and np.all(np.isinf(ub[:4]))
    lbu, ubu = m.input_bounds()
    assert (lbu[0], ubu[0]) == CAR_LIMITS["dD"]
    assert (lbu[1], ubu[1]) == CAR_LIMITS["ddelta"]
    assert m.ACC_BOUNDS == CAR_LIMITS["acc"]
    assert m.state_names == ("p_x", "p_y", "psi", "v", "D", "delta")


def test_quad_bounds_match_table():
    lbu, ubu = QuadrotorModel().input_bounds()
    assert (lbu[0], ubu[0]) == QUAD_LIMITS["f_c"]
    assert (lbu[1], ubu[1]) == (lbu[2], ubu[2]) == QUAD_LIMITS["w_xy"]
    assert (lbu[3], ubu[3]) == QUAD_LIMITS["w_z"]
    assert QuadrotorModel().n_x == 10 and QuadrotorModel().n_u == 4


def test_quad_thrust_to_weight():
    m = QuadrotorModel()
    assert 27.52 / (m.mass * m.gravity) == pytest.approx(3.5, abs=0.05)


def test_car_equilibrium_at_rest():
    m = CarModel()
    np.testing.assert_array_equal(np.asarray(m.f(np.zeros(6), np.zeros(2))), 0.0)


def test_car_straight_no_lateral_acceleration():
    m = CarModel()
    x = np.array([0, 0, 0.3, 2.0, 0.5, 0.0])
    _, a_perp = m.accelerations(x)
    assert float(a_perp) == 0.0


def test_car_yaw_rate():
    m = CarModel(wheelbase=0.06)
    x = np.array([0, 0, 0, 1.0, 0, 0.4])
    assert float(m.f(x, np.zeros(2))[2]) == pytest.approx(math.tan(0.4) / 0.06)


def test_car_path_constraints_are_not_state_bounds():
    m = CarModel()
    x = np.array([0, 0, 0, 3.0, 0, 0.4])  # a_perp far above 4
    c = np.asarray(m.path_constraints(x, np.zeros(2)))
    assert c.shape == (4,)
    assert c[2] > 0
    lb, ub = m.state_bounds()
    assert np.all(x >= lb) and np.all(x <= ub)


def test_car_velocity():
    m = CarModel()
    x = np.array([1, 2, 0.7, 1.3, 0, 0])
    np.testing.assert_allclose(np.asarray(m.velocity(x)), [1.3 * math.cos(0.7), 1.3 * math.sin(0.7), 0])


def test_quad_hover_and_free_fall():
    m = QuadrotorModel()
    x, u = m.trim()
    assert u[0] == pytest.approx(m.mass * 9.81)
    np.testing.assert_allclose(np.asarray(m.f(x, u)), 0.0, atol=1e-14)
    d = np.asarray(m.f(x, np.zeros(4)))
    np.testing.assert_allclose(d[3:6], [0, 0, -9.81])


def test_quad_velocity_is_state():
    m = QuadrotorModel()
    x = np.arange(10.0)
    np.testing.assert_array_equal(np.asarray(m.velocity(x)), x[3:6])


def test_quad_yaw_rotation_preserves_norm():
    # fine RK4 without renormalization keeps |q| = 1 closely
    m = QuadrotorModel()
    x0, u = m.trim()
    u = u.copy()
    u[3] = 0.3
    x = np.array(x0)
    h = 1e-3
    for _ in range(1000):
        k1 = np.asarray(m.f(x, u))
        k2 = np.asarray(m.f(x + h / 2 * k1, u))
        k3 = np.asarray(m.f(x + h / 2 * k2, u))
        k4 = np.asarray(m.f(x + h * k3, u))
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    assert abs(np.linalg.norm(x[6:10]) - 1) <= 1e-9
    # yaw angle after one second at 0.3 rad/s
    assert 2 * math.atan2(x[9], x[6]) == pytest.approx(0.3, rel=1e-9)


def test_quad_tilted_thrust_direction():
    m = QuadrotorModel()
    a = 0.5
    x = np.zeros(10)
    x[6:10] = [math.cos(a / 2), 0, math.sin(a / 2), 0]  # pitch about y
    d = np.asarray(m.f(x, np.array([8.0, 0, 0, 0])))
    np.testing.assert_allclose(d[3:6], [10 * math.sin(a), 0, 10 * math.cos(a) - 9.81], atol=1e-12)


def test_double_integrator():
    m = DoubleIntegratorModel(a_max=4.0, origin=(1, 0, 0), axis=(0, 2, 0))
    np.testing.assert_allclose(np.asarray(m.h(np.array([0.5, 1.0]))), [1, 0.5, 0])
    np.testing.assert_allclose(np.asarray(m.velocity(np.array([0.5, 1.0]))), [0, 1, 0])
    np.testing.assert_allclose(np.asarray(m.f(np.zeros(2), np.array([3.0]))), [0, 3])
    assert m.input_bounds()[1][0] == 4.0


@pytest.mark.parametrize("model", [DoubleIntegratorModel(), CarModel(), QuadrotorModel()])
def test_velocity_finite_difference(model, rng):
    lb, ub = model.input_bounds()
    for _ in range(5):
        x = rng.normal(size=model.n_x)
        if model.name == "quadrotor":
            x[6:10] /= np.linalg.norm(x[6:10])
        if model.name == "car":
            x[4:6] = rng.uniform(-0.3, 0.3, 2)
        u = rng.uniform(np.maximum(lb, -5), np.minimum(ub, 5))
        d = 1e-7
        fd = (np.asarray(model.h(x + d * np.asarray(model.f(x, u)))) - np.asarray(model.h(x))) / d
        np.testing.assert_allclose(np.asarray(model.velocity(x)), fd, atol=1e-5)


def test_seed_state():
    car = CarModel()
    x = car.seed_state([1, 2, 0], [0, 2, 0], car.trim()[0])
    assert x[2] == pytest.approx(math.pi / 2) and x[3] == pytest.approx(2.0)
    # throttle holds the speed
    assert float(car.f(x, np.zeros(2))[3]) == pytest.approx(0.0, abs=1e-12)


def test_model_config_roundtrip(tmp_path):
    doc = {"model": "quadrotor", "params": {"mass": 1.0}, "x0": [0] * 6 + [1, 0, 0, 0]}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(doc))
    s = load_model(path)
    assert isinstance(s.model, QuadrotorModel) and s.model.mass == 1.0
    assert not s.terminal_mask.any()
    s2 = model_from_dict(s.to_dict())
    np.testing.assert_array_equal(s2.x0, s.x0)


def test_model_config_errors():
    with pytest.raises(ValueError):
        model_from_dict({"model": "boat"})
    with pytest.raises(ValueError):
        ModelSetup(CarModel(), np.zeros(3))
    with pytest.raises(ValueError):
        ModelSetup(CarModel(), np.zeros(6), terminal_mask=[True])


def test_simulate_matches_closed_form():
    m = DoubleIntegratorModel()
    out = simulate(m, [0.0, 0.0], [[1.0], [-1.0]], [1.0, 1.0], steps=10)
    np.testing.assert_allclose(out[-1], [1.0, 0.0], atol=1e-12)

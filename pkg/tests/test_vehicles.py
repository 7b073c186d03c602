"""Stage 2 on the car and quadrotor regression fixtures."""

import numpy as np
import pytest

from sctomp.corridor import load_corridor
from sctomp.models import load_model
from sctomp.nlp import check_derivatives
from sctomp.ocp import TranscriptionConfig, solve_min_time, transcribe, verify_trajectory
from sctomp.spatial import roundtrip_check
from sctomp.spline_opt import optimize_spline

from conftest import FIXTURES


def active_share(traj, model, tol=1e-4):
    """Share of intervals with at least one input or path constraint at its bound."""
    lb, ub = model.input_bounds()
    U = traj.inputs
    hit = np.any((np.abs(U - lb) <= tol) | (np.abs(U - ub) <= tol), axis=1)
    if model.path_constraint_names:
        C = np.array([np.asarray(model.path_constraints(x, u))
                      for x, u in zip(traj.states[:-1], U)])
        hit |= np.any(np.abs(C) <= tol, axis=1)
    return float(hit.mean())


@pytest.fixture(scope="module")
def car_case():
    corridor = load_corridor(FIXTURES / "l_planar.json")
    setup = load_model(FIXTURES / "car.json")
    spline = optimize_spline(corridor, "arc_length")[0]
    runs = {N: solve_min_time(setup.model, spline, corridor, setup.x0, None,
                              TranscriptionConfig(nodes_per_segment=N))
            for N in (25, 50)}
    return corridor, setup, spline, runs


@pytest.fixture(scope="module")
def quad_case():
    corridor = load_corridor(FIXTURES / "two_box_3d.json")
    setup = load_model(FIXTURES / "quadrotor.json")
    spline = optimize_spline(corridor, "arc_length")[0]
    return corridor, setup, spline, solve_min_time(setup.model, spline, corridor, setup.x0)


def test_car_transcription_derivatives(car_case):
    corridor, setup, spline, _ = car_case
    tr = transcribe(setup.model, spline, corridor, setup.x0)
    assert check_derivatives(tr.problem, tr.initial_guess()) <= 1e-5


def test_car_solution_is_verified(car_case):
    corridor, setup, spline, runs = car_case
    for traj in runs.values():
        assert traj.report.converged
        assert verify_trajectory(traj, setup.model, spline, corridor) == []
        dev = roundtrip_check(setup.model, spline, traj.xi_grid, traj.states, traj.inputs,
                              times=traj.times)
        assert dev <= 1e-3


def test_car_saturation_witness(car_case):
    _, setup, _, runs = car_case
    assert active_share(runs[25], setup.model) >= 0.5


def test_car_refinement_stability(car_case):
    runs = car_case[3]
    a, b = runs[25].total_time, runs[50].total_time
    assert abs(a - b) / b <= 5e-3, (a, b)


def test_quad_transcription_derivatives(quad_case):
    corridor, setup, spline, _ = quad_case
    tr = transcribe(setup.model, spline, corridor, setup.x0)
    assert check_derivatives(tr.problem, tr.initial_guess()) <= 1e-5


def test_quad_solution_is_verified(quad_case):
    corridor, setup, spline, traj = quad_case
    assert traj.report.converged
    assert verify_trajectory(traj, setup.model, spline, corridor) == []
    assert np.all(np.diff(traj.times) > 0)


def test_quad_thrust_saturates(quad_case):
    _, setup, _, traj = quad_case
    _, ub = setup.model.input_bounds()
    assert np.mean(np.abs(traj.inputs[:, 0] - ub[0]) <= 1e-4) >= 0.5
    assert active_share(traj, setup.model) >= 0.5

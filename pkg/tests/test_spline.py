import numpy as np
import pytest

import jax.numpy as jnp
from scipy.integrate import simpson

from sctomp import kernels
from sctomp.errors import DomainError
from sctomp.ph import PHSegment
from sctomp.spline import PHSpline, load_spline, save_spline, spline_functionals
from sctomp.spline_opt import bspline_to_bernstein, continuity_tuples

from conftest import random_tuples


def random_spline(rng, m, spread=0.6):
    """Random C3 spline built from clamped B-spline control quaternions."""
    P = rng.uniform(-spread, spread, size=(m + 4, 4))
    P[:, 0] += 2.0
    tuples = np.einsum("kij,jc->kic", bspline_to_bernstein(m), P)
    return PHSpline.from_tuples(tuples, rng.normal(size=3))


def straight(m=1):
    return PHSpline.from_tuples(np.tile([1.0, 0, 0, 0], (m, 5, 1)), np.zeros(3))


def fd_rotation(spline, xi, h=1e-5):
    return (spline.frame(xi + h).rotation - spline.frame(xi - h).rotation) / (2 * h)


def test_random_splines_frames(rng):
    # 20 random splines, 100 samples each: orthonormality, tangency, chi vs finite differences
    h = 1e-5
    for i in range(20):
        m = 1 + i % 4
        sp = random_spline(rng, m)
        for xi in np.linspace(h, m - h, 100):
            fr = sp.frame(xi)
            R = fr.rotation
            assert np.max(np.abs(R.T @ R - np.eye(3))) <= 1e-9
            k, s = sp.locate(xi)
            tangent = sp.segments[k].velocity(s)
            assert np.linalg.norm(fr.e1 * fr.sigma - tangent) <= 1e-9 * fr.sigma
            dR = fd_rotation(sp, xi, h)
            omega = R @ fr.chi
            for e, d in zip(R.T, dR.T):
                assert np.max(np.abs(np.cross(omega, e) - d)) <= 1e-5


def test_join_continuity_random(rng):
    for m in (2, 3, 4):
        sp = random_spline(rng, m)
        assert np.max(sp.position_jumps()) <= 1e-9
        assert np.max(sp.quaternion_jumps()) <= 1e-9
        for v in sp.jet_jumps().values():
            assert np.max(v) <= 1e-6


def test_join_jets_two_sided_numeric(rng):
    # one-sided finite differences from both sides of the join
    sp = random_spline(rng, 2)
    h = 1e-4
    left = [sp.segments[0].frame(1 - j * h).sigma for j in range(3)]
    right = [sp.segments[1].frame(j * h).sigma for j in range(3)]
    d_left = (3 * left[0] - 4 * left[1] + left[2]) / (2 * h)
    d_right = (-3 * right[0] + 4 * right[1] - right[2]) / (2 * h)
    assert d_left == pytest.approx(d_right, abs=1e-5)


def test_c3_recurrence_matches_derivatives(rng):
    a = np.array([2.0, 0, 0, 0]) + 0.05 * rng.normal(size=(5, 4))
    b = np.vstack([continuity_tuples(a), random_tuples(rng)[:1]])
    sp = PHSpline.from_tuples(np.stack([a, b]), np.zeros(3))
    assert np.max(sp.quaternion_jumps()) <= 1e-9
    # perturbing an eliminated tuple breaks C3
    b2 = b.copy()
    b2[3] += 1e-3
    sp2 = PHSpline.from_tuples(np.stack([a, b2]), np.zeros(3))
    assert np.max(sp2.quaternion_jumps()) > 1e-6


def test_locate_and_domain():
    sp = straight(3)
    assert sp.locate(0.0) == (0, 0.0)
    assert sp.locate(2.5) == (2, 0.5)
    assert sp.locate(3.0) == (2, 1.0)
    with pytest.raises(DomainError):
        sp.locate(3.1)
    np.testing.assert_allclose(sp.position(2.5), [2.5, 0, 0])


def test_functionals_straight():
    L, E, Et = spline_functionals(straight(2))
    assert L == pytest.approx(2.0)
    assert E == 0.0 and Et == 0.0


def test_functionals_planar_has_no_twist(rng):
    sp = random_spline(rng, 3)
    t = sp.tuples.copy()
    t[..., 1] = t[..., 2] = 0.0
    planar = PHSpline.from_tuples(t, np.zeros(3))
    L, E, Et = spline_functionals(planar)
    assert Et <= 1e-20
    assert E > 0


def test_functionals_against_dense_quadrature(rng):
    sp = random_spline(rng, 2)
    L, E, Et = spline_functionals(sp)
    xs = np.linspace(0, 1, 2001)
    E_ref = Et_ref = L_ref = 0.0
    for seg in sp.segments:
        frames = [seg.frame(x) for x in xs]
        chi = np.array([f.chi for f in frames])
        sig = np.array([f.sigma for f in frames])
        E_ref += simpson(np.sum(chi**2, axis=1), x=xs)
        Et_ref += simpson(chi[:, 0] ** 2, x=xs)
        L_ref += simpson(sig, x=xs)
    assert L == pytest.approx(L_ref, rel=1e-7)
    assert E == pytest.approx(E_ref, rel=1e-6)
    assert Et == pytest.approx(Et_ref, rel=1e-6, abs=1e-12)


def test_save_load_roundtrip(tmp_path, rng):
    sp = random_spline(rng, 3)
    save_spline(sp, tmp_path / "s.json", {"note": 1})
    sp2 = load_spline(tmp_path / "s.json")
    np.testing.assert_array_equal(sp2.tuples, sp.tuples)
    np.testing.assert_array_equal(sp2.end, sp.end)


def test_kernels_match_numpy(rng):
    seg = PHSegment(random_tuples(rng), rng.normal(size=3))
    t = jnp.asarray(seg.z.tuples)
    np.testing.assert_allclose(kernels.sigma_coeffs(t), seg.sigma.coeffs, atol=1e-12)
    np.testing.assert_allclose(kernels.hodograph_coeffs(t), seg.hodograph_coeffs, atol=1e-12)
    pts = kernels.control_points(jnp.asarray(seg.origin), t)
    np.testing.assert_allclose(pts, seg.control_points, atol=1e-12)
    for s in (0.0, 0.21, 0.5, 1.0):
        sigma, R, chi = kernels.frame_at(t, s)
        fr = seg.frame(s)
        assert float(sigma) == pytest.approx(fr.sigma, rel=1e-12)
        np.testing.assert_allclose(R, fr.rotation, atol=1e-12)
        np.testing.assert_allclose(chi, fr.chi, atol=1e-12)
        np.testing.assert_allclose(kernels.position_at(pts, s), fr.position, atol=1e-12)


def test_gauss_legendre_integrates_polynomials():
    x, w = kernels.gauss_legendre(8)
    assert np.sum(w) == pytest.approx(1.0)
    assert np.sum(w * x**15) == pytest.approx(1 / 16)

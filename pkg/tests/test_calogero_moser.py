import numpy as np
import pytest
from types import SimpleNamespace

from fglab import calogero_moser as cm
from fglab.special_functions import Lattice, wp

LAT = Lattice(1.0, 0.1 + 0.9j)
X2 = ([0.45 + 0.1j, -0.45 - 0.05j], [0.05, -0.05 + 0.02j])
X3 = ([0.05j, 0.68 + 0.1j, -0.66 - 0.08j], [0.03, 0.02j, -0.04])
ZS = (0.31 + 0.17j, 0.55 - 0.2j)


@pytest.fixture(scope="module")
def traj3():
    return cm.integrate_cm(cm.CMState(*X3, LAT), 0.6)


def energy(s):
    n = s.n
    pot = sum(wp(s.positions[i] - s.positions[j], LAT) for i in range(n) for j in range(i + 1, n))
    return 0.5 * np.sum(s.velocities**2) - cm.COUPLING * pot


def test_forces_antisymmetric_and_translation_invariant():
    s = cm.CMState(*X3, LAT)
    a = cm.cm_rhs(s)
    assert abs(a.sum()) < 1e-12 * np.abs(a).max()
    shifted = cm.CMState(s.positions + 0.23 - 0.11j, s.velocities, LAT)
    assert np.allclose(cm.cm_rhs(shifted), a, rtol=1e-11)


def test_equal_spacing_is_stationary():
    w = 2 * LAT.omega1
    s = cm.CMState([0.0, w / 3, 2 * w / 3], [0.0, 0.0, 0.0], LAT)
    assert np.abs(cm.cm_rhs(s)).max() < 1e-10


def test_conservation_and_time_reversal(traj3):
    s0, s1 = traj3.state(0.0), traj3.state(0.6)
    assert abs(energy(s1) - energy(s0)) < 1e-9 * max(1.0, abs(energy(s0)))
    assert abs(s1.velocities.sum() - s0.velocities.sum()) < 1e-11
    back = cm.integrate_cm(cm.CMState(s1.positions, -s1.velocities, LAT), 0.6)
    end = back.state(0.6)
    assert np.abs(end.positions - s0.positions).max() < 1e-9
    assert np.abs(end.velocities + s0.velocities).max() < 1e-9


def test_lax_pair_single_particle():
    s = cm.CMState([0.2 + 0.1j], [0.7], LAT)
    z = 0.3 + 0.2j
    assert np.allclose(cm.lax_L(s, z), [[-0.35]])
    assert np.allclose(cm.lax_M(s, z), [[wp(z, LAT)]])


def test_trace_of_L(traj3):
    s = traj3.state(0.3)
    assert abs(np.trace(cm.lax_L(s, ZS[0])) + 0.5 * s.velocities.sum()) < 1e-13


def test_lax_equation_holds(traj3):
    ts = np.linspace(0.05, 0.55, 4)
    for z in ZS:
        assert cm.lax_residual(traj3, z, ts) < 1e-8


def test_frozen_motion_fails_lax_equation(traj3):
    # a constant "trajectory" with nonzero velocities must violate dL/dt = [M, L]
    y = traj3.state(0.3).to_vector()
    frozen = cm.CMTrajectory(SimpleNamespace(sol=lambda t: y), LAT, 3, 0.0, 0.6)
    assert cm.lax_residual(frozen, ZS[0], [0.3]) > 1e-2


def test_spectrum_is_conserved_for_every_z(traj3):
    for z in ZS:
        r0 = cm.spectral_curve(traj3.state(0.0), z)
        r1 = cm.spectral_curve(traj3.state(0.6), z)
        assert np.abs(r1 - r0).max() < 1e-8 * max(1.0, np.abs(r0).max())


def test_prefactor_calibration(traj3):
    cal = cm.calibrate_lax_prefactors(traj3, ZS[:1], np.linspace(0.1, 0.5, 3))
    assert cal["prefactors"] == cm.M_PREFACTORS
    assert cal["candidates"][1]["residual"] > 1e3 * cal["residual"]


def test_branch_limits():
    for x, v in (X2, X3):
        s = cm.CMState(x, v, LAT)
        nu = np.sort(cm.branch_limits(s)["nu"].real)
        n = s.n
        assert np.allclose(nu, sorted([1 - n] + [1] * (n - 1)), atol=1e-6)


def test_pd_single_particle():
    s = cm.CMState([0.1], [0.4 - 0.2j], LAT)
    rep = cm.pd_parametrization_check(s, seed=3)
    assert rep["holdout_residual"] < 1e-10


def test_pd_three_particles():
    rep = cm.pd_parametrization_check(cm.CMState(*X3, LAT), seed=1)
    assert rep["holdout_residual"] < 1e-9
    assert rep["other_orientation_residual"] > 1e-4


def test_collision_detected():
    with pytest.raises(cm.CollisionError):
        cm.cm_rhs(cm.CMState([0.3, 0.3 + 1e-6], [0.0, 0.0], LAT))
    # collisions modulo the lattice count too
    with pytest.raises(cm.CollisionError):
        cm.cm_rhs(cm.CMState([0.3, 0.3 + 2 * LAT.omega1], [0.0, 0.0], LAT))
    with pytest.raises(ValueError):
        cm.CMState([0.1, 0.2], [0.0], LAT)

import numpy as np
import pytest
from scipy.optimize import least_squares, minimize_scalar

from fglab.finite_gap_kdv import (
    DivisorError,
    abel_linearization,
    baker_akhiezer,
    baker_akhiezer_grid,
    build_spectral_data,
    dubrovin_constant,
    dubrovin_flow,
    kdv_invariants,
    potential,
    potential_derivatives,
    stationary_lax_genus1,
    theta_zero_count,
    trace_potential,
)
from fglab.hyperelliptic import HyperellipticCurve, SurfacePoint
from fglab.special_functions import wp


def test_genus1_potential_is_shifted_lame(genus1):
    lat, curve, data = genus1
    xs = np.linspace(0.0, 3.0, 40)
    u = potential(data, xs)
    resid = lambda s: np.real(2 * wp(xs + s[0] + lat.omega2, lat)) - u
    coarse = minimize_scalar(lambda s: np.abs(resid([s])).max(), bounds=(0.0, 2 * lat.omega1.real),
                             method="bounded")
    fit = least_squares(resid, [coarse.x], xtol=1e-15, ftol=1e-15)
    assert np.abs(resid(fit.x)).max() < 1e-12
    # x-period of the theta potential equals the real period of the lattice
    assert abs(1 / abs(data.U[0]) - 2 * lat.omega1.real) < 1e-10


def test_potential_derivatives_consistent(genus2):
    _, data = genus2
    x, t, h = 0.7, 0.2, 1e-4
    d = potential_derivatives(data, np.array([x]), t)
    u = lambda s, tt=t: np.real(potential_derivatives(data, np.array([s]), tt)["u"])[0]
    fd_x = (u(x - 2 * h) - 8 * u(x - h) + 8 * u(x + h) - u(x + 2 * h)) / (12 * h)
    fd_t = (u(x, t - 2 * h) - 8 * u(x, t - h) + 8 * u(x, t + h) - u(x, t + 2 * h)) / (12 * h)
    assert abs(d["u_x"][0] - fd_x) < 1e-8
    assert abs(d["u_t"][0] - fd_t) < 1e-8


def test_theta_route_equals_trace_route(genus2):
    curve, data = genus2
    xs = np.linspace(0.0, 5.0, 51)
    traj = dubrovin_flow(data, xs)
    diff = potential(data, xs) - trace_potential(curve, traj.gamma)
    assert np.abs(diff - diff.mean()).max() < 1e-6
    # the constant offset reproduces the trace formula exactly
    assert abs(diff.mean()) < 1e-6


def test_dubrovin_stays_in_gaps(genus2):
    curve, data = genus2
    traj = dubrovin_flow(data, np.linspace(-4.0, 6.0, 201))
    for j in range(curve.genus):
        lo, hi = curve.gap(j + 1)
        assert np.all(traj.gamma[:, j] >= lo - 1e-12) and np.all(traj.gamma[:, j] <= hi + 1e-12)
    # both endpoints of each gap are reached (turning points are crossed)
    assert np.all(np.ptp(traj.gamma, axis=0) > 0.5)


def test_dubrovin_constant_and_linearization(genus2):
    _, data = genus2
    assert abs(dubrovin_constant(data) - (-2j)) < 1e-8
    traj = dubrovin_flow(data, np.linspace(0.0, 5.0, 51))
    lin = abel_linearization(data, traj)
    assert lin["max_residual"] < 1e-6
    assert np.allclose(np.real(lin["slope"]), -data.U, atol=1e-6)


@pytest.mark.parametrize("which", ["genus1", "genus2"])
def test_baker_akhiezer_eigenfunction(which, genus1, genus2):
    data = genus1[2] if which == "genus1" else genus2[1]
    c = data.curve
    xs = np.linspace(0.2, 2.5, 12)
    h = 1e-3
    for P in (SurfacePoint.on(c, 5.3 + 0.4j), SurfacePoint.on(c, 0.5 + 0.1j, -1), SurfacePoint.on(c, -3.0)):
        grid = np.concatenate([xs + s * h for s in (-2, -1, 0, 1, 2)])
        psi = baker_akhiezer_grid(data, grid, 0.0, P).reshape(5, -1)
        d2 = (-psi[0] + 16 * psi[1] - 30 * psi[2] + 16 * psi[3] - psi[4]) / (12 * h * h)
        res = -d2 + (potential(data, xs) - P.epsilon) * psi[2]
        assert np.max(np.abs(res) / np.abs(psi[2])) < 1e-6


def test_baker_akhiezer_normalised_at_origin(genus2):
    _, data = genus2
    P = SurfacePoint.on(data.curve, 2.5 + 1.0j)
    assert abs(baker_akhiezer(data, 0.0, 0.0, P).value - 1) < 1e-12


def test_theta_zero_count_one_per_gap(genus2):
    _, data = genus2
    for j in (1, 2):
        assert abs(theta_zero_count(data, j, n=256) - 1) < 1e-6


def test_divisor_validation():
    c = HyperellipticCurve((0.0, 1.0, 2.0, 3.0, 4.0))
    with pytest.raises(DivisorError):
        build_spectral_data(c, [(1.5, 1)])
    with pytest.raises(DivisorError):
        build_spectral_data(c, [(0.5, 1), (3.5, 1)])
    with pytest.raises(DivisorError):
        build_spectral_data(c, [(1.5, 1), (3.5, 2)])


def test_stationary_lax_genus1(genus1_moving):
    data = genus1_moving
    xs = np.linspace(0.0, 2.0, 25)
    rep = stationary_lax_genus1(data, [0.3 + 0.2j, -2.0, 1.7], xs)
    assert abs(rep["c1"] - rep["c1_expected"]) < 1e-8
    assert rep["lax_residual"] < 1e-6
    assert rep["det_coeff_rel_std"] < 1e-7
    assert rep["branch_point_error"] < 1e-8
    traj = dubrovin_flow(data, xs)
    assert np.abs(rep["b_roots"] - traj.gamma[:, 0]).max() < 1e-6


def test_kdv_invariants_trivial():
    assert kdv_invariants(np.zeros(16), 0.1) == (0.0, 0.0, 0.0)
    c, n, dx = 1.7, 32, 0.25
    L = n * dx
    I = kdv_invariants(np.full(n, c), dx)
    assert np.allclose(I, (c * L, c * c * L, c**3 * L), rtol=1e-14)


def test_metadata_records_conventions(genus2):
    _, data = genus2
    meta = data.metadata()
    for key in ("const_offset", "time_scale", "Z", "K", "potential_convention"):
        assert key in meta

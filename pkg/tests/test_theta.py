import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fglab.theta import (
    ThetaParams,
    ThetaTruncationError,
    log_theta_derivatives,
    tail_bound,
    theta_deriv,
    theta_eval,
    theta_partials,
    truncation_radius,
)

B2 = np.array([[0.3 + 1.1j, 0.2 + 0.4j], [0.2 + 0.4j, -0.1 + 0.9j]])
B3 = np.array([
    [0.1 + 1.2j, 0.3 + 0.2j, -0.2 + 0.1j],
    [0.3 + 0.2j, 0.4 + 1.0j, 0.1 - 0.3j],
    [-0.2 + 0.1j, 0.1 - 0.3j, -0.3 + 1.4j],
])


@pytest.mark.parametrize("tau", [0.9j, 0.3 + 0.7j, -0.45 + 1.6j])
@pytest.mark.parametrize("z", [0.0, 0.21 - 0.13j, 1.7 + 0.4j])
def test_genus1_against_jacobi_theta(tau, z):
    p = ThetaParams(np.array([[tau]]))
    q = mpmath.exp(1j * mpmath.pi * tau)
    ref = complex(mpmath.jtheta(3, mpmath.pi * z, q))
    assert abs(theta_eval(np.array([z]), p) - ref) < 1e-13 * max(1, abs(ref))
    dref = complex(mpmath.jtheta(3, mpmath.pi * z, q, 1)) * np.pi
    assert abs(theta_deriv(np.array([z]), p, [1.0]) - dref) < 1e-12 * max(1, abs(dref))
    d2ref = complex(mpmath.jtheta(3, mpmath.pi * z, q, 2)) * np.pi**2
    assert abs(theta_deriv(np.array([z]), p, [1.0], 2) - d2ref) < 1e-11 * max(1, abs(d2ref))


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.floats(-1, 1), min_size=6, max_size=6),
    st.lists(st.integers(-2, 2), min_size=6, max_size=6),
)
def test_quasi_periodicity(coords, shifts):
    for B in (B2, B3):
        g = B.shape[0]
        p = ThetaParams(B)
        z = np.array(coords[:g]) + 0.3j * np.array(coords[g:2 * g] if 2 * g <= 6 else coords[:g])
        n = np.array(shifts[:g])
        m = np.array(shifts[3:3 + g] if g <= 3 else shifts[:g])
        lhs = theta_eval(z + n + B @ m, p)
        rhs = np.exp(-1j * np.pi * m @ B @ m - 2j * np.pi * m @ z) * theta_eval(z, p)
        assert abs(lhs - rhs) <= 1e-10 * abs(rhs)


def test_even_and_real_on_imaginary_axis():
    p = ThetaParams(B2)
    z = np.array([0.3 - 0.1j, -0.2 + 0.25j])
    assert abs(theta_eval(z, p) - theta_eval(-z, p)) < 1e-13
    p1 = ThetaParams(np.array([[1.3j]]))
    assert abs(theta_eval(np.array([0.37]), p1).imag) < 1e-14


def test_partials_against_finite_differences():
    p = ThetaParams(B3)
    z = np.array([0.1 + 0.05j, -0.3, 0.2 - 0.1j])
    d = np.array([0.4, -0.2, 0.7])
    h = 1e-4
    fd = (theta_eval(z + h * d, p) - theta_eval(z - h * d, p)) / (2 * h)
    assert abs(theta_partials(z, p, [d]) - fd) < 1e-7 * abs(fd)
    # log-derivatives against ratios of partials
    g = log_theta_derivatives(z, p, d, 2)
    f0, f1, f2 = (theta_partials(z, p, [d] * k) for k in range(3))
    assert abs(g[0] - f1 / f0) < 1e-12 * abs(g[0])
    assert abs(g[1] - (f2 / f0 - (f1 / f0) ** 2)) < 1e-12 * max(1, abs(g[1]))


def test_vectorised_evaluation():
    p = ThetaParams(B2)
    zs = np.array([[0.1, 0.2], [0.3j, -0.1], [0.5, 0.5 - 0.2j]])
    vals = theta_eval(zs, p)
    assert vals.shape == (3,)
    assert np.allclose(vals, [theta_eval(z, p) for z in zs], rtol=1e-14)


def test_truncation_radius_and_tail():
    r1 = truncation_radius(B2, 1e-6)
    r2 = truncation_radius(B2, 1e-14)
    assert 1 <= r1 <= r2
    lam = np.linalg.eigvalsh(B2.imag).min()
    assert tail_bound(lam, 2, r2) < 1e-14
    # a radius two smaller than the default already meets the tolerance
    p = ThetaParams(B2)
    assert p.truncation_radius == r2 + 2


def test_invalid_matrices():
    with pytest.raises(ValueError):
        ThetaParams(np.array([[0.1 + 1j, 0.3], [0.0, 1j]]))
    with pytest.raises(ValueError):
        ThetaParams(np.array([[1.0 - 0.5j]]))
    with pytest.raises(ThetaTruncationError):
        truncation_radius(np.array([[1e-5j]]), 1e-14)

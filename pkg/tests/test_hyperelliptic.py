import numpy as np
import pytest
from scipy.special import ellipk

from fglab.hyperelliptic import (
    CurveError,
    HyperellipticCurve,
    SurfacePoint,
    abel_map,
    abelian_integral,
    cycle_basis,
    period_matrices,
    quasimomentum_dp,
    radical_on_sheet,
    second_kind_vectors,
)

CURVES = [(-1.0, 0.3, 2.2), (0.0, 1.0, 2.0, 3.0, 4.0), (-2.0, -1.1, 0.0, 0.7, 1.5, 2.6, 4.0)]


def test_curve_validation():
    with pytest.raises(CurveError):
        HyperellipticCurve((0.0, 1.0))
    with pytest.raises(CurveError):
        HyperellipticCurve((0.0, 1.0, 1.0))
    with pytest.raises(CurveError):
        HyperellipticCurve((0.0, 1.0, 2.0), mode="other")
    c = HyperellipticCurve((2.0, 0.0, 1.0))
    assert list(c.e) == [0.0, 1.0, 2.0] and c.genus == 1


def test_radical_sheets():
    c = HyperellipticCurve(CURVES[1])
    for eps in (0.5 + 0.3j, 7.0, -2.0 - 1.0j, 2.5):
        z = radical_on_sheet(c, eps, 1)
        assert abs(z * z - c.R(eps)) < 1e-12 * max(1, abs(c.R(eps)))
        assert radical_on_sheet(c, eps, -1) == -z
    P = SurfacePoint.on(c, 0.5 + 0.3j, -1)
    assert P.involution().sheet == 1 and P.involution().z == -P.z
    # radical behaves like eps^(5/2) at large real eps on sheet +
    assert radical_on_sheet(c, 1e4, 1).real > 0


def test_genus1_elliptic_oracle():
    e = CURVES[0]
    B = period_matrices(HyperellipticCurve(e)).B[0, 0]
    m1 = (e[1] - e[0]) / (e[2] - e[0])
    assert abs(B - 1j * ellipk(m1) / ellipk(1 - m1)) < 1e-12


@pytest.mark.parametrize("bp", CURVES)
def test_riemann_bilinear(bp):
    pd = period_matrices(HyperellipticCurve(bp))
    assert np.abs(pd.B - pd.B.T).max() < 1e-12
    assert np.linalg.eigvalsh(pd.B.imag).min() > 0
    # normalisation: a-periods of the normalized differentials are the identity
    assert np.allclose(pd.normalization @ pd.a_raw.T, np.eye(len(bp) // 2), atol=1e-12)


def test_a_period_by_contour():
    c = HyperellipticCurve(CURVES[1])
    pd = period_matrices(c)
    cyc = cycle_basis(c, pd)
    for j in range(c.genus):
        nodes, w = cyc.a_contour(j)
        vals = np.array([[n**k for k in range(c.genus)] for n in nodes]) / c.radical(nodes)[:, None]
        per = (vals * w[:, None]).sum(axis=0) @ pd.normalization.T
        target = np.zeros(c.genus)
        target[j] = 1
        assert np.allclose(per, target, atol=1e-10)


@pytest.mark.parametrize("bp", CURVES[:2])
def test_abel_map_of_branch_points_is_half_period(bp):
    c = HyperellipticCurve(bp)
    pd = period_matrices(c)
    for em in c.e:
        A = abel_map(c, pd, SurfacePoint.on(c, em))
        assert pd.lattice_residual(2 * A) < 1e-12


def test_abel_map_involution_and_base():
    c = HyperellipticCurve(CURVES[1])
    pd = period_matrices(c)
    P = SurfacePoint.on(c, 1.7 + 0.6j)
    A = abel_map(c, pd, P)
    assert pd.lattice_residual(abel_map(c, pd, P.involution()) + A) < 1e-11
    Q = SurfacePoint.on(c, -0.4 + 0.2j, -1)
    assert pd.lattice_residual(abel_map(c, pd, P, base=Q) - (A - abel_map(c, pd, Q))) < 1e-11


def test_abel_map_derivative_is_holomorphic_differential():
    c = HyperellipticCurve(CURVES[1])
    pd = period_matrices(c)
    eps, h = 1.6 + 0.7j, 1e-5
    dA = (abel_map(c, pd, SurfacePoint.on(c, eps + h)) - abel_map(c, pd, SurfacePoint.on(c, eps - h))) / (2 * h)
    omega = pd.normalization @ np.array([eps**k for k in range(c.genus)]) / c.radical(eps)
    assert np.allclose(dA, omega, atol=1e-8)


def test_second_kind_expansion():
    c = HyperellipticCurve(CURVES[1])
    pd = period_matrices(c)
    diffs = second_kind_vectors(c, pd, [1, 2, 3])
    # odd orders have real x-flow vectors on a real curve; even orders are exact
    assert np.abs(diffs[1].flow.imag).max() < 1e-12
    assert np.abs(diffs[2].U).max() == 0
    # Omega_1 - k decays like 1/k along the upper edge of the last band
    errs = [abs(abelian_integral(c, diffs[1], SurfacePoint.on(c, R)) - np.sqrt(R)) for R in (100.0, 400.0, 1600.0)]
    assert 1.8 < errs[0] / errs[1] < 2.2 and 1.8 < errs[1] / errs[2] < 2.2


def test_quasimomentum_leading_coefficient():
    c = HyperellipticCurve(CURVES[1])
    pd = period_matrices(c)
    dp = quasimomentum_dp(c, pd)
    assert abs(dp[-1] - 0.5) < 1e-14


def test_complex_mode_limited_to_radical():
    c = HyperellipticCurve((0.0, 1.0 + 0.5j, 2.0), mode="complex")
    assert abs(c.radical(3.0) ** 2 - c.R(3.0)) < 1e-12
    with pytest.raises(NotImplementedError):
        period_matrices(c)

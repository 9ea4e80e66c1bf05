"""Riemann theta function with a certified truncation radius.

Convention::

    theta(z | B) = sum_{m in Z^g} exp(2 pi i (m, z) + pi i (m, B m))

For each argument the summation ball is centred on the dominant term
``m ~ -(Im B)^{-1} Im z`` so the truncation bound is uniform in ``z``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma

__all__ = [
    "ThetaTruncationError",
    "ThetaParams",
    "truncation_radius",
    "tail_bound",
    "theta_eval",
    "theta_deriv",
    "theta_partials",
    "log_theta_derivatives",
]

RADIUS_CAP = 60


class ThetaTruncationError(ValueError):
    """No truncation radius up to the cap meets the requested tolerance."""


def _check_period_matrix(B):
    B = np.atleast_2d(np.asarray(B, dtype=complex))
    if B.shape[0] != B.shape[1]:
        raise ValueError("period matrix must be square")
    if not np.allclose(B, B.T, atol=1e-8 * max(1.0, np.abs(B).max())):
        raise ValueError("period matrix must be symmetric")
    Y = 0.5 * (B.imag + B.imag.T)
    lam = np.linalg.eigvalsh(Y)
    if lam.min() <= 0:
        raise ValueError("Im B must be positive definite")
    return B, Y, lam.min()


def _ball_volume(g: int, r: float) -> float:
    return math.pi ** (g / 2) * r**g / gamma(g / 2 + 1)


def tail_bound(lam_min: float, g: int, radius: int, order: int = 0, scale: float = 1.0) -> float:
    """Upper bound on the dropped terms, relative to the dominant term.

    Lattice points with ``s <= |m + b| < s + 1`` are counted by the volume of the
    ball of radius ``s + 1 + sqrt(g)/2``. ``order`` adds the polynomial weight of
    a term-wise derivative with direction norm ``scale``.
    """
    total = 0.0
    for j in range(2000):
        s = radius + j
        term = _ball_volume(g, s + 1 + math.sqrt(g) / 2) * math.exp(-math.pi * lam_min * s * s)
        if order:
            term *= (2 * math.pi * scale * (s + 1 + math.sqrt(g))) ** order
        total += term
        # Gaussian decay dominates the polynomial weight once terms start shrinking
        if j > 2 and term < 1e-17 * total:
            break
    return total


def truncation_radius(B, tol: float = 1e-14, order: int = 0, scale: float = 1.0) -> int:
    """Smallest integer radius whose tail bound is below ``tol``."""
    _, _, lam = _check_period_matrix(B)
    g = np.atleast_2d(B).shape[0]
    for r in range(1, RADIUS_CAP + 1):
        if tail_bound(lam, g, r, order, scale) < tol:
            return r
    raise ThetaTruncationError(
        f"tail bound above {tol:g} at radius cap {RADIUS_CAP} (lambda_min={lam:.3g})"
    )


@dataclass(frozen=True)
class ThetaParams:
    """Period matrix plus truncation settings.

    ``truncation_radius`` defaults to the certified radius for ``tolerance``
    with a margin of 2 so that second derivatives stay within tolerance.
    """

    B: np.ndarray
    tolerance: float = 1e-14
    truncation_radius: int | None = None
    _points: np.ndarray = field(init=False, repr=False, compare=False)
    _Yinv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        B, Y, _ = _check_period_matrix(self.B)
        object.__setattr__(self, "B", B)
        r = self.truncation_radius
        if r is None:
            r = truncation_radius(B, self.tolerance) + 2
        object.__setattr__(self, "truncation_radius", int(r))
        g = B.shape[0]
        reach = r + math.sqrt(g) / 2
        k = int(math.ceil(reach))
        pts = np.array(list(itertools.product(range(-k, k + 1), repeat=g)), dtype=float)
        pts = pts[np.linalg.norm(pts, axis=1) <= reach + 1e-12]
        object.__setattr__(self, "_points", pts)
        object.__setattr__(self, "_Yinv", np.linalg.inv(Y))

    @property
    def genus(self) -> int:
        return self.B.shape[0]


def _prepare(z, params: ThetaParams):
    z = np.asarray(z, dtype=complex)
    g = params.genus
    if z.shape == () and g == 1:
        z = z.reshape(1)
    if z.shape[-1] != g:
        raise ValueError(f"argument must have trailing dimension {g}")
    flat = z.reshape(-1, g)
    centre = np.round(-flat.imag @ params._Yinv.T)
    m = centre[:, None, :] + params._points[None, :, :]
    B = params.B
    expo = 2j * np.pi * np.einsum("nkg,ng->nk", m, flat) + 1j * np.pi * np.einsum(
        "nkg,gh,nkh->nk", m, B, m
    )
    return z.shape[:-1], m, np.exp(expo)


def theta_eval(z, params: ThetaParams):
    """theta(z | B) for one g-vector or an array of shape (..., g)."""
    shape, _, terms = _prepare(z, params)
    out = terms.sum(axis=1).reshape(shape)
    return out.item() if out.shape == () else out


def theta_partials(z, params: ThetaParams, directions):
    """Mixed directional derivative ``prod_j (d_j . grad) theta`` (term-wise).

    ``directions`` is a sequence of g-vectors; an empty sequence gives theta.
    """
    shape, m, terms = _prepare(z, params)
    w = np.ones(terms.shape, dtype=complex)
    for d in directions:
        d = np.atleast_1d(np.asarray(d, dtype=complex))
        w = w * (2j * np.pi * np.einsum("nkg,g->nk", m, d))
    out = (w * terms).sum(axis=1).reshape(shape)
    return out.item() if out.shape == () else out


def theta_deriv(z, params: ThetaParams, direction, order: int = 1):
    """First or second derivative of theta along ``direction``.

    Order 2 is the Hessian contraction ``d^T (grad^2 theta) d``.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    return theta_partials(z, params, [direction] * order)


def log_theta_derivatives(z, params: ThetaParams, direction, nmax: int):
    """``[d^n log theta]`` for n = 1..nmax along one direction.

    Uses f^(n) = sum_{k=1}^{n} C(n-1, k-1) g^(k) f^(n-k) with g = log f.
    """
    f = [theta_partials(z, params, [direction] * n) for n in range(nmax + 1)]
    f = [np.asarray(v) for v in f]
    g = [None]
    for n in range(1, nmax + 1):
        acc = f[n].copy()
        for k in range(1, n):
            acc = acc - math.comb(n - 1, k - 1) * g[k] * f[n - k]
        g.append(acc / f[0])
    return g[1:]

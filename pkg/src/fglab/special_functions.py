"""Weierstrass elliptic functions and the Lame kernel Phi(x, z).

All functions take a :class:`Lattice` given by its half-periods and accept
scalars or numpy arrays. Evaluation folds the argument into the fundamental
cell of a reduced basis and sums rapidly convergent q-series; quasi-periodic
factors are multiplied back for zeta and sigma.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import ellipk

__all__ = [
    "PoleProximityError",
    "Lattice",
    "EllipticValue",
    "wp",
    "wp_prime",
    "weier_zeta",
    "weier_sigma",
    "phi_fn",
    "phi_x",
    "phi_xx",
    "evaluate",
]

_NTERMS = 24
EXCLUSION_FACTOR = 1e-6


class PoleProximityError(ValueError):
    """Argument lies inside the exclusion radius around a lattice point."""


def _reduce_basis(w1: complex, w2: complex) -> tuple[complex, complex]:
    # Gauss reduction: |Re tau| <= 1/2, |tau| >= 1. Same lattice, same orientation.
    for _ in range(200):
        tau = w2 / w1
        n = round(tau.real)
        if n:
            w2 = w2 - n * w1
            tau = w2 / w1
        if abs(tau) < 1 - 1e-15:
            w1, w2 = w2, -w1
            continue
        break
    return w1, w2


@dataclass(frozen=True)
class Lattice:
    """Period lattice with full periods ``2*omega1`` and ``2*omega2``.

    ``Im(omega2 / omega1)`` must be positive.
    """

    omega1: complex
    omega2: complex

    def __post_init__(self):
        object.__setattr__(self, "omega1", complex(self.omega1))
        object.__setattr__(self, "omega2", complex(self.omega2))
        if self.omega1 == 0 or (self.omega2 / self.omega1).imag <= 0:
            raise ValueError("lattice must satisfy Im(omega2/omega1) > 0")

    @classmethod
    def from_roots(cls, e1: float, e2: float, e3: float) -> "Lattice":
        """Rectangular lattice whose real roots satisfy e1 > e2 > e3, sum zero."""
        e1, e2, e3 = float(e1), float(e2), float(e3)
        if not e1 > e2 > e3:
            raise ValueError("need e1 > e2 > e3")
        if abs(e1 + e2 + e3) > 1e-12 * max(abs(e1), abs(e3)):
            raise ValueError("roots must sum to zero")
        m = (e2 - e3) / (e1 - e3)
        s = np.sqrt(e1 - e3)
        return cls(ellipk(m) / s, 1j * ellipk(1.0 - m) / s)

    # reduced basis and q-series data -----------------------------------
    @cached_property
    def _basis(self):
        w1, w2 = _reduce_basis(self.omega1, self.omega2)
        tau = w2 / w1
        q = np.exp(1j * np.pi * tau)
        n = np.arange(1, _NTERMS + 1)
        q2n = q ** (2 * n)
        lam = q2n / (1.0 - q2n)
        eta1 = np.pi**2 / (12 * w1) * (1 - 24 * np.sum(n * lam))
        eta2 = (eta1 * w2 - 0.5j * np.pi) / w1
        half = n - 0.5
        th_q = (-1.0) ** (n - 1) * q ** (half**2)
        th1p0 = 2 * np.sum(th_q * (2 * n - 1))
        return {
            "w1": w1, "w2": w2, "tau": tau, "q": q, "n": n, "lam": lam,
            "eta1": eta1, "eta2": eta2, "th_q": th_q, "th1p0": th1p0,
        }

    @property
    def tau(self) -> complex:
        return self.omega2 / self.omega1

    @cached_property
    def periods(self) -> tuple[complex, complex]:
        return 2 * self.omega1, 2 * self.omega2

    @cached_property
    def exclusion_radius(self) -> float:
        b = self._basis
        return EXCLUSION_FACTOR * 2 * min(abs(b["w1"]), abs(b["w2"]))

    @cached_property
    def roots(self) -> tuple[complex, complex, complex]:
        """(wp(omega1), wp(omega1 + omega2), wp(omega2))."""
        w1, w2 = self.omega1, self.omega2
        return (complex(wp(w1, self)), complex(wp(w1 + w2, self)), complex(wp(w2, self)))

    @cached_property
    def invariants(self) -> tuple[complex, complex]:
        e1, e2, e3 = self.roots
        g2 = 2 * (e1 * e1 + e2 * e2 + e3 * e3)
        g3 = 4 * e1 * e2 * e3
        return g2, g3

    @cached_property
    def eta(self) -> tuple[complex, complex]:
        """zeta(omega1), zeta(omega2) for the user's half-periods."""
        return complex(weier_zeta(self.omega1, self)), complex(weier_zeta(self.omega2, self))


@dataclass(frozen=True)
class EllipticValue:
    value: complex
    nearest_pole_distance: float


def _fold(x, lat: Lattice, check: bool):
    """Split x = x0 + 2 n1 w1 + 2 n2 w2 with x0 in the central cell."""
    b = lat._basis
    w1, w2 = b["w1"], b["w2"]
    x = np.asarray(x, dtype=complex)
    # real coordinates in the basis (2 w1, 2 w2)
    m = np.array([[(2 * w1).real, (2 * w2).real], [(2 * w1).imag, (2 * w2).imag]])
    c = np.linalg.solve(m, np.stack([x.real.ravel(), x.imag.ravel()]))
    n1 = np.round(c[0]).reshape(x.shape)
    n2 = np.round(c[1]).reshape(x.shape)
    x0 = x - 2 * n1 * w1 - 2 * n2 * w2
    dist = _pole_distance(x0, w1, w2)
    if check and np.any(dist < lat.exclusion_radius):
        raise PoleProximityError(
            f"argument within {lat.exclusion_radius:.3g} of a lattice point"
        )
    return x0, n1, n2, dist


def _pole_distance(x0, w1, w2):
    d = np.full(x0.shape, np.inf)
    for a in (-1, 0, 1):
        for c in (-1, 0, 1):
            d = np.minimum(d, np.abs(x0 - 2 * a * w1 - 2 * c * w2))
    return d


def _out(v, x):
    return v.item() if np.ndim(x) == 0 else v


def wp(x, lat: Lattice):
    """Weierstrass p-function."""
    b = lat._basis
    x0, _, _, _ = _fold(x, lat, check=True)
    a = np.pi / (2 * b["w1"])
    v = a * x0
    n, lam = b["n"], b["lam"]
    s = np.sum(n * lam * np.cos(2 * np.multiply.outer(v, n)), axis=-1)
    val = -b["eta1"] / b["w1"] + a * a * (1 / np.sin(v) ** 2 - 8 * s)
    return _out(val, x)


def wp_prime(x, lat: Lattice):
    """Derivative of the p-function."""
    b = lat._basis
    x0, _, _, _ = _fold(x, lat, check=True)
    a = np.pi / (2 * b["w1"])
    v = a * x0
    n, lam = b["n"], b["lam"]
    s = np.sum(n * n * lam * np.sin(2 * np.multiply.outer(v, n)), axis=-1)
    sv = np.sin(v)
    val = a**3 * (-2 * np.cos(v) / sv**3 + 16 * s)
    return _out(val, x)


def weier_zeta(x, lat: Lattice):
    """Weierstrass zeta-function (zeta' = -wp)."""
    b = lat._basis
    x0, n1, n2, _ = _fold(x, lat, check=True)
    a = np.pi / (2 * b["w1"])
    v = a * x0
    n, lam = b["n"], b["lam"]
    s = np.sum(lam * np.sin(2 * np.multiply.outer(v, n)), axis=-1)
    val = b["eta1"] * x0 / b["w1"] + a * (np.cos(v) / np.sin(v) + 4 * s)
    val = val + 2 * n1 * b["eta1"] + 2 * n2 * b["eta2"]
    return _out(val, x)


def weier_sigma(x, lat: Lattice):
    """Weierstrass sigma-function (entire, odd)."""
    b = lat._basis
    x0, n1, n2, _ = _fold(x, lat, check=False)
    a = np.pi / (2 * b["w1"])
    v = a * x0
    n = b["n"]
    th1 = 2 * np.sum(b["th_q"] * np.sin(np.multiply.outer(v, 2 * n - 1)), axis=-1)
    val = np.exp(b["eta1"] * x0 * x0 / (2 * b["w1"])) * th1 / (a * b["th1p0"])
    # sigma(x0 + 2W) = (-1)^(n1+n2+n1 n2) exp(2H (x0 + W)) sigma(x0)
    big_w = n1 * b["w1"] + n2 * b["w2"]
    big_h = n1 * b["eta1"] + n2 * b["eta2"]
    sign = (-1.0) ** ((n1 + n2 + n1 * n2) % 2)
    val = sign * np.exp(2 * big_h * (x0 + big_w)) * val
    return _out(val, x)


def phi_fn(x, z, lat: Lattice):
    """Lame kernel sigma(z - x) / (sigma(z) sigma(x)) * exp(zeta(z) x)."""
    x = np.asarray(x, dtype=complex)
    z = np.asarray(z, dtype=complex)
    _fold(x, lat, check=True)
    _fold(z, lat, check=True)
    _fold(z - x, lat, check=True)
    val = (
        weier_sigma(z - x, lat)
        / (weier_sigma(z, lat) * weier_sigma(x, lat))
        * np.exp(weier_zeta(z, lat) * x)
    )
    return _out(np.asarray(val), x if x.ndim else z)


def _phi_logder(x, z, lat):
    return weier_zeta(z, lat) - weier_zeta(x, lat) - weier_zeta(z - x, lat)


def phi_x(x, z, lat: Lattice):
    """d/dx Phi(x, z)."""
    x = np.asarray(x, dtype=complex)
    z = np.asarray(z, dtype=complex)
    val = np.asarray(phi_fn(x, z, lat)) * _phi_logder(x, z, lat)
    return _out(np.asarray(val), x if x.ndim else z)


def phi_xx(x, z, lat: Lattice):
    """d^2/dx^2 Phi(x, z), from the logarithmic derivative (not the Lame identity)."""
    x = np.asarray(x, dtype=complex)
    z = np.asarray(z, dtype=complex)
    g = _phi_logder(x, z, lat)
    gp = wp(x, lat) - wp(z - x, lat)
    val = np.asarray(phi_fn(x, z, lat)) * (g * g + gp)
    return _out(np.asarray(val), x if x.ndim else z)


_FUNCS = {"wp": wp, "wp_prime": wp_prime, "zeta": weier_zeta, "sigma": weier_sigma}


def evaluate(name: str, x: complex, lat: Lattice) -> EllipticValue:
    """Scalar evaluation with the distance to the nearest lattice point attached."""
    _, _, _, dist = _fold(x, lat, check=False)
    return EllipticValue(complex(_FUNCS[name](x, lat)), float(dist))

"""Hyperelliptic spectral curves z^2 = prod (eps - e_j) and their period data.

Branch-cut convention
---------------------
The radical on sheet ``+`` is the product of principal square roots
``prod_j sqrt(eps - e_j)``. For real branch points e_0 < ... < e_2g its cuts
are the gaps ``[e_{2j-1}, e_{2j}]`` and the half-line ``(-inf, e_0]``; on a cut
the value is the limit from the upper half plane. On the top band
``[e_2g, inf)`` the radical behaves like ``+eps^(g + 1/2)``.

Cycles
------
``a_j`` runs around the gap ``[e_{2j-1}, e_{2j}]``, so
``oint_{a_j} eta = 2 int_gap eta`` (upper edge). ``b_j`` crosses the bands
``[e_0, e_1], ..., [e_{2j-2}, e_{2j-1}]``; its period is twice the sum of the
band integrals, with an overall orientation chosen so that Im B > 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.integrate import quad_vec

__all__ = [
    "CurveError",
    "QuadratureError",
    "HyperellipticCurve",
    "SurfacePoint",
    "CycleDescription",
    "PeriodData",
    "SecondKindDifferential",
    "radical_on_sheet",
    "cycle_basis",
    "period_matrices",
    "abel_map",
    "quasimomentum_dp",
    "second_kind_vectors",
    "abelian_integral",
]

SEPARATION_TOL = 1e-10
QUAD_TOL = 1e-14
MAX_NODES = 1 << 15


class CurveError(ValueError):
    """Degenerate or malformed curve data."""


class QuadratureError(RuntimeError):
    """A period or path integral failed to converge."""


@dataclass(frozen=True)
class HyperellipticCurve:
    """Curve z^2 = R(eps) with 2g + 1 distinct branch points and one point at infinity."""

    branch_points: tuple
    mode: str = "real"

    def __post_init__(self):
        pts = np.asarray(self.branch_points)
        if pts.ndim != 1 or len(pts) % 2 == 0:
            raise CurveError("need an odd number (2g + 1) of branch points")
        if self.mode == "real":
            if np.iscomplexobj(pts) and np.any(np.abs(pts.imag) > 0):
                raise CurveError("real mode requires real branch points")
            pts = np.sort(np.asarray(pts.real, dtype=float))
            tup = tuple(float(p) for p in pts)
        elif self.mode == "complex":
            pts = np.asarray(pts, dtype=complex)
            tup = tuple(complex(p) for p in pts)
        else:
            raise CurveError(f"unknown mode {self.mode!r}")
        scale = max(1.0, float(np.max(np.abs(pts))))
        diffs = np.abs(pts[:, None] - pts[None, :])
        np.fill_diagonal(diffs, np.inf)
        if diffs.min() < SEPARATION_TOL * scale:
            raise CurveError("branch points must be pairwise distinct")
        object.__setattr__(self, "branch_points", tup)

    @property
    def genus(self) -> int:
        return (len(self.branch_points) - 1) // 2

    @property
    def e(self) -> np.ndarray:
        return np.asarray(self.branch_points)

    def R(self, eps):
        eps = np.asarray(eps, dtype=complex)
        return np.prod(eps[..., None] - self.e, axis=-1)

    def radical(self, eps):
        """Sheet-``+`` radical: product of principal square roots."""
        eps = np.asarray(eps, dtype=complex)
        return np.prod(np.sqrt(eps[..., None] - self.e + 0j), axis=-1)

    def _rest(self, eps, skip):
        # product of sqrt(eps - e_m) over m not in skip, upper-edge values on the axis
        idx = [m for m in range(len(self.e)) if m not in skip]
        eps = np.asarray(eps, dtype=complex)
        if not idx:
            return np.ones(eps.shape, dtype=complex)
        return np.prod(np.sqrt(eps[..., None] - self.e[idx] + 0j), axis=-1)

    def in_cut(self, x: float) -> bool:
        """True when the real point x lies on a cut (a gap or left of e_0)."""
        e = self.e
        if x < e[0]:
            return True
        for j in range(1, self.genus + 1):
            if e[2 * j - 1] < x < e[2 * j]:
                return True
        return False

    def gap(self, j: int) -> tuple[float, float]:
        """Gap j (1-based) as (e_{2j-1}, e_{2j})."""
        return float(self.e[2 * j - 1].real), float(self.e[2 * j].real)

    # full-interval moments --------------------------------------------
    @cached_property
    def _interval_moments(self):
        self._require_real()
        kmax = 2 * self.genus + 6
        return [
            _chebyshev_moments(self, i, kmax) for i in range(len(self.e) - 1)
        ]

    def _require_real(self):
        if self.mode != "real":
            raise NotImplementedError("period computations are implemented for real branch points")


@dataclass(frozen=True)
class SurfacePoint:
    """Point (eps, z) of the curve; ``sheet`` is +1 when z equals ``curve.radical(eps)``."""

    epsilon: complex
    sheet: int
    z: complex

    @classmethod
    def on(cls, curve: HyperellipticCurve, eps, sheet: int = 1) -> "SurfacePoint":
        if sheet not in (1, -1):
            raise ValueError("sheet must be +1 or -1")
        return cls(complex(eps), sheet, complex(radical_on_sheet(curve, eps, sheet)))

    def involution(self) -> "SurfacePoint":
        return SurfacePoint(self.epsilon, -self.sheet, -self.z)


def radical_on_sheet(curve: HyperellipticCurve, eps, sheet: int = 1):
    """z with z^2 = R(eps) on the requested sheet (exactly 0 at branch points)."""
    val = sheet * curve.radical(eps)
    return val.item() if np.ndim(val) == 0 else val


# ---------------------------------------------------------------------------
# quadrature primitives


def _chebyshev_moments(curve, i, kmax):
    """int_{e_i}^{e_{i+1}} eps^k / sqrt(R) d eps (upper edge) for k = 0..kmax.

    With eps = m - r cos(theta) the inverse-square-root endpoint factors are
    absorbed exactly; the midpoint rule in theta is Gauss-Chebyshev.
    """
    a, b = curve.e[i], curve.e[i + 1]
    m, r = 0.5 * (a + b), 0.5 * (b - a)
    ks = np.arange(kmax + 1)
    prev = None
    n = 32
    while n <= MAX_NODES:
        th = (np.arange(n) + 0.5) * np.pi / n
        eps = m - r * np.cos(th)
        f = 1.0 / (1j * curve._rest(eps, (i, i + 1)))
        val = (np.pi / n) * (eps[:, None] ** ks * f[:, None]).sum(axis=0)
        if prev is not None:
            err = np.abs(val - prev) / np.maximum(np.abs(val), np.abs(val).max())
            if np.all(err < QUAD_TOL * 10):
                return val
        prev = val
        n *= 2
    raise QuadratureError(f"Gauss-Chebyshev did not converge on interval {i}")


def _gauss_legendre(func, a, b, kdim):
    """Adaptive-order Gauss-Legendre on [a, b] for a vector-valued smooth integrand."""
    if a == b:
        return np.zeros(kdim, dtype=complex)
    prev = None
    n = 16
    while n <= 4096:
        x, w = np.polynomial.legendre.leggauss(n)
        t = 0.5 * (b - a) * x + 0.5 * (a + b)
        val = 0.5 * (b - a) * (w[:, None] * func(t)).sum(axis=0)
        if prev is not None and np.all(
            np.abs(val - prev) <= 1e-13 * np.maximum(np.abs(val), 1.0)
        ):
            return val
        prev = val
        n *= 2
    # fall back to adaptive Gauss-Kronrod for near-singular integrands
    res, err = quad_vec(
        lambda s: _split(func(np.array([s]))[0]), a, b, epsabs=1e-14, epsrel=1e-13, limit=2000
    )
    return _join(res)


def _split(v):
    return np.concatenate([v.real, v.imag])


def _join(v):
    h = len(v) // 2
    return v[:h] + 1j * v[h:]


def _piece_moments(curve, p, q, kmax):
    """int_p^q eps^k / sqrt(R) along the upper edge; [p, q] lies between
    consecutive branch points or beyond the extreme ones."""
    e = curve.e
    ks = np.arange(kmax + 1)
    nb = len(e)
    if q <= e[0]:
        # eps = e0 - t^2, sqrt(eps - e0) = i t
        def f(t):
            eps = e[0] - t * t
            return eps[:, None] ** ks * (2.0 / (1j * curve._rest(eps, (0,))))[:, None]

        return _gauss_legendre(f, np.sqrt(e[0] - q), np.sqrt(e[0] - p), kmax + 1)
    if p >= e[-1]:
        def f(t):
            eps = e[-1] + t * t
            return eps[:, None] ** ks * (2.0 / curve._rest(eps, (nb - 1,)))[:, None]

        return _gauss_legendre(f, np.sqrt(p - e[-1]), np.sqrt(q - e[-1]), kmax + 1)
    i = int(np.searchsorted(e, p, side="right") - 1)
    i = min(max(i, 0), nb - 2)
    a, b = e[i], e[i + 1]
    m, r = 0.5 * (a + b), 0.5 * (b - a)
    tp = np.arccos(np.clip((m - p) / r, -1, 1))
    tq = np.arccos(np.clip((m - q) / r, -1, 1))

    def f(th):
        eps = m - r * np.cos(th)
        return eps[:, None] ** ks * (1.0 / (1j * curve._rest(eps, (i, i + 1))))[:, None]

    return _gauss_legendre(f, tp, tq, kmax + 1)


def real_moments(curve: HyperellipticCurve, p: float, q: float, kmax: int) -> np.ndarray:
    """int_p^q eps^k d eps / sqrt(R(eps + i0)) for k = 0..kmax along the real axis."""
    curve._require_real()
    if p == q:
        return np.zeros(kmax + 1, dtype=complex)
    if p > q:
        return -real_moments(curve, q, p, kmax)
    e = curve.e
    brk = [p] + [x for x in e if p < x < q] + [q]
    total = np.zeros(kmax + 1, dtype=complex)
    full = curve._interval_moments
    for lo, hi in zip(brk[:-1], brk[1:]):
        i = int(np.searchsorted(e, lo))
        if i < len(e) - 1 and lo == e[i] and hi == e[i + 1] and kmax < len(full[i]):
            total += full[i][: kmax + 1]
        else:
            total += _piece_moments(curve, lo, hi, kmax)
    return total


# ---------------------------------------------------------------------------
# cycles and periods


@dataclass(frozen=True)
class CycleDescription:
    """Canonical cycles realised as real-axis polylines.

    ``a_cycles[j]`` is the gap interval encircled by a_{j+1}; ``b_cycles[j]``
    lists the band intervals crossed by b_{j+1} (traversed on sheet + then -,
    leftwards on sheet + when the period data has ``b_orientation == -1``).
    """

    a_cycles: list
    b_cycles: list
    intersection: np.ndarray

    def a_contour(self, j: int, n: int = 400, pad: float = 0.5):
        """Clockwise ellipse around the cut of a_{j+1} on sheet +.

        Returns nodes and d eps / d theta weights for the periodic trapezoid
        rule, so ``sum(f(nodes) * weights)`` approximates the a-period of f.
        """
        lo, hi = self.a_cycles[j]
        m, r = 0.5 * (lo + hi), 0.5 * (hi - lo)
        th = 2 * np.pi * np.arange(n) / n
        nodes = m + r * (1 + pad) * np.cos(th) - 1j * r * pad * np.sin(th)
        weights = (2 * np.pi / n) * (-r * (1 + pad) * np.sin(th) - 1j * r * pad * np.cos(th))
        return nodes, weights


def cycle_basis(curve: HyperellipticCurve, pd: "PeriodData | None" = None) -> CycleDescription:
    curve._require_real()
    e, g = curve.e, curve.genus
    a = [(float(e[2 * j - 1]), float(e[2 * j])) for j in range(1, g + 1)]
    b = [[(float(e[2 * k]), float(e[2 * k + 1])) for k in range(j)] for j in range(1, g + 1)]
    orient = (pd if pd is not None else period_matrices(curve)).b_orientation
    return CycleDescription(a, b, -orient * _intersections(a, b))


def _intersections(a, b):
    """Signed crossings of each a-ellipse (sheet +) with each b polyline.

    The clockwise ellipse around [lo, hi] crosses the real axis left of lo
    moving up and right of hi moving down. Taking b leftwards on sheet +, a
    crossing scores +1 at the left point and -1 at the right point; the
    sheet - leg of b never meets an a-cycle drawn on sheet +.
    """
    g = len(a)
    out = np.zeros((g, g), dtype=int)
    for j, (lo, hi) in enumerate(a):
        for k, bands in enumerate(b):
            for blo, bhi in bands:
                if blo < lo <= bhi:
                    out[j, k] += 1
                if blo <= hi < bhi:
                    out[j, k] -= 1
    return out


@dataclass(frozen=True)
class PeriodData:
    """Normalised holomorphic basis and period matrix.

    ``normalization[s, k]`` gives Omega_s = sum_k v_sk eps^k d eps / sqrt(R).
    """

    normalization: np.ndarray
    B: np.ndarray
    a_raw: np.ndarray
    b_raw: np.ndarray
    b_orientation: int
    a_moments: np.ndarray = field(repr=False)
    b_moments: np.ndarray = field(repr=False)
    U_vectors: dict = field(default_factory=dict)
    dp_coeffs: np.ndarray | None = None

    @property
    def genus(self) -> int:
        return self.B.shape[0]

    def lattice_coordinates(self, A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Real (alpha, beta) with A = alpha + B beta."""
        A = np.asarray(A, dtype=complex)
        beta = np.linalg.solve(self.B.imag, A.imag.T).T
        alpha = A.real - beta @ self.B.real.T
        return alpha, beta

    def reduce(self, A: np.ndarray) -> np.ndarray:
        """Representative of A modulo the lattice Z^g + B Z^g near the origin."""
        alpha, beta = self.lattice_coordinates(A)
        return (alpha - np.round(alpha)) + (beta - np.round(beta)) @ self.B.T

    def lattice_residual(self, A: np.ndarray) -> float:
        """Distance of A from the nearest lattice vector, in lattice coordinates."""
        alpha, beta = self.lattice_coordinates(A)
        return float(max(np.abs(alpha - np.round(alpha)).max(), np.abs(beta - np.round(beta)).max()))


def _cycle_moments(curve, kmax):
    g = curve.genus
    full = curve._interval_moments
    a_m = np.array([2 * full[2 * j - 1][: kmax + 1] for j in range(1, g + 1)])
    b_m = np.array(
        [2 * sum(full[2 * k][: kmax + 1] for k in range(j)) for j in range(1, g + 1)]
    )
    return a_m, b_m


def period_matrices(curve: HyperellipticCurve) -> PeriodData:
    """a-/b-periods of eps^k d eps / sqrt(R), the normalised basis and B."""
    curve._require_real()
    g = curve.genus
    if g == 0:
        raise CurveError("genus 0 curve has no periods")
    kmax = 2 * g + 6
    a_m, b_m = _cycle_moments(curve, kmax)
    a_raw, b_raw = a_m[:, :g], b_m[:, :g]
    cond = np.linalg.cond(a_raw)
    if not np.isfinite(cond) or cond > 1e12:
        raise CurveError(f"ill-conditioned a-period matrix (cond={cond:.3g})")
    v = np.linalg.inv(a_raw.T)
    B = b_raw @ v.T
    orient = 1
    if np.linalg.eigvalsh(0.5 * (B.imag + B.imag.T)).min() <= 0:
        orient = -1
        B = -B
        b_m = -b_m
        b_raw = -b_raw
    pd = PeriodData(v, B, a_raw, b_raw, orient, a_m, b_m)
    dp = quasimomentum_dp(curve, pd)
    vecs = second_kind_vectors(curve, pd, [1, 3])
    return PeriodData(
        v, B, a_raw, b_raw, orient, a_m, b_m,
        U_vectors={i: d.U for i, d in vecs.items()}, dp_coeffs=dp,
    )


# ---------------------------------------------------------------------------
# second-kind differentials


def _sqrt_series(curve, nterms):
    """Coefficients of S(w) = prod sqrt(1 - e_m w), so sqrt(R) = eps^(g+1/2) S(1/eps)."""
    logs = np.zeros(nterms, dtype=complex)
    for n in range(1, nterms):
        logs[n] = -0.5 * np.sum(curve.e.astype(complex) ** n) / n
    # exp of a power series by the standard recurrence
    out = np.zeros(nterms, dtype=complex)
    out[0] = 1.0
    for n in range(1, nterms):
        out[n] = sum(k * logs[k] * out[n - k] for k in range(1, n + 1)) / n
    return out


@dataclass(frozen=True)
class SecondKindDifferential:
    """d Omega_i = P(eps) d eps / sqrt(R) with principal part d(k^i), k^2 = eps.

    ``U`` is (1/2 pi i) times the b-periods; ``flow`` is (1/2 pi) times the
    b-periods, which is real for real curves. ``flow = i U``.
    """

    order: int
    coeffs: np.ndarray
    U: np.ndarray
    flow: np.ndarray


def _second_kind(curve, pd, order):
    g = curve.genus
    if order < 1:
        raise ValueError("order must be >= 1")
    if order % 2 == 0:
        # k^order = eps^(order/2) is single valued: exact differential, zero periods
        coeffs = np.zeros(order // 2 + 1, dtype=complex)
        coeffs[order // 2 - 1] = order / 2
        zero = np.zeros(g)
        return SecondKindDifferential(order, coeffs, zero.astype(complex), zero)
    top = g + (order - 1) // 2
    S = _sqrt_series(curve, top - g + 1)
    coeffs = np.zeros(top + 1, dtype=complex)
    for n in range(top - g + 1):
        coeffs[top - n] = 0.5 * order * S[n]
    a_m, b_m = pd.a_moments, pd.b_moments
    if top >= a_m.shape[1]:
        raise ValueError("order too large for the cached moments")
    rhs = -a_m[:, g: top + 1] @ coeffs[g: top + 1]
    try:
        coeffs[:g] = np.linalg.solve(a_m[:, :g], rhs)
    except np.linalg.LinAlgError as exc:
        raise CurveError("singular normalisation system") from exc
    bper = b_m[:, : top + 1] @ coeffs
    U = bper / (2j * np.pi)
    return SecondKindDifferential(order, coeffs, U, bper / (2 * np.pi))


def quasimomentum_dp(curve: HyperellipticCurve, pd: PeriodData) -> np.ndarray:
    """Ascending coefficients of dp = (eps^g / 2 + ...) d eps / sqrt(R) with zero a-periods."""
    return _second_kind(curve, pd, 1).coeffs


def second_kind_vectors(curve: HyperellipticCurve, pd: PeriodData, orders) -> dict:
    """Normalised d Omega_i for each requested order, keyed by order."""
    return {int(i): _second_kind(curve, pd, int(i)) for i in orders}


# ---------------------------------------------------------------------------
# Abelian integrals along the canonical path from infinity


def _poly_moments_dot(coeffs, moments):
    return moments[..., : len(coeffs)] @ coeffs


def _top_value(curve, polys, orders):
    """Regularised integrals from infinity to the top branch point on sheet +.

    Row r of ``polys`` is a numerator; ``orders[r]`` is 0 for holomorphic rows
    and i for rows whose integral is normalised as k^i + O(1/k). Beyond
    ``ref`` the tail is written in s = eps^(-1/2) with the principal part
    removed coefficient-wise, so no cancellation occurs at large eps.
    """
    e_top = float(curve.e[-1])
    ref = 2.0 * float(np.abs(curve.e).max()) + 1.0
    kmax = polys.shape[1] - 1
    g = curve.genus
    to_ref = real_moments(curve, e_top, ref, kmax) @ polys.T
    nser = 80
    S = _sqrt_series(curve, nser)
    rows = []
    for c, i in zip(polys, orders):
        t = np.zeros(nser, dtype=complex)
        if i:
            top = g + (i - 1) // 2
            for k in range(top + 1):
                t[top - k] = c[k] if k < len(c) else 0.0
            d = t - 0.5 * i * S
            d[: (i - 1) // 2 + 1] = 0.0
            rows.append((i, d))
        else:
            rows.append((0, c))

    def f(sv):
        w = sv * sv
        Sw = np.prod(np.sqrt(1.0 - np.multiply.outer(w, curve.e) + 0j), axis=-1)
        out = np.empty((len(sv), len(rows)), dtype=complex)
        for r, (i, d) in enumerate(rows):
            if i:
                out[:, r] = 2 * sv ** (-1 - i) * npoly.polyval(w, d) / Sw
            else:
                k = np.arange(len(d))
                out[:, r] = 2 * (sv[:, None] ** (2 * g - 2 - 2 * k) * d).sum(axis=1) / Sw
        return out

    tail = _gauss_legendre(f, 0.0, ref ** -0.5, len(rows))
    const = np.array([ref ** (i / 2) if i else 0.0 for i in orders], dtype=complex)
    return const - tail - to_ref


_TOP_CACHE: dict = {}


def _top_value_cached(curve, polys, orders):
    key = (curve, polys.shape, polys.tobytes(), tuple(orders))
    val = _TOP_CACHE.get(key)
    if val is None:
        if len(_TOP_CACHE) > 256:
            _TOP_CACHE.clear()
        val = _TOP_CACHE[key] = _top_value(curve, polys, orders)
    return val


def _path_integrals(curve, polys, orders, P: SurfacePoint):
    curve._require_real()
    polys = np.ascontiguousarray(np.atleast_2d(np.asarray(polys, dtype=complex)))
    kmax = polys.shape[1] - 1
    eps = complex(P.epsilon)
    x0, y = eps.real, eps.imag
    val = _top_value_cached(curve, polys, orders)
    val = val + real_moments(curve, float(curve.e[-1]), x0, kmax) @ polys.T
    sign = 1
    if y != 0.0:
        scale = max(1.0, float(np.abs(curve.e).max()))
        if np.min(np.abs(curve.e - x0)) < 1e-9 * scale:
            raise CurveError("vertical path leg starts at a branch point")
        if y < 0 and curve.in_cut(x0):
            sign = -1
        ks = np.arange(kmax + 1)

        def f(s):
            pt = x0 + 1j * s
            return (pt[:, None] ** ks) * (1j / (sign * curve.radical(pt)))[:, None]

        val = val + _gauss_legendre(f, 0.0, y, kmax + 1) @ polys.T
    end_z = sign * curve.radical(eps)
    if P.z != 0 and abs(end_z) > 0:
        if abs(P.z - end_z) > abs(P.z + end_z):
            val = -val
    elif P.sheet != sign:
        val = -val
    return val


def abel_map(curve: HyperellipticCurve, pd: PeriodData, P: SurfacePoint, base: SurfacePoint | None = None):
    """A(P) = int_base^P Omega along the canonical path (base defaults to infinity).

    The path runs along the upper edge of the real axis on sheet + from
    infinity to Re(eps), then vertically; points on sheet - use A(P-) = -A(P+).
    """
    g = curve.genus
    polys = pd.normalization
    val = _path_integrals(curve, polys, [0] * g, P)
    if base is not None:
        val = val - _path_integrals(curve, polys, [0] * g, base)
    return val


def abelian_integral(curve: HyperellipticCurve, diff: SecondKindDifferential, P: SurfacePoint) -> complex:
    """Omega_i(P) normalised so that Omega_i = k^i + O(1/k) at infinity on sheet +."""
    return complex(_path_integrals(curve, diff.coeffs[None, :], [diff.order], P)[0])

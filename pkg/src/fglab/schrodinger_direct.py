"""Direct spectral problem for the Hill operator -d^2/dx^2 + u(x) with period T.

The monodromy matrix is the transfer matrix of the basis (C, S) with
C(x0) = S'(x0) = 1, C'(x0) = S(x0) = 0; the half-trace f = (C(T) + S'(T)) / 2
is the discriminant and the spectrum is {eps : |f(eps)| <= 1}.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

__all__ = [
    "MonodromyError",
    "FourierPotential",
    "MonodromyMatrix",
    "BandReport",
    "monodromy",
    "discriminant",
    "band_scan",
    "gap_edges_vs_branch_points",
    "gap_centres",
    "free_resonances",
    "max_workers",
]

RTOL = 1e-11
ATOL = 1e-13
EDGE_TOL = 1e-8
DOUBLE_POINT_TOL = 1e-10


class MonodromyError(RuntimeError):
    """ODE integration did not meet its tolerance."""


def max_workers() -> int:
    """Worker cap from FGLAB_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("FGLAB_THREADS", "1")))
    except ValueError:
        return 1


class FourierPotential:
    """Real periodic function given by its samples on a uniform grid.

    Evaluation uses the trigonometric interpolant, so derivatives are exact
    for the interpolant and spectrally accurate for smooth data.
    """

    def __init__(self, samples, period: float):
        samples = np.asarray(samples, dtype=float)
        n = len(samples)
        if n < 4:
            raise ValueError("need at least 4 samples")
        self.period = float(period)
        self.n = n
        c = np.fft.rfft(samples) / n
        k = np.arange(len(c))
        if n % 2 == 0:
            c[-1] *= 0.5  # split the Nyquist mode symmetrically
        w = np.where(k == 0, 1.0, 2.0)
        self._c = c * w
        self._k = 2 * np.pi * k / self.period

    @classmethod
    def from_function(cls, func, period: float, n: int = 256) -> "FourierPotential":
        x = np.arange(n) * period / n
        return cls(func(x), period)

    def derivative(self, x, order: int = 0):
        x = np.asarray(x, dtype=float)
        ph = np.exp(1j * np.multiply.outer(x, self._k))
        val = ph @ (self._c * (1j * self._k) ** order)
        return val.real

    def __call__(self, x, t=0.0):
        return self.derivative(x, 0)

    @property
    def mean(self) -> float:
        return float(self._c[0].real)

    def tail_ratio(self) -> float:
        """Size of the top quarter of the spectrum relative to the largest mode."""
        a = np.abs(self._c)
        return float(a[-max(1, len(a) // 4):].max() / max(a.max(), 1e-300))


@dataclass(frozen=True)
class MonodromyMatrix:
    a: complex
    b: complex
    c: complex
    d: complex
    epsilon: complex
    period: float

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    @property
    def det(self) -> complex:
        return self.a * self.d - self.b * self.c

    @property
    def half_trace(self) -> complex:
        return 0.5 * (self.a + self.d)


def _scalar_u(u):
    # scalar evaluation is the hot path inside the integrator
    if isinstance(u, FourierPotential):
        c, k = u._c, u._k

        def f(x):
            return (np.exp(1j * k * x) @ c).real

        return f
    return lambda x: float(np.real(u(x)))


def monodromy(u, T: float, eps, x0: float = 0.0, rtol: float = RTOL, atol: float = ATOL) -> MonodromyMatrix:
    """Transfer matrix over [x0, x0 + T] for -y'' + u y = eps y."""
    if T <= 0:
        raise ValueError("period must be positive")
    uf = _scalar_u(u)
    eps = complex(eps)
    real = eps.imag == 0.0
    e = eps.real if real else eps

    def rhs(x, y):
        q = uf(x) - e
        return np.array([y[1], q * y[0], y[3], q * y[2]])

    y0 = np.array([1.0, 0.0, 0.0, 1.0], dtype=float if real else complex)
    sol = solve_ivp(rhs, (x0, x0 + T), y0, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise MonodromyError(sol.message)
    C, Cp, S, Sp = sol.y[:, -1]
    return MonodromyMatrix(complex(C), complex(S), complex(Cp), complex(Sp), eps, float(T))


def discriminant(u, T: float, eps, **kw):
    """f(eps) = Tr(T) / 2; real for real eps."""
    m = monodromy(u, T, eps, **kw)
    f = m.half_trace
    return f.real if complex(eps).imag == 0 else f


def _map(func, items):
    items = list(items)
    w = max_workers()
    if w <= 1 or len(items) < 2:
        return [func(i) for i in items]
    # each item integrates independently, so results do not depend on scheduling
    with ThreadPoolExecutor(max_workers=w) as ex:
        return list(ex.map(func, items))


@dataclass
class BandReport:
    """Spectral zones inside a scan window.

    ``bands`` and ``gaps`` are [lo, hi] pairs; a band touching the window
    end is truncated there. ``double_points`` lists closed gaps (tangencies
    of f to +-1).
    """

    bands: list
    gaps: list
    edges: list
    double_points: list
    window: tuple
    grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "bands": [list(map(float, b)) for b in self.bands],
            "gaps": [list(map(float, g)) for g in self.gaps],
            "edges": [float(e) for e in self.edges],
            "double_points": [float(d) for d in self.double_points],
            "window": [float(w) for w in self.window],
        }


def _bisect(g, lo, hi, glo, tol):
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def band_scan(u, T: float, eps_range, grid: int = 400, tol: float = EDGE_TOL,
              double_point_tol: float = DOUBLE_POINT_TOL) -> BandReport:
    """Locate the band edges f(eps) = +-1 in ``eps_range``.

    Sign changes of |f| - 1 on the grid are refined by bisection. Cells where
    |f| has an interior maximum close to 1 without a sign change are
    examined: a maximum above 1 hides a narrow gap (both edges refined), and
    a maximum within ``double_point_tol`` of 1 is a closed gap.
    """
    lo, hi = map(float, eps_range)
    if not hi > lo:
        raise ValueError("empty scan window")
    xs = np.linspace(lo, hi, int(grid))
    fs = np.array(_map(lambda e: discriminant(u, T, e), xs))
    h = np.abs(fs) - 1.0
    disc = lambda e: discriminant(u, T, e)
    g = lambda e: abs(disc(e)) - 1.0

    brackets = [(xs[i], xs[i + 1], h[i]) for i in range(len(xs) - 1) if (h[i] > 0) != (h[i + 1] > 0)]
    edges = _map(lambda br: _bisect(g, br[0], br[1], br[2], tol), brackets)

    # hidden extrema: |f| peaks inside the spectrum region near +-1
    double_points = []
    for i in range(1, len(xs) - 1):
        if not (abs(fs[i]) >= abs(fs[i - 1]) and abs(fs[i]) >= abs(fs[i + 1])):
            continue
        # sign changes already bracket edges; only fully interior peaks are examined
        if max(h[i - 1], h[i], h[i + 1]) > 0 or abs(fs[i]) < 0.9:
            continue
        res = minimize_scalar(lambda e: -abs(disc(e)), bounds=(xs[i - 1], xs[i + 1]),
                              method="bounded", options={"xatol": tol})
        peak = -res.fun - 1.0
        if peak > double_point_tol:
            gl = _bisect(g, xs[i - 1], res.x, h[i - 1], tol)
            gr = _bisect(g, res.x, xs[i + 1], peak, tol)
            edges.extend([gl, gr])
        elif peak > -1e-6:
            double_points.append(float(res.x))
    edges = sorted(edges)

    # assemble zones
    inside = h[0] <= 0
    bands, gaps = [], []
    start = lo if inside else None
    for e in edges:
        if inside:
            bands.append([start, e])
            inside = False
        else:
            start = e
            inside = True
    if inside:
        bands.append([start, hi])
    for (a0, a1), (b0, b1) in zip(bands[:-1], bands[1:]):
        gaps.append([a1, b0])
    return BandReport(bands, gaps, edges, sorted(double_points), (lo, hi), xs, fs)


def gap_edges_vs_branch_points(u, T: float, curve, eps_range=None, grid: int = 400) -> dict:
    """Compare the computed spectrum edges with the branch points of ``curve``.

    Matches every branch point to the nearest computed edge and reports the
    worst distance together with the number of finite gaps found.
    """
    e = np.sort(np.asarray(curve.branch_points, dtype=float))
    if eps_range is None:
        span = e[-1] - e[0]
        eps_range = (e[0] - 0.5 * span - 1.0, e[-1] + 3.0 * span + 30.0 / T**2)
    rep = band_scan(u, T, eps_range, grid)
    edges = np.asarray(rep.edges)
    if len(edges) == 0:
        return {"max_error": float("inf"), "n_gaps": 0, "report": rep}
    err = np.array([np.abs(edges - x).min() for x in e])
    return {
        "max_error": float(err.max()),
        "errors": err.tolist(),
        "n_gaps": len(rep.gaps),
        "report": rep,
    }


def gap_centres(report: BandReport) -> list:
    """Midpoints of open gaps together with closed-gap (double) points, sorted."""
    mids = [0.5 * (a + b) for a, b in report.gaps]
    return sorted(mids + list(report.double_points))


def free_resonances(T: float, eps_range, grid: int = 400) -> list:
    """Double points of the zero potential with period T, found by the same scan."""
    zero = FourierPotential(np.zeros(8), T)
    return band_scan(zero, T, eps_range, grid).double_points

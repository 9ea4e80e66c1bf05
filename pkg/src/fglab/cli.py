"""Command-line front end.

    fglab <kind> --config path.json [--out dir] [--verbose]

Kinds: periods, potential, bands, dubrovin, soliton, cm, verify. Each run
writes ``<kind>.csv`` and ``<kind>.json`` into the output directory. Exit
status is 0 on success, 1 when ``verify`` finds a failing check, 2 on invalid
configuration and 3 on numerical failure; errors are also written as JSON to
stderr and ``error.json``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys

import numpy as np

from . import calogero_moser as cm
from .finite_gap_kdv import (
    DivisorError,
    abel_linearization,
    build_spectral_data,
    dubrovin_flow,
    potential_derivatives,
    trace_potential,
)
from .hyperelliptic import CurveError, HyperellipticCurve, QuadratureError, period_matrices
from .schrodinger_direct import FourierPotential, MonodromyError, band_scan, max_workers
from .solitons import (
    DarbouxError,
    GridTooCoarseError,
    calibrate_one_soliton,
    calibrate_theta_kdv,
    one_soliton,
    theta_kdv_field,
)
from .special_functions import Lattice, PoleProximityError, wp
from .theta import ThetaTruncationError

__all__ = ["ConfigError", "main", "run", "emit_csv", "emit_json", "read_csv"]

KINDS = ("periods", "potential", "bands", "dubrovin", "soliton", "cm", "verify")
log = logging.getLogger("fglab")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3
NUMERICAL_ERRORS = (
    QuadratureError, MonodromyError, ThetaTruncationError, PoleProximityError, cm.CollisionError,
    cm.TrackingError, DarbouxError, GridTooCoarseError, np.linalg.LinAlgError, FloatingPointError,
    ArithmeticError, RuntimeError,
)
VALIDATION_ERRORS = (DivisorError, CurveError)


class ConfigError(ValueError):
    """Configuration does not validate."""


# ---------------------------------------------------------------------------
# emitters


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v) + 0.0, ".17g")  # no "-0"
    return str(v)


def emit_csv(table: dict, path) -> None:
    """Write a column table (ordered dict of equal-length columns) with a header row."""
    cols = list(table)
    n = {len(np.atleast_1d(table[c])) for c in cols}
    if len(n) > 1:
        raise ValueError("columns must have equal length")
    rows = zip(*(np.atleast_1d(table[c]) for c in cols))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path) -> dict:
    """Inverse of :func:`emit_csv` for numeric tables."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = [[float(v) for v in row] for row in r]
    arr = np.array(data, dtype=float).reshape(-1, len(header))
    return {h: arr[:, i] for i, h in enumerate(header)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": _jsonable(float(obj.real)), "im": _jsonable(float(obj.imag))}
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def emit_json(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(report), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# config helpers


def _get(cfg, key, typ=None, default=...):
    if key not in cfg:
        if default is ...:
            raise ConfigError(f"missing field '{key}'")
        return default
    v = cfg[key]
    if typ is not None and not isinstance(v, typ):
        raise ConfigError(f"field '{key}' has wrong type")
    return v


def _grid(cfg, key, default=None):
    """[start, stop, count] -> array; count >= 1."""
    g = cfg.get(key, default)
    if g is None:
        raise ConfigError(f"missing grid '{key}'")
    if not (isinstance(g, list) and len(g) == 3):
        raise ConfigError(f"grid '{key}' must be [start, stop, count]")
    a, b, n = g
    if not isinstance(n, int) or n < 1:
        raise ConfigError(f"grid '{key}' needs a positive integer count")
    if n > 1 and not b > a:
        raise ConfigError(f"grid '{key}' must have stop > start")
    return np.linspace(float(a), float(b), n)


def _complex(v, what):
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, list) and len(v) == 2 and all(isinstance(p, (int, float)) for p in v):
        return complex(v[0], v[1])
    raise ConfigError(f"{what} must be a number or [re, im]")


def _curve(cfg):
    c = _get(cfg, "curve", dict)
    bp = _get(c, "branch_points", list)
    if len(bp) < 3 or len(bp) % 2 == 0 or not all(isinstance(v, (int, float)) for v in bp):
        raise ConfigError("branch_points must be an odd number (>= 3) of reals")
    return HyperellipticCurve(tuple(float(v) for v in bp))


def _divisor(cfg, curve):
    d = _get(cfg, "divisor", list)
    if len(d) != curve.genus:
        raise ConfigError(f"divisor needs {curve.genus} points")
    out = []
    for p in d:
        if not (isinstance(p, list) and len(p) == 2 and p[1] in (1, -1)):
            raise ConfigError("divisor points are [epsilon, sheet] with sheet +-1")
        out.append((float(p[0]), int(p[1])))
    return out


def _lattice(cfg):
    lat = _get(cfg, "lattice", dict)
    if "roots" in lat:
        r = lat["roots"]
        if not (isinstance(r, list) and len(r) == 3):
            raise ConfigError("lattice roots must be three reals")
        try:
            return Lattice.from_roots(*r)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    try:
        return Lattice(_complex(_get(lat, "omega1"), "omega1"), _complex(_get(lat, "omega2"), "omega2"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _tol(cfg, key, default):
    v = cfg.get("tolerances", {}).get(key, default)
    if not isinstance(v, (int, float)) or not v > 0:
        raise ConfigError(f"tolerance '{key}' must be positive")
    return float(v)


# ---------------------------------------------------------------------------
# pipelines


def _run_periods(cfg):
    curve = _curve(cfg)
    pd = period_matrices(curve)
    g = curve.genus
    i, j = np.meshgrid(range(g), range(g), indexing="ij")
    table = {"i": i.ravel(), "j": j.ravel(), "B_re": pd.B.real.ravel(), "B_im": pd.B.imag.ravel()}
    meta = {
        "branch_points": list(curve.branch_points),
        "genus": g,
        "B": pd.B,
        "normalization": pd.normalization,
        "b_orientation": pd.b_orientation,
        "symmetry_error": float(np.abs(pd.B - pd.B.T).max()),
        "min_eig_ImB": float(np.linalg.eigvalsh(pd.B.imag).min()),
        "dp_coeffs": pd.dp_coeffs,
    }
    return table, meta


def _spectral(cfg):
    curve = _curve(cfg)
    return build_spectral_data(curve, _divisor(cfg, curve), theta_tol=_tol(cfg, "theta", 1e-14))


def _run_potential(cfg):
    data = _spectral(cfg)
    xs = _grid(cfg, "x")
    ts = _grid(cfg, "t", [0.0, 0.0, 1])
    conv = cfg.get("convention", "schrodinger")
    if conv not in ("schrodinger", "kdv"):
        raise ConfigError("convention must be 'schrodinger' or 'kdv'")
    meta = data.metadata()
    X, Tt = np.meshgrid(xs, ts, indexing="ij")
    X, Tt = X.ravel(), Tt.ravel()
    if conv == "kdv":
        span = 1.0 / abs(data.U[0])
        cal = calibrate_theta_kdv(data, np.linspace(0, span, 30), np.linspace(0, 1, 8))
        field = theta_kdv_field(data, cal["sign"], cal["time_scale"])
        u = field(X, Tt)
        meta["kdv_calibration"] = {"sign": cal["sign"], "time_scale": cal["time_scale"],
                                   "residual": cal["residual"]}
    else:
        u = np.real(potential_derivatives(data, X, Tt)["u"])
    meta["convention"] = conv
    return {"x": X, "t": Tt, "u": u}, meta


def _potential_from_config(pcfg):
    typ = _get(pcfg, "type", str)
    if typ == "zero":
        T = float(_get(pcfg, "period"))
        return FourierPotential(np.zeros(8), T), T, {}
    if typ == "cos":
        T = float(_get(pcfg, "period"))
        a = float(_get(pcfg, "amplitude"))
        m = int(pcfg.get("harmonic", 1))
        return FourierPotential.from_function(lambda x: a * np.cos(2 * np.pi * m * x / T), T, 32 * max(m, 1)), T, {}
    if typ == "fourier":
        T = float(_get(pcfg, "period"))
        s = _get(pcfg, "samples", list)
        if len(s) < 4:
            raise ConfigError("need at least 4 samples")
        return FourierPotential(np.asarray(s, dtype=float), T), T, {}
    if typ == "lame":
        lat = _lattice(pcfg)
        n = int(pcfg.get("n", 2))
        T = 2 * lat.omega1.real
        if abs(lat.omega1.imag) > 0 or abs(lat.omega2.real) > 0:
            raise ConfigError("lame potential needs a rectangular lattice")
        u = FourierPotential.from_function(lambda x: np.real(n * (n + 1) * wp(x + lat.omega2, lat)), T,
                                           int(pcfg.get("samples", 128)))
        return u, T, {"lattice": [lat.omega1, lat.omega2], "n": n}
    if typ == "finite_gap":
        data = _spectral(pcfg)
        if data.genus != 1:
            raise ConfigError("finite_gap potential for band scans must have genus 1 (periodic)")
        T = 1.0 / abs(data.U[0])
        n = int(pcfg.get("samples", 128))
        u = FourierPotential.from_function(lambda x: np.real(potential_derivatives(data, x)["u"]), T, n)
        return u, T, data.metadata()
    raise ConfigError(f"unknown potential type '{typ}'")


def _run_bands(cfg):
    u, T, pmeta = _potential_from_config(_get(cfg, "potential", dict))
    rng = _get(cfg, "eps_range", list)
    if len(rng) != 2 or not rng[1] > rng[0]:
        raise ConfigError("eps_range must be [lo, hi] with hi > lo")
    grid = int(cfg.get("grid", 400))
    if grid < 3:
        raise ConfigError("grid must be >= 3")
    rep = band_scan(u, T, rng, grid, tol=_tol(cfg, "edge", 1e-8))
    kinds = ["band"] * len(rep.bands) + ["gap"] * len(rep.gaps) + ["double_point"] * len(rep.double_points)
    lo = [b[0] for b in rep.bands] + [g[0] for g in rep.gaps] + list(rep.double_points)
    hi = [b[1] for b in rep.bands] + [g[1] for g in rep.gaps] + list(rep.double_points)
    table = {"index": np.arange(len(kinds)), "kind": kinds, "lo": lo, "hi": hi}
    meta = {"period": T, "potential": pmeta, **rep.to_dict(), "n_gaps": len(rep.gaps)}
    return table, meta


def _run_dubrovin(cfg):
    data = _spectral(cfg)
    xs = _grid(cfg, "x")
    traj = dubrovin_flow(data, xs, rtol=_tol(cfg, "ode_rtol", 1e-10), atol=_tol(cfg, "ode_atol", 1e-12))
    u_theta = np.real(potential_derivatives(data, xs)["u"])
    u_trace = trace_potential(data.curve, traj.gamma)
    table = {"x": xs, "t": np.zeros_like(xs), "u": u_theta}
    for j in range(data.genus):
        table[f"gamma{j + 1}"] = traj.gamma[:, j]
    for j in range(data.genus):
        table[f"sheet{j + 1}"] = traj.sheet[:, j]
    table["u_trace"] = u_trace
    lin = abel_linearization(data, traj)
    diff = u_theta - u_trace
    meta = data.metadata()
    meta.update({
        "dubrovin_constant": traj.constant,
        "abel_slope": lin["slope"],
        "abel_residual": lin["max_residual"],
        "trace_constant": float(diff.mean()),
        "theta_vs_trace": float(np.abs(diff - diff.mean()).max()),
    })
    return table, meta


def _run_soliton(cfg):
    alphas = cfg.get("alpha", [1.0])
    if isinstance(alphas, (int, float)):
        alphas = [alphas]
    if not alphas or not all(isinstance(a, (int, float)) and a > 0 for a in alphas):
        raise ConfigError("alpha must be positive")
    x0 = float(cfg.get("x0", 0.0))
    xs = _grid(cfg, "x")
    ts = _grid(cfg, "t", [0.0, 0.0, 1])
    cals = [calibrate_one_soliton(float(a)) for a in alphas]
    sol = one_soliton(float(alphas[0]), x0, cals[0]["sign"], cals[0]["beta_coeff"])
    X, Tt = np.meshgrid(xs, ts, indexing="ij")
    meta = {
        "equation": "u_t = 6 u u_x + u_xxx",
        "calibration": [{"alpha": a, "sign": c["sign"], "beta_coeff": c["beta_coeff"],
                         "beta": c["beta_coeff"] * a**1.5, "residual": c["residual"]}
                        for a, c in zip(alphas, cals)],
    }
    if len(alphas) >= 2:
        betas = [abs(c["beta_coeff"]) * a**1.5 for a, c in zip(alphas, cals)]
        meta["speed_exponent"] = float(np.polyfit(np.log(alphas), np.log(betas), 1)[0])
    X, Tt = X.ravel(), Tt.ravel()
    return {"x": X, "t": Tt, "u": sol.func(X, Tt)}, meta


def _run_cm(cfg):
    lat = _lattice(cfg)
    pos = [_complex(v, "position") for v in _get(cfg, "positions", list)]
    vel = [_complex(v, "velocity") for v in _get(cfg, "velocities", list)]
    if len(pos) != len(vel) or not pos:
        raise ConfigError("positions and velocities must be non-empty and of equal length")
    t_end = float(_get(cfg, "t_end"))
    n_samples = int(cfg.get("n_samples", 21))
    if n_samples < 2:
        raise ConfigError("n_samples must be >= 2")
    zs = [_complex(z, "z") for z in cfg.get("z", [[0.31, 0.17]])]
    state = cm.CMState(pos, vel, lat)
    cm._check_collisions(state.positions, lat)
    traj = cm.integrate_cm(state, t_end, tol=_tol(cfg, "ode", 1e-12))
    ts = np.linspace(0.0, t_end, n_samples)
    Y = np.array([traj.sol.sol(t) for t in ts])
    N = state.n
    table = {"t": ts}
    for i in range(N):
        table[f"x{i + 1}_re"], table[f"x{i + 1}_im"] = Y[:, i].real, Y[:, i].imag
    for i in range(N):
        table[f"v{i + 1}_re"], table[f"v{i + 1}_im"] = Y[:, N + i].real, Y[:, N + i].imag
    inner = ts[(ts > 0.01 * abs(t_end)) & (ts < 0.99 * abs(t_end))] if t_end > 0 else ts[1:-1]
    ev = [np.sort_complex(np.linalg.eigvals(cm.lax_L(traj.state(t), zs[0]))) for t in ts]
    meta = {
        "coupling": cm.COUPLING,
        "m_prefactors": list(cm.M_PREFACTORS),
        "lattice": [lat.omega1, lat.omega2],
        "eigen_drift": float(np.abs(np.array(ev) - ev[0]).max()),
        "lax_residual": {str(z): cm.lax_residual(traj, z, inner) for z in zs},
        "spectral_curve_t0": cm.spectral_curve(state, zs[0]),
        "branch_limits_nu": cm.branch_limits(state)["nu"],
        "momentum_drift": float(abs(Y[:, N:].sum(axis=1) - Y[0, N:].sum()).max()),
    }
    if cfg.get("double_bloch", True):
        meta["double_bloch"] = cm.double_bloch_check(traj, zs[0], ts=ts)
    if N <= 3:
        meta["pd_parametrization"] = cm.pd_parametrization_check(state, seed=int(cfg.get("seed", 0)))
    return table, meta


def _run_verify(cfg):
    from .verify import CHECKS, run_checks

    nums = cfg.get("criteria", sorted(CHECKS))
    if not isinstance(nums, list) or not all(n in CHECKS for n in nums):
        raise ConfigError(f"criteria must be a list drawn from {sorted(CHECKS)}")
    results = run_checks(nums, log=log.info)
    table = {
        "criterion": [r.number for r in results],
        "passed": [r.passed for r in results],
        "seconds": [r.seconds for r in results],
    }
    meta = {"all_passed": all(r.passed for r in results), "results": [r.to_dict() for r in results]}
    return table, meta


PIPELINES = {
    "periods": _run_periods,
    "potential": _run_potential,
    "bands": _run_bands,
    "dubrovin": _run_dubrovin,
    "soliton": _run_soliton,
    "cm": _run_cm,
    "verify": _run_verify,
}


def run(kind: str, cfg: dict, out_dir: str = ".") -> dict:
    """Run one pipeline, write ``<kind>.csv`` and ``<kind>.json``, return the metadata."""
    if kind not in PIPELINES:
        raise ConfigError(f"unknown kind '{kind}'")
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if "kind" in cfg and cfg["kind"] != kind:
        raise ConfigError(f"config kind '{cfg['kind']}' does not match '{kind}'")
    seed = cfg.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    np.random.seed(seed)
    table, meta = PIPELINES[kind](cfg)
    meta = {"kind": kind, "seed": seed, "threads": max_workers(), **meta}
    os.makedirs(out_dir, exist_ok=True)
    emit_csv(table, os.path.join(out_dir, f"{kind}.csv"))
    emit_json(meta, os.path.join(out_dir, f"{kind}.json"))
    return meta


def _error(kind_label, exc, out_dir, code):
    payload = {"status": "error", "category": kind_label, "type": type(exc).__name__,
               "message": str(exc), "exit_code": code}
    sys.stderr.write(json.dumps(payload) + "\n")
    try:
        os.makedirs(out_dir, exist_ok=True)
        emit_json(payload, os.path.join(out_dir, "error.json"))
    except OSError:
        pass
    return code


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="fglab", description="finite-gap spectral toolkit")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--config", required=True, help="JSON experiment configuration")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--verbose", action="store_true")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        return _error("validation", exc, args.out, EXIT_VALIDATION)
    try:
        meta = run(args.kind, cfg, args.out)
    except (ConfigError, *VALIDATION_ERRORS) as exc:
        return _error("validation", exc, args.out, EXIT_VALIDATION)
    except NUMERICAL_ERRORS as exc:
        return _error("numerical", exc, args.out, EXIT_NUMERICAL)
    except (ValueError, TypeError, KeyError) as exc:
        return _error("validation", exc, args.out, EXIT_VALIDATION)
    if args.kind == "verify" and not meta["all_passed"]:
        return EXIT_CHECK_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

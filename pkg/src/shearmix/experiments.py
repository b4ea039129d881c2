"""Batch drivers: dissipation-time sweeps, inviscid snapshots, large-c comparison."""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .core import FlowParams, Grid, SpectralField, sobolev_norm
from .hypo import exponents
from .solver import (
    TAIL_TOLERANCE,
    ResolutionWarning,
    SolverConfig,
    Trajectory,
    exact_inviscid,
    solve,
    write_field_dump,
)

__all__ = [
    "INITIAL_DATA",
    "DissipationTime",
    "SweepRow",
    "SweepReport",
    "SnapshotReport",
    "LargeCRow",
    "LargeCReport",
    "dissipation_time",
    "fit_exponent",
    "predicted_rate",
    "run_sweep",
    "snapshot_experiment",
    "sin_x_sin2y",
    "gradient_energy_psi",
    "large_c_compare",
    "write_sweep_csv",
    "write_large_c_csv",
]


def _cos2y(y):
    return np.cos(2 * y)


def _cosy(y):
    return np.cos(y)


def _eiy(y):
    return np.exp(1j * y)


def _mixed(y):
    return np.cos(2 * y) + 0.3 * np.sin(y) + 0.2j * np.cos(3 * y)


# named data so that sweep jobs stay picklable and configs can refer to them
INITIAL_DATA = {"cos2y": _cos2y, "cosy": _cosy, "eiy": _eiy, "mixed": _mixed}


def _datum(name: str) -> Callable:
    try:
        return INITIAL_DATA[name]
    except KeyError:
        raise ValueError(f"unknown initial datum {name!r}; choose from {sorted(INITIAL_DATA)}")


@dataclass(frozen=True)
class DissipationTime:
    value: Optional[float]
    found: bool
    last_ratio: float


def dissipation_time(traj: Trajectory, eps: float) -> DissipationTime:
    """First time ||theta(t)|| / ||theta0|| = eps.

    Linear interpolation in (t, log norm) between the bracketing samples.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    norms = traj.norms
    if norms[0] == 0:
        raise ValueError("initial state is zero")
    ratio = norms / norms[0]
    below = np.nonzero(ratio < eps)[0]
    if below.size == 0:
        return DissipationTime(None, False, float(ratio[-1]))
    j = int(below[0])
    t0, t1 = traj.times[j - 1], traj.times[j]
    l0, l1 = math.log(ratio[j - 1]), math.log(ratio[j])
    t = t0 + (math.log(eps) - l0) / (l1 - l0) * (t1 - t0)
    return DissipationTime(float(t), True, float(ratio[-1]))


def fit_exponent(points):
    """OLS fit of ln t against ln nu; returns (slope, intercept, r2)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise ValueError("need at least three (nu, t) points")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise ValueError("points must be positive and finite")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    return float(slope), float(intercept), r2


def predicted_rate(nu: float, alpha: float, k: int, ell: Optional[float]) -> float:
    """Order-one estimate of the decay rate, used only to size t_end."""
    ak = alpha * abs(k)
    p = 0.5 if ell is None else exponents(ell)[0]
    return ak ** (1 - p) * nu**p + nu * k**2


@dataclass(frozen=True)
class SweepRow:
    ell: Optional[float]
    nu: float
    c: float
    t_eps: float
    fitted_slope: float
    predicted_slope: float
    rel_err: float
    n: int = 256
    tail: float = 0.0


@dataclass(frozen=True)
class SweepReport:
    """``ell=None`` marks the stationary control (c = 0)."""

    rows: tuple
    slopes: dict
    settings: dict = field(default_factory=dict)

    def monotone(self) -> bool:
        """t_eps non-increasing in nu at every ell."""
        for ell in self.slopes:
            rows = sorted((r for r in self.rows if r.ell == ell), key=lambda r: r.nu)
            t = [r.t_eps for r in rows]
            if any(b > a for a, b in zip(t, t[1:])):
                return False
        return True


def _sweep_cell(task):
    ell, nu, c, alpha, k, eps, n, dt, datum, max_n = task
    t_end = 4.0 * math.log(1.0 / eps) / predicted_rate(nu, alpha, k, ell)
    params = FlowParams(alpha=alpha, nu=nu, k=k, c=c)
    extensions = 0
    while True:
        grid = Grid(n)
        config = SolverConfig(dt=dt, t_end=t_end, snapshot_stride=None, stop_ratio=eps)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ResolutionWarning)
            traj = solve(grid.field(_datum(datum)), params, config)
        tail = float(np.max(traj.tail))
        if tail > TAIL_TOLERANCE and n < max_n:
            n *= 2
            continue
        result = dissipation_time(traj, eps)
        if result.found:
            return result.value, n, tail
        if extensions == 2:
            raise RuntimeError(f"no eps-crossing for ell={ell}, nu={nu} by t={t_end:g}; "
                               f"last ratio {result.last_ratio:.3g}")
        extensions += 1
        t_end *= 2.0


def run_sweep(ell_grid: Sequence[Optional[float]], nu_grid: Sequence[float], c0: float = 1.0,
              alpha: float = 1.0, k: int = 1, eps: float = 0.1, n: int = 256, dt: float = 0.01,
              datum: str = "cos2y", workers: int = 1, max_n: int = 1024) -> SweepReport:
    """Dissipation times over (ell, nu) and per-ell fitted exponents.

    An entry ``None`` in ``ell_grid`` runs the stationary control c = 0,
    whose predicted slope is -1/2.  Grids are refined by doubling n (up to
    ``max_n``) whenever the spectral tail exceeds the resolution tolerance.
    """
    nu_grid = sorted(float(v) for v in nu_grid)
    if len(nu_grid) < 5 or nu_grid[0] <= 0:
        raise ValueError("nu_grid needs at least five positive values")
    for ell in ell_grid:
        if ell is not None and not 1.0 / 3.0 < ell < 0.75:
            raise ValueError(f"ell={ell} outside (1/3, 3/4)")
    _datum(datum)
    tasks = []
    for ell in ell_grid:
        for nu in nu_grid:
            c = 0.0 if ell is None else c0 * nu**ell
            tasks.append((ell, nu, c, alpha, k, eps, n, dt, datum, max_n))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, tasks))
    else:
        results = [_sweep_cell(t) for t in tasks]
    rows, slopes = [], {}
    for ell in ell_grid:
        cells = [(t, r) for t, r in zip(tasks, results) if t[0] == ell]
        slope, _, r2 = fit_exponent([(t[1], r[0]) for t, r in cells])
        predicted = -0.5 if ell is None else -exponents(ell)[0]
        rel = abs(slope - predicted) / abs(predicted)
        slopes[ell] = (slope, predicted, rel)
        for t, r in cells:
            rows.append(SweepRow(ell, t[1], t[2], r[0], slope, predicted, rel, r[1], r[2]))
    settings = dict(eps=eps, c0=c0, alpha=alpha, k=k, nu_grid=tuple(nu_grid), n=n, dt=dt,
                    datum=datum)
    return SweepReport(tuple(rows), slopes, settings)


def write_sweep_csv(report: SweepReport, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ell", "nu", "c", "t_eps", "fitted_slope", "predicted_slope", "rel_err"])
        for r in report.rows:
            w.writerow(["" if r.ell is None else repr(r.ell), repr(r.nu), repr(r.c),
                        repr(r.t_eps), repr(r.fitted_slope), repr(r.predicted_slope),
                        repr(r.rel_err)])
    return path


@dataclass(frozen=True)
class SnapshotReport:
    times: tuple
    fields: tuple
    l2_norms: tuple
    h1_norms: tuple
    periodicity_error: float
    files: tuple = ()

    @property
    def periodic(self) -> bool:
        return self.periodicity_error <= 1e-10


def snapshot_experiment(c: float = 0.1, k: int = 1, theta0: Optional[SpectralField] = None,
                        alpha: float = 1.0, out_dir=None) -> SnapshotReport:
    """Inviscid fields at t = 0, pi/2c, pi/c, 2pi/c with optional binary dumps."""
    if not c > 0:
        raise ValueError("snapshots need c > 0")
    theta0 = Grid(256).field(_cos2y) if theta0 is None else theta0
    params = FlowParams(alpha=alpha, nu=0.0, k=k, c=c)
    times = (0.0, math.pi / (2 * c), math.pi / c, 2 * math.pi / c)
    fields = tuple(exact_inviscid(theta0, params, t) for t in times)
    base = sobolev_norm(theta0, 0)
    err = sobolev_norm(fields[-1] - theta0, 0) / base if base > 0 else 0.0
    files = []
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["index t file l2_norm h1_norm"]
        for i, (t, f) in enumerate(zip(times, fields)):
            name = f"snapshot_{i}.bin"
            files.append(write_field_dump(f, out / name))
            lines.append(f"{i} {t!r} {name} {sobolev_norm(f, 0)!r} {sobolev_norm(f, 1)!r}")
        (out / "snapshots_index.txt").write_text("\n".join(lines) + "\n")
    return SnapshotReport(times, fields, tuple(sobolev_norm(f, 0) for f in fields),
                          tuple(sobolev_norm(f, 1) for f in fields), float(err), tuple(files))


def sin_x_sin2y(grid: Grid) -> dict:
    """x-modes of sin x sin 2y: k = +-1 with amplitude -+ i/2."""
    s = grid.field(lambda y: np.sin(2 * y))
    return {1: s * (-0.5j), -1: s * 0.5j}


def _mode_sums(grid: Grid, coeffs_by_k: dict):
    """(||.||^2, ||d_x .||^2, ||lap .||^2, Psi) summed over x-modes; rows are times."""
    m2 = grid.modes**2
    l2 = dx = lap = psi = 0.0
    for k, c in coeffs_by_k.items():
        p = 2.0 * np.pi * np.abs(np.atleast_2d(c)) ** 2
        k2 = float(k) ** 2
        l2 = l2 + p.sum(axis=-1)
        dx = dx + k2 * p.sum(axis=-1)
        lap = lap + (p * (k2 + m2) ** 2).sum(axis=-1)
        psi = psi + (p * (k2 + k2**2 + k2 * m2 + m2**2)).sum(axis=-1)
    return l2, dx, lap, psi


def gradient_energy_psi(modes: dict) -> float:
    """||d_x T||^2 + ||d_xx T||^2 + ||d_xy T||^2 + ||d_yy T||^2 from x-mode data.

    Norms are sums over x-modes of the per-mode L^2(dy) norms.
    """
    grid = next(iter(modes.values())).grid
    return float(_mode_sums(grid, {k: f.coeffs for k, f in modes.items()})[3][0])


@dataclass(frozen=True)
class LargeCRow:
    c: float
    sup_dev: float
    bound_rhs: float
    sup_dev_l2: float
    psi_ok: bool


@dataclass(frozen=True)
class LargeCReport:
    """Squared deviation sup_t ||Theta - Theta_H||^2 per c and its log-log slope.

    ``slope_l2`` is the slope of the unsquared distance, reported alongside.
    """

    rows: tuple
    slope: float
    slope_l2: float
    settings: dict = field(default_factory=dict)

    @property
    def psi_ok(self) -> bool:
        return all(r.psi_ok for r in self.rows)

    def monotone(self) -> bool:
        devs = [r.sup_dev for r in sorted(self.rows, key=lambda r: r.c)]
        return all(b <= a for a, b in zip(devs, devs[1:]))


def large_c_compare(c_grid: Sequence[float], nu: float = 0.01, Tstar: float = 2.0,
                    theta0_modes: Optional[dict] = None, alpha: float = 1.0, n: int = 128,
                    dt: float = 1e-3, C: float = 1.0) -> LargeCReport:
    """Compare the sheared evolution with pure diffusion for fast translation.

    Each x-mode is integrated twice along the same time grid, once with
    transport and once with alpha = 0; the latter is the heat solution,
    so the deviation vanishes identically when alpha = 0.  ``bound_rhs`` is
    C (1 + nu)/c (||lap Theta0||^2 + ||d_x Theta0||^2) e^{C T*}.
    """
    if not 0 < nu <= 1:
        raise ValueError("nu must lie in (0, 1]")
    if any(c <= 2.5 for c in c_grid):
        raise ValueError("large-c comparison needs every c > 5/2")
    modes = sin_x_sin2y(Grid(n)) if theta0_modes is None else theta0_modes
    if any(k == 0 for k in modes):
        raise ValueError("Theta0 must be x-mean-free (no k = 0 mode)")
    grid = next(iter(modes.values())).grid
    _, dx0, lap0, psi0 = _mode_sums(grid, {k: f.coeffs for k, f in modes.items()})
    rows = []
    for c in c_grid:
        full, heat = {}, {}
        times = None
        for k, f in sorted(modes.items()):
            params = FlowParams(alpha=alpha, nu=nu, k=k, c=c)
            config = SolverConfig(dt=dt, t_end=Tstar)
            traj = solve(f, params, config)
            ref = solve(f, params.replace(alpha=0.0), config)
            full[k], heat[k] = traj.coeffs, ref.coeffs
            times = traj.times
        dev = _mode_sums(grid, {k: full[k] - heat[k] for k in full})[0]
        psi = _mode_sums(grid, full)[3]
        psi_ok = bool(np.all(psi <= np.exp(4.0 * times) * psi0[0] * (1 + 1e-6)))
        sup = float(np.max(dev))
        bound = C * (1.0 + nu) / c * float(lap0[0] + dx0[0]) * math.exp(C * Tstar)
        rows.append(LargeCRow(float(c), sup, bound, math.sqrt(sup), psi_ok))
    cs = np.array([r.c for r in rows])
    devs = np.array([r.sup_dev for r in rows])
    if len(rows) >= 2 and np.all(devs > 0):
        slope = float(np.polyfit(np.log(cs), np.log(devs), 1)[0])
        slope_l2 = float(np.polyfit(np.log(cs), np.log(np.sqrt(devs)), 1)[0])
    else:
        slope = slope_l2 = math.nan
    settings = dict(nu=nu, Tstar=Tstar, alpha=alpha, n=grid.n, dt=dt, modes=tuple(sorted(modes)))
    return LargeCReport(tuple(rows), slope, slope_l2, settings)


def write_large_c_csv(report: LargeCReport, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["c", "sup_dev", "bound_rhs", "slope"])
        for r in report.rows:
            w.writerow([repr(r.c), repr(r.sup_dev), repr(r.bound_rhs), repr(report.slope)])
    return path

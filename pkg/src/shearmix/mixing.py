"""Time-averaged H^{-1} mixing of the inviscid problem and its critical sets."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import FlowParams, Grid, SpectralField, sobolev_norm
from .solver import Trajectory, phase

T0 = 1.0


def _one(y):
    return np.ones_like(y)


def _cos2y(y):
    return np.cos(2 * y)


def _mixed(y):
    return np.cos(y) + 0.5 * np.sin(3 * y) + 0.3


# data used for calibrating and validating the constant in the bound
MIXING_DATA = {"one": _one, "cosy": np.cos, "cos2y": _cos2y, "mixed": _mixed}

__all__ = [
    "MIXING_DATA",
    "MixingReport",
    "CriticalSets",
    "check_horizon",
    "time_average_field",
    "mixing_functional",
    "inviscid_time_averages",
    "theoretical_bound",
    "delta_objective",
    "optimal_delta",
    "critical_sets",
    "phase_gradient_bound_check",
    "mixing_grid",
    "mixing_store_step",
    "mixing_scan",
    "calibrate_constant",
    "log_log_slope",
    "write_mixing_csv",
    "write_critical_sets_csv",
]


@dataclass(frozen=True)
class MixingReport:
    T: float
    functional_value: float
    bound_value: float
    c: float
    k: int
    alpha: float
    h1_initial: float
    t0: float = T0

    @property
    def ratio(self) -> float:
        return self.functional_value / self.bound_value if self.bound_value > 0 else math.inf


@dataclass(frozen=True)
class CriticalSets:
    """Grid-quadrature measures of the sets D, E, C in the strip T x [t0, T].

    ``analytic_C`` is the closed-form measure of C in one periodic cell of the
    (u, v) = (ct/2 - y, y - ct) variables; ``predicted_C`` scales the cell
    density up to the strip area.
    """

    delta: float
    epsilon: float
    c: float
    t0: float
    T: float
    meas_D: float
    meas_E: float
    meas_C: float
    analytic_C: float
    predicted_C: float

    @property
    def strip_area(self) -> float:
        return 2.0 * np.pi * (self.T - self.t0)


def check_horizon(T: float, c: float) -> None:
    upper = math.pi / c if c > 0 else math.inf
    if not (T0 < T <= upper * (1 + 1e-12)):
        raise ValueError(f"T={T} outside the mixing window (1, pi/c] for c={c}")


def time_average_field(traj: Trajectory, T: float) -> SpectralField:
    """(1/T) int_1^T theta dt by the trapezoidal rule over the stored samples.

    Endpoints that fall between samples are linearly interpolated.
    """
    if traj.frame != "lab":
        raise ValueError("time averages are taken in the lab frame")
    if traj.params.nu != 0:
        raise ValueError("the mixing functional is defined for the inviscid problem (nu = 0)")
    check_horizon(T, traj.params.speed)
    t = traj.times
    if t[-1] < T - 1e-12:
        raise ValueError(f"trajectory ends at {t[-1]} before T={T}")

    def at(s):
        j = int(np.clip(np.searchsorted(t, s) - 1, 0, t.size - 2))
        w = (s - t[j]) / (t[j + 1] - t[j])
        return (1 - w) * traj.coeffs[j] + w * traj.coeffs[j + 1]

    inner = (t > T0) & (t < T)
    nodes = np.concatenate(([T0], t[inner], [T]))
    samples = np.vstack([at(T0), traj.coeffs[inner], at(T)])
    integral = np.trapezoid(samples, nodes, axis=0)
    return SpectralField.from_coeffs(traj.grid, integral / T)


def mixing_functional(traj: Trajectory, T: float) -> float:
    return sobolev_norm(time_average_field(traj, T), -1)


def mixing_store_step(c: float) -> float:
    return min(0.05, c / 20.0) if c > 0 else 0.05


def inviscid_time_averages(theta0: SpectralField, params: FlowParams,
                           T_values: Sequence[float], dt: Optional[float] = None) -> dict:
    """Time-averaged fields for several horizons in one streaming pass.

    Exploits that theta0 factors out of the closed-form inviscid solution, so
    only the phase factor exp(-i alpha k psi) is integrated in time.
    Returns ``{T: SpectralField}``.
    """
    if params.nu != 0:
        raise ValueError("inviscid_time_averages requires nu = 0")
    c = params.speed
    for T in T_values:
        check_horizon(T, c)
    dt = mixing_store_step(c) if dt is None else dt
    y = theta0.grid.nodes
    ak = params.alpha * params.k

    def factor(s):
        return np.exp(-1j * ak * phase(y, s, c))

    targets = sorted(set(float(T) for T in T_values))
    out = {}
    acc = np.zeros_like(y, dtype=complex)
    t, f_prev, j = T0, factor(T0), 0
    for T in targets:
        while t < T - 1e-13:
            grid_point = T0 + (j + 1) * dt
            if grid_point <= T + 1e-13:
                t_next, j = grid_point, j + 1
            else:
                t_next = T
            f_next = factor(t_next)
            acc += 0.5 * (t_next - t) * (f_prev + f_next)
            t, f_prev = t_next, f_next
        out[T] = SpectralField.from_values(theta0.grid, theta0.values * acc / T)
    return out


def theoretical_bound(T: float, c: float, alpha: float, k: int, h1_initial: float,
                      C: float = 1.0) -> float:
    """C (1/T) ((ln T)^2 / (c (alpha k)^2))^{1/3} ||theta0||_{H^1}."""
    if T <= 1:
        raise ValueError("bound defined for T > 1")
    if not 0 < c <= 1:
        raise ValueError("bound requires 0 < c <= 1")
    if k == 0:
        raise ValueError("k must be nonzero")
    return C / T * (math.log(T) ** 2 / (c * (alpha * k) ** 2)) ** (1.0 / 3.0) * h1_initial


def delta_objective(delta, T, c, k):
    """ln T/(|k| T delta) + delta^2/(c T), minimised over delta."""
    return math.log(T) / (abs(k) * T * delta) + delta**2 / (c * T)


def optimal_delta(T: float, c: float, k: int) -> float:
    if T <= 1:
        raise ValueError("optimal_delta requires T > 1")
    return (c * math.log(T) / (2.0 * abs(k))) ** (1.0 / 3.0)


def critical_sets(delta: float, epsilon: float, c: float, t0: float, T: float,
                  quad_n: int = 2048) -> CriticalSets:
    if not (0 < delta < 1 and 0 < epsilon < 1):
        raise ValueError("delta and epsilon must lie in (0, 1)")
    if not t0 < T:
        raise ValueError("need t0 < T")
    if c > 0 and T > math.pi / c * (1 + 1e-12):
        raise ValueError(f"T={T} exceeds pi/c")
    y = (np.arange(quad_n) + 0.5) * 2.0 * np.pi / quad_n
    t = t0 + (np.arange(quad_n) + 0.5) * (T - t0) / quad_n
    cell = (2.0 * np.pi / quad_n) * ((T - t0) / quad_n)
    count_D = count_E = 0
    # row blocks keep memory bounded at large quad_n
    for rows in np.array_split(np.arange(quad_n), max(1, quad_n // 256)):
        tt = t[rows][:, None]
        grad_ok = np.abs(np.cos(c * tt / 2.0 - y[None, :])) >= delta
        time_ok = np.abs(np.sin(y[None, :] - c * tt)) >= epsilon
        count_D += int(grad_ok.sum())
        count_E += int((~grad_ok & time_ok).sum())
    total = quad_n * quad_n
    count_C = total - count_D - count_E
    u_len = math.acos(-delta) - math.acos(delta)
    v_len = 2.0 * math.asin(epsilon)
    analytic = 2.0 / c * u_len * v_len
    density = u_len * v_len / math.pi**2
    return CriticalSets(delta, epsilon, c, t0, T,
                        meas_D=count_D * cell, meas_E=count_E * cell, meas_C=count_C * cell,
                        analytic_C=analytic,
                        predicted_C=density * 2.0 * math.pi * (T - t0))


def phase_gradient_bound_check(delta: float, c: float, samples: int,
                               rng: Optional[np.random.Generator] = None) -> float:
    """Largest (2/pi) t delta / |d_y psi| over random points of D with t <= pi/c."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    rng = np.random.default_rng(0) if rng is None else rng
    t = rng.uniform(0.0, math.pi / c, samples)
    t = np.where(t == 0.0, math.pi / c, t)
    y = rng.uniform(0.0, 2.0 * math.pi, samples)
    cosine = np.cos(c * t / 2.0 - y)
    keep = np.abs(cosine) >= delta
    grad = 2.0 / c * np.sin(c * t[keep] / 2.0) * cosine[keep]
    if not keep.any():
        return 0.0
    return float(np.max(2.0 / math.pi * t[keep] * delta / np.abs(grad)))


def mixing_grid(c: float, alpha: float = 1.0, k: int = 1, minimum: int = 256) -> Grid:
    """Grid resolving exp(-i alpha k psi) on t <= pi/c, where |d_y psi| <= 2/c."""
    bandwidth = 2.0 * abs(alpha * k) / c + 16.0 if c > 0 else 64.0
    n = minimum
    while n < 4 * bandwidth:
        n *= 2
    return Grid(n)


def log_log_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def mixing_scan(c_values: Iterable[float], T_counts: int, initial_data: dict,
                alpha: float = 1.0, k: int = 1, T_min: float = 2.0,
                offset: float = 0.0, C: float = 1.0) -> list:
    """MixingReports on log-spaced horizons in [T_min, pi/c] for every datum.

    ``offset`` in [0, 1) shifts the log grid by a fraction of its spacing,
    which produces horizons disjoint from the unshifted grid.
    """
    reports = []
    for c in c_values:
        grid = mixing_grid(c, alpha, k)
        T_max = math.pi / c
        u = (np.arange(T_counts) + offset) / max(T_counts - 1, 1)
        Ts = [float(T) for T in np.exp(np.log(T_min) + u * (np.log(T_max) - np.log(T_min)))
              if T <= T_max]
        params = FlowParams(alpha=alpha, nu=0.0, k=k, c=c)
        for name in sorted(initial_data):
            theta0 = grid.field(initial_data[name])
            h1 = sobolev_norm(theta0, 1)
            averages = inviscid_time_averages(theta0, params, Ts)
            for T in Ts:
                value = sobolev_norm(averages[T], -1)
                bound = theoretical_bound(T, c, alpha, k, h1, C)
                reports.append(MixingReport(T, value, bound, c, k, alpha, h1))
    return reports


def calibrate_constant(reports: Sequence[MixingReport]) -> float:
    """Smallest C making every report satisfy functional <= C * bound(C=1)."""
    return max(r.ratio for r in reports)


def write_mixing_csv(reports: Sequence[MixingReport], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["c", "T", "functional", "bound", "ratio"])
        for r in reports:
            w.writerow([repr(r.c), repr(r.T), repr(r.functional_value),
                        repr(r.bound_value), repr(r.ratio)])
    return path


def write_critical_sets_csv(sets: Sequence[CriticalSets], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delta", "epsilon", "meas_D", "meas_E", "meas_C", "analytic_C"])
        for s in sets:
            w.writerow([repr(s.delta), repr(s.epsilon), repr(s.meas_D), repr(s.meas_E),
                        repr(s.meas_C), repr(s.analytic_C)])
    return path

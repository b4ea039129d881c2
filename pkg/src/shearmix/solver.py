"""Time integration of one horizontal Fourier mode.

Lab frame (time t)::

    d/dt Theta + i alpha k sin(y - c t) Theta + nu k^2 Theta - nu Theta_yy = 0

Moving frame (scaled time tau = alpha |k| t, theta = e^{nu k^2 t} Theta(y + c t))::

    d/dtau theta - varsigma theta_y + i sgn(k) sin(y) theta = mu theta_yy

Both are advanced by Strang splitting whose substeps are solved exactly:
diffusion is diagonal in Fourier space and the advective part is a pointwise
phase factor (integrated along characteristics in the moving frame).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import FlowParams, Grid, ScaledParams, SpectralField, tail_mass

__all__ = [
    "ResolutionWarning",
    "SolverConfig",
    "Trajectory",
    "phase",
    "phase_increment",
    "exact_inviscid",
    "strang_step",
    "solve",
    "heat_solution",
    "to_moving_frame",
    "from_moving_frame",
    "default_dt",
    "write_trajectory_csv",
    "write_field_dump",
    "read_field_dump",
    "TAIL_TOLERANCE",
    "MAX_SNAPSHOTS",
]

TAIL_TOLERANCE = 1e-10
MAX_SNAPSHOTS = 4000


class ResolutionWarning(UserWarning):
    """Raised when spectral tail mass indicates under-resolution."""


def _sinc_half(c, t):
    """2 sin(c t / 2) / c, continuous through c = 0 (equals t there)."""
    return t * np.sinc(c * t / (2.0 * np.pi))


def phase(y, t, c):
    """psi(y, t) = int_0^t sin(y - c s) ds = (cos(y - c t) - cos y) / c.

    Evaluated as 2 sin(ct/2)/c * sin(y - ct/2), which has no cancellation
    and reduces to t sin(y) at c = 0.
    """
    return _sinc_half(c, t) * np.sin(np.asarray(y) - c * t / 2.0)


def phase_increment(y, t, dt, c):
    """psi(y, t + dt) - psi(y, t) without forming the difference."""
    return _sinc_half(c, dt) * np.sin(np.asarray(y) - c * (t + dt / 2.0))


@dataclass(frozen=True)
class SolverConfig:
    """Integration settings; times are in the units of the chosen frame.

    ``snapshot_stride=None`` picks a stride that keeps at most
    ``MAX_SNAPSHOTS`` samples.  ``stop_ratio`` ends the run at the first
    snapshot whose L2 norm falls below ``stop_ratio`` times the initial one.
    """

    dt: float
    t_end: float
    snapshot_stride: Optional[int] = 1
    frame: str = "lab"
    stop_ratio: Optional[float] = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_end < 0:
            raise ValueError(f"t_end must be nonnegative, got {self.t_end}")
        if self.snapshot_stride is not None and self.snapshot_stride < 1:
            raise ValueError(f"snapshot_stride must be >= 1, got {self.snapshot_stride}")
        if self.frame not in ("lab", "moving"):
            raise ValueError(f"frame must be 'lab' or 'moving', got {self.frame!r}")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.t_end / self.dt - 1e-9)) if self.t_end > 0 else 0

    def stride(self) -> int:
        if self.snapshot_stride is not None:
            return self.snapshot_stride
        return max(1, math.ceil(self.n_steps / MAX_SNAPSHOTS))


def default_dt(params: FlowParams, frame: str = "lab") -> float:
    dt = min(0.01, 0.1 / params.shear_rate) if params.shear_rate > 0 else 0.01
    return dt * params.shear_rate if frame == "moving" else dt


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled evolution of one mode.

    ``coeffs[i]`` holds the Fourier coefficients at ``times[i]``.  In the
    moving frame the times are scaled times tau.
    """

    grid: Grid
    times: np.ndarray
    coeffs: np.ndarray
    params: FlowParams
    frame: str = "lab"
    dt: Optional[float] = None
    warnings: tuple = ()
    norms: np.ndarray = field(init=False, repr=False)
    h1_norms: np.ndarray = field(init=False, repr=False)
    tail: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        coeffs = np.array(self.coeffs, dtype=complex)
        if coeffs.ndim != 2 or coeffs.shape != (times.size, self.grid.n):
            raise ValueError("coeffs must have shape (len(times), n)")
        if times.size == 0 or times[0] != 0.0:
            raise ValueError("trajectory must start at time 0")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        power = np.abs(coeffs) ** 2
        m2 = self.grid.modes**2
        norms = np.sqrt(2.0 * np.pi * power.sum(axis=1))
        h1 = np.sqrt(2.0 * np.pi * (power * (1.0 + m2)).sum(axis=1))
        for name, arr in (("times", times), ("coeffs", coeffs), ("norms", norms),
                          ("h1_norms", h1), ("tail", tail_mass(coeffs))):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def scaled(self) -> ScaledParams:
        return self.params.scaled()

    def __len__(self):
        return self.times.size

    def state(self, i: int) -> SpectralField:
        return SpectralField.from_coeffs(self.grid, self.coeffs[i])

    @property
    def states(self) -> list:
        return [self.state(i) for i in range(len(self))]

    @property
    def final(self) -> SpectralField:
        return self.state(len(self) - 1)

    def uniform_prefix(self) -> int:
        """Number of leading samples on a uniform time grid."""
        if len(self) < 3:
            return len(self)
        h = self.times[1] - self.times[0]
        gaps = np.diff(self.times)
        bad = np.nonzero(np.abs(gaps - h) > 1e-9 * max(h, 1.0))[0]
        return len(self) if bad.size == 0 else int(bad[0]) + 1


class _Stepper:
    """Precomputed Strang step acting on coefficient arrays."""

    def __init__(self, grid: Grid, params: FlowParams, dt: float, frame: str):
        self.grid = grid
        self.params = params
        self.dt = dt
        self.frame = frame
        m = grid.modes
        y = grid.nodes
        n = grid.n
        self._n = n
        if frame == "lab":
            self._half = np.exp(-params.nu * (m**2 + params.k**2) * dt / 2.0)
            self._ak = params.alpha * params.k
            self._c = params.speed
            self._y = y
        else:
            sp = params.scaled()
            sign = 1.0 if params.k > 0 else -1.0
            self._half = np.exp(-sp.mu * m**2 * dt / 2.0)
            self._shift = np.exp(1j * m * sp.varsigma * dt)
            kick = _sinc_half(sp.varsigma, dt) * np.sin(y + sp.varsigma * dt / 2.0)
            self._kick = np.exp(-1j * sign * kick)

    def __call__(self, coeffs: np.ndarray, t: float) -> np.ndarray:
        n = self._n
        g = coeffs * self._half
        if self.frame == "lab":
            if self._ak != 0.0:
                u = np.fft.ifft(g) * n
                u *= np.exp(-1j * self._ak * phase_increment(self._y, t, self.dt, self._c))
                g = np.fft.fft(u) / n
        else:
            u = np.fft.ifft(g * self._shift) * n
            u *= self._kick
            g = np.fft.fft(u) / n
        return g * self._half


def strang_step(state: SpectralField, t: float, dt: float, params: FlowParams,
                frame: str = "lab") -> SpectralField:
    """One Strang step from time ``t`` to ``t + dt`` (scaled time in the moving frame)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    step = _Stepper(state.grid, params, dt, frame)
    return SpectralField.from_coeffs(state.grid, step(state.coeffs, t))


def solve(theta0: SpectralField, params: FlowParams, config: SolverConfig) -> Trajectory:
    """Integrate from ``theta0`` and sample every ``stride`` steps.

    The final state is always stored, even when it falls between strides.
    Tail mass above ``TAIL_TOLERANCE`` is reported as a ``ResolutionWarning``
    and recorded in ``Trajectory.warnings``.
    """
    grid = theta0.grid
    step = _Stepper(grid, params, config.dt, config.frame)
    n_steps = config.n_steps
    stride = config.stride()
    g = np.array(theta0.coeffs)
    times = [0.0]
    samples = [g]
    norm0 = math.sqrt(float(np.sum(np.abs(g) ** 2)))
    t = 0.0
    for j in range(1, n_steps + 1):
        g = step(g, t)
        t = j * config.dt
        if j % stride == 0 or j == n_steps:
            times.append(t)
            samples.append(g)
            if config.stop_ratio is not None and norm0 > 0:
                if math.sqrt(float(np.sum(np.abs(g) ** 2))) < config.stop_ratio * norm0:
                    break
    coeffs = np.array(samples)
    notes = []
    worst = float(np.max(tail_mass(coeffs)))
    if worst > TAIL_TOLERANCE:
        msg = f"tail mass {worst:.3e} exceeds {TAIL_TOLERANCE:g} on n={grid.n}"
        warnings.warn(msg, ResolutionWarning, stacklevel=2)
        notes.append(msg)
    return Trajectory(grid, np.array(times), coeffs, params, config.frame,
                      dt=config.dt, warnings=tuple(notes))


def exact_inviscid(theta0: SpectralField, params: FlowParams, t: float) -> SpectralField:
    """Closed-form inviscid solution theta0(y) exp(-i alpha k psi(y, t))."""
    if params.nu != 0:
        raise ValueError("exact_inviscid requires nu = 0")
    if t == 0:
        return theta0
    factor = np.exp(-1j * params.alpha * params.k * phase(theta0.grid.nodes, t, params.speed))
    return SpectralField.from_values(theta0.grid, theta0.values * factor)


def heat_solution(theta0: SpectralField, k: int, nu: float, t: float) -> SpectralField:
    m = theta0.grid.modes
    return SpectralField.from_coeffs(theta0.grid, theta0.coeffs * np.exp(-nu * (m**2 + k**2) * t))


def _frame_factor(grid: Grid, params: FlowParams, t: np.ndarray) -> np.ndarray:
    m = grid.modes
    t = np.asarray(t)[:, None]
    return np.exp(params.nu * params.k**2 * t + 1j * m[None, :] * params.speed * t)


def to_moving_frame(traj: Trajectory) -> Trajectory:
    """theta(y, tau) = e^{nu k^2 t} Theta(y + c t, t) with tau = alpha |k| t."""
    if traj.frame != "lab":
        raise ValueError("trajectory is already in the moving frame")
    p = traj.params
    coeffs = traj.coeffs * _frame_factor(traj.grid, p, traj.times)
    dt = None if traj.dt is None else traj.dt * p.shear_rate
    return Trajectory(traj.grid, traj.times * p.shear_rate, coeffs, p, "moving",
                      dt=dt, warnings=traj.warnings)


def from_moving_frame(traj: Trajectory) -> Trajectory:
    if traj.frame != "moving":
        raise ValueError("trajectory is not in the moving frame")
    p = traj.params
    t = traj.times / p.shear_rate
    coeffs = traj.coeffs / _frame_factor(traj.grid, p, t)
    dt = None if traj.dt is None else traj.dt / p.shear_rate
    return Trajectory(traj.grid, t, coeffs, p, "lab", dt=dt, warnings=traj.warnings)


def write_trajectory_csv(traj: Trajectory, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "l2_norm", "h1_norm", "tail_mass"])
        for row in zip(traj.times, traj.norms, traj.h1_norms, traj.tail):
            w.writerow([repr(float(x)) for x in row])
    return path


def write_field_dump(state: SpectralField, path) -> Path:
    """Grid values as int64 n followed by n (re, im) float64 pairs, little-endian."""
    path = Path(path)
    pairs = np.empty((state.grid.n, 2), dtype="<f8")
    pairs[:, 0] = state.values.real
    pairs[:, 1] = state.values.imag
    with path.open("wb") as fh:
        fh.write(np.array([state.grid.n], dtype="<i8").tobytes())
        fh.write(pairs.tobytes())
    return path


def read_field_dump(path) -> SpectralField:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ValueError("truncated field dump")
    n = int(np.frombuffer(raw[:8], dtype="<i8")[0])
    if len(raw) != 8 + 16 * n:
        raise ValueError(f"field dump of size {len(raw)} does not match n={n}")
    pairs = np.frombuffer(raw[8:], dtype="<f8").reshape(n, 2)
    return SpectralField.from_values(Grid(n), pairs[:, 0] + 1j * pairs[:, 1])

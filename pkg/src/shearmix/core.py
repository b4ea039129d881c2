"""Parameters, periodic grids and spectral fields.

Every field in this package is a complex function of ``y`` on the periodic
interval [0, 2*pi), sampled at ``n`` equispaced nodes.  The horizontal
wavenumber ``k`` is never discretised; it enters only as a parameter.

Fourier coefficients follow the convention

    g_hat[m] = (1/n) * sum_j g(y_j) exp(-i m y_j)

and are stored in numpy FFT order, so ``grid.modes`` equals
``np.fft.fftfreq(n, 1/n)``.  Sobolev norms are

    ||g||_{H^s}^2 = 2*pi * sum_m (1 + m^2)^s |g_hat[m]|^2

which makes the s = 0 case coincide exactly with the trapezoidal quadrature
(2*pi/n) * sum_j |g(y_j)|^2 on trigonometric polynomials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

__all__ = [
    "FlowParams",
    "ScaledParams",
    "Grid",
    "SpectralField",
    "forward_transform",
    "sobolev_norm",
    "dual_h_minus1_oracle",
    "random_field",
    "tail_mass",
]


@dataclass(frozen=True)
class FlowParams:
    """Physical parameters of one per-mode simulation.

    The translation speed is either given explicitly as ``c`` or as the
    power law ``c = c0 * nu**ell``.
    """

    alpha: float = 1.0
    nu: float = 0.0
    k: int = 1
    c: Optional[float] = None
    c0: Optional[float] = None
    ell: Optional[float] = None

    def __post_init__(self):
        if int(self.k) != self.k or self.k == 0:
            raise ValueError(f"k must be a nonzero integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))
        if self.alpha < 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        if self.nu < 0:
            raise ValueError(f"nu must be nonnegative, got {self.nu}")
        power_law = self.c0 is not None or self.ell is not None
        if power_law:
            if self.c is not None:
                raise ValueError("give either c or (c0, ell), not both")
            if self.c0 is None or self.ell is None:
                raise ValueError("power-law speed needs both c0 and ell")
            if self.c0 <= 0:
                raise ValueError(f"c0 must be positive, got {self.c0}")
            if not 0.0 < self.ell < 1.0:
                raise ValueError(f"ell must lie in (0, 1), got {self.ell}")
        else:
            if self.c is None:
                object.__setattr__(self, "c", 0.0)
            if self.c < 0:
                raise ValueError(f"c must be nonnegative, got {self.c}")

    @property
    def power_law(self) -> bool:
        return self.c0 is not None

    @property
    def speed(self) -> float:
        """The resolved translation speed."""
        if self.power_law:
            return self.c0 * self.nu**self.ell
        return float(self.c)

    @property
    def shear_rate(self) -> float:
        """alpha*|k|, the factor relating lab time to scaled time."""
        return self.alpha * abs(self.k)

    def scaled(self) -> "ScaledParams":
        rate = self.shear_rate
        if rate <= 0:
            raise ValueError("scaled parameters need alpha*|k| > 0")
        varsigma_k = None
        if self.power_law:
            varsigma_k = self.c0 * rate ** (self.ell - 1.0)
        return ScaledParams(
            mu=self.nu / rate,
            varsigma=self.speed / rate,
            varsigma_k=varsigma_k,
            ell=self.ell,
        )

    def replace(self, **changes) -> "FlowParams":
        data = dict(alpha=self.alpha, nu=self.nu, k=self.k, c=self.c, c0=self.c0, ell=self.ell)
        data.update(changes)
        if "c" in changes and changes["c"] is not None:
            data["c0"] = data["ell"] = None
        if ("c0" in changes or "ell" in changes) and data["c0"] is not None:
            data["c"] = None
        return FlowParams(**data)


@dataclass(frozen=True)
class ScaledParams:
    """Moving-frame parameters mu = nu/(alpha|k|), varsigma = c/(alpha|k|)."""

    mu: float
    varsigma: float
    varsigma_k: Optional[float] = None
    ell: Optional[float] = None

    def __post_init__(self):
        if self.mu < 0 or self.varsigma < 0:
            raise ValueError("mu and varsigma must be nonnegative")


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [0, 2*pi) with ``n`` nodes (power of two)."""

    n: int = 256

    def __post_init__(self):
        n = self.n
        if n < 16 or n & (n - 1):
            raise ValueError(f"n must be a power of two >= 16, got {n}")

    @cached_property
    def nodes(self) -> np.ndarray:
        y = 2.0 * np.pi * np.arange(self.n) / self.n
        y.flags.writeable = False
        return y

    @cached_property
    def modes(self) -> np.ndarray:
        m = np.fft.fftfreq(self.n, 1.0 / self.n)
        m.flags.writeable = False
        return m

    @property
    def weight(self) -> float:
        return 2.0 * np.pi / self.n

    def field(self, func: Callable[[np.ndarray], np.ndarray]) -> "SpectralField":
        """Sample ``func`` at the nodes."""
        values = np.asarray(func(self.nodes), dtype=complex)
        if values.shape == ():
            values = np.full(self.n, complex(values))
        return SpectralField.from_values(self, values)

    def zeros(self) -> "SpectralField":
        return SpectralField.from_coeffs(self, np.zeros(self.n, dtype=complex))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Complex scalar on a periodic grid holding both representations."""

    grid: Grid
    values: np.ndarray = field(repr=False)
    coeffs: np.ndarray = field(repr=False)

    @classmethod
    def from_values(cls, grid: Grid, values) -> "SpectralField":
        values = _frozen(values)
        if values.shape != (grid.n,):
            raise ValueError(f"expected {grid.n} samples, got shape {values.shape}")
        return cls(grid, values, _frozen(np.fft.fft(values) / grid.n))

    @classmethod
    def from_coeffs(cls, grid: Grid, coeffs) -> "SpectralField":
        coeffs = _frozen(coeffs)
        if coeffs.shape != (grid.n,):
            raise ValueError(f"expected {grid.n} coefficients, got shape {coeffs.shape}")
        return cls(grid, _frozen(np.fft.ifft(coeffs) * grid.n), coeffs)

    def derivative(self, order: int = 1) -> "SpectralField":
        return SpectralField.from_coeffs(self.grid, (1j * self.grid.modes) ** order * self.coeffs)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField.from_coeffs(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField.from_coeffs(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar) -> "SpectralField":
        return SpectralField.from_coeffs(self.grid, complex(scalar) * self.coeffs)

    __rmul__ = __mul__

    def conj(self) -> "SpectralField":
        return SpectralField.from_values(self.grid, np.conj(self.values))


def forward_transform(field: SpectralField) -> SpectralField:
    """Recompute the Fourier representation from the physical samples."""
    return SpectralField.from_values(field.grid, field.values)


def sobolev_norm(field: SpectralField, s: float) -> float:
    weights = (1.0 + field.grid.modes**2) ** s
    return math.sqrt(2.0 * np.pi * float(np.sum(weights * np.abs(field.coeffs) ** 2)))


def tail_mass(coeffs: np.ndarray, fraction: float = 0.1) -> float:
    """Share of the squared coefficient mass carried by the top ``fraction`` of |m|."""
    coeffs = np.asarray(coeffs)
    n = coeffs.shape[-1]
    m = np.abs(np.fft.fftfreq(n, 1.0 / n))
    tail = m >= (0.5 - fraction / 2.0) * n
    power = np.abs(coeffs) ** 2
    total = power.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        share = power[..., tail].sum(axis=-1) / total
    return np.where(total > 0, share, 0.0)


def dual_h_minus1_oracle(
    field: SpectralField,
    trials: int,
    rng: Optional[np.random.Generator] = None,
    include: Optional[list] = None,
    degree: Optional[int] = None,
) -> float:
    """Lower bound for the H^{-1} norm from explicit test functions.

    Realises sup |int g conj(eta) dy| over ||eta||_{H^1} = 1 by a (1+1)
    evolution strategy: each trial is a random trig polynomial of degree
    ``degree`` obtained by perturbing the best test function so far, and is
    kept if it improves the pairing.  The pairing is evaluated by quadrature
    in physical space.  Test functions in ``include`` are scored as well.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    grid = field.grid
    n = grid.n
    m = grid.modes
    if degree is None:
        active = np.abs(field.coeffs) > 0
        degree = int(np.max(np.abs(m[active]))) if active.any() else 0
    band = np.abs(m) <= degree
    h1_weight = 1.0 + m**2

    def score(c):
        h1 = math.sqrt(2.0 * np.pi * float(np.sum(h1_weight * np.abs(c) ** 2)))
        if h1 == 0.0:
            return 0.0
        eta_values = np.fft.ifft(c / h1) * n
        return abs(grid.weight * np.sum(field.values * np.conj(eta_values)))

    def draw():
        c = np.zeros(n, dtype=complex)
        size = int(band.sum())
        c[band] = (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / h1_weight[band]
        h1 = math.sqrt(2.0 * np.pi * float(np.sum(h1_weight * np.abs(c) ** 2)))
        return c / h1

    best = 0.0
    for eta in include or ():
        best = max(best, score(np.array(eta.coeffs)))
    current = draw()
    current_score = score(current)
    step = 1.0
    for _ in range(trials - 1):
        trial = current + step * draw()
        s = score(trial)
        if s > current_score:
            h1 = math.sqrt(2.0 * np.pi * float(np.sum(h1_weight * np.abs(trial) ** 2)))
            current, current_score = trial / h1, s
            step *= 1.5
        else:
            step *= 0.9
    return max(best, current_score)


def random_field(
    grid: Grid,
    rng: np.random.Generator,
    bandwidth: Optional[int] = None,
    decay: float = 1.0,
) -> SpectralField:
    """Random complex trig polynomial with coefficients ~ (1+|m|)^-decay."""
    n = grid.n
    bandwidth = n // 4 if bandwidth is None else bandwidth
    m = grid.modes
    band = np.abs(m) <= bandwidth
    c = np.zeros(n, dtype=complex)
    c[band] = (rng.standard_normal(band.sum()) + 1j * rng.standard_normal(band.sum())) / (
        1.0 + np.abs(m[band])
    ) ** decay
    return SpectralField.from_coeffs(grid, c)

"""Classical RK4 method-of-lines integrator used as a dense reference.

Shares nothing with the splitting path except the FFT: the full right-hand
side is evaluated pseudospectrally at every stage.
"""

import numpy as np

from .core import FlowParams, SpectralField


def _rhs_lab(params: FlowParams, y, m, n):
    ak = params.alpha * params.k
    nu, c, k2 = params.nu, params.speed, params.k**2

    def rhs(t, g):
        u = np.fft.ifft(g) * n
        adv = np.fft.fft(np.sin(y - c * t) * u) / n
        return -1j * ak * adv - nu * (m**2 + k2) * g

    return rhs


def _rhs_moving(params: FlowParams, y, m, n):
    sp = params.scaled()
    sign = 1.0 if params.k > 0 else -1.0
    mu, vs = sp.mu, sp.varsigma
    sin_y = np.sin(y)

    def rhs(t, g):
        u = np.fft.ifft(g) * n
        adv = np.fft.fft(sin_y * u) / n
        return vs * 1j * m * g - 1j * sign * adv - mu * m**2 * g

    return rhs


def rk4_solve(theta0: SpectralField, params: FlowParams, t_end: float, dt: float,
              frame: str = "lab") -> SpectralField:
    grid = theta0.grid
    make = _rhs_lab if frame == "lab" else _rhs_moving
    rhs = make(params, grid.nodes, grid.modes, grid.n)
    steps = int(round(t_end / dt))
    if abs(steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError("t_end must be an integer multiple of dt")
    g = np.array(theta0.coeffs)
    t = 0.0
    for j in range(steps):
        k1 = rhs(t, g)
        k2 = rhs(t + dt / 2, g + dt / 2 * k1)
        k3 = rhs(t + dt / 2, g + dt / 2 * k2)
        k4 = rhs(t + dt, g + dt * k3)
        g = g + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = (j + 1) * dt
    return SpectralField.from_coeffs(grid, g)

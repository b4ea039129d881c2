import math

import numpy as np
import pytest

from shearmix.core import (
    FlowParams,
    Grid,
    SpectralField,
    dual_h_minus1_oracle,
    random_field,
    sobolev_norm,
    tail_mass,
)


def test_flow_params_validation():
    with pytest.raises(ValueError):
        FlowParams(k=0)
    with pytest.raises(ValueError):
        FlowParams(k=1.5)
    with pytest.raises(ValueError):
        FlowParams(c=0.1, c0=1.0, ell=0.5)
    with pytest.raises(ValueError):
        FlowParams(c0=1.0)
    with pytest.raises(ValueError):
        FlowParams(c0=1.0, ell=1.2)
    with pytest.raises(ValueError):
        FlowParams(nu=-1.0)


def test_power_law_speed_and_scaling():
    p = FlowParams(alpha=2.0, nu=1e-4, k=-3, c0=0.5, ell=0.5)
    assert p.speed == pytest.approx(0.5 * 1e-2)
    assert p.shear_rate == 6.0
    sp = p.scaled()
    assert sp.mu == pytest.approx(1e-4 / 6)
    assert sp.varsigma == pytest.approx(0.5e-2 / 6)
    # varsigma = varsigma_k * mu**ell
    assert sp.varsigma == pytest.approx(sp.varsigma_k * sp.mu**0.5, rel=1e-12)


def test_replace_switches_speed_mode():
    p = FlowParams(nu=1e-3, c0=1.0, ell=0.5)
    q = p.replace(c=0.2)
    assert q.c == 0.2 and not q.power_law
    assert p.replace(alpha=0.0).speed == p.speed


def test_grid_rejects_bad_sizes():
    for n in (8, 100, 0):
        with pytest.raises(ValueError):
            Grid(n)
    g = Grid(32)
    assert np.array_equal(g.modes, np.fft.fftfreq(32, 1 / 32))
    with pytest.raises(ValueError):
        g.nodes[0] = 1.0


def test_round_trip_and_derivative():
    g = Grid(64)
    f = g.field(np.sin)
    back = SpectralField.from_coeffs(g, f.coeffs)
    assert np.max(np.abs(back.values - f.values)) < 1e-14
    assert np.max(np.abs(f.derivative().values - np.cos(g.nodes))) < 1e-13
    assert np.max(np.abs(f.derivative(2).values + np.sin(g.nodes))) < 1e-12
    assert f.coeffs[1] == pytest.approx(-0.5j)


def test_field_arithmetic():
    g = Grid(32)
    a, b = g.field(np.cos), g.field(np.sin)
    s = 2 * a + b - a
    assert np.allclose(s.values, np.cos(g.nodes) + np.sin(g.nodes))
    e = g.field(lambda y: np.exp(1j * y))
    assert np.allclose(e.conj().values, np.exp(-1j * g.nodes))


def test_sobolev_norms_of_cos2y():
    f = Grid(64).field(lambda y: np.cos(2 * y))
    assert sobolev_norm(f, 0) ** 2 == pytest.approx(math.pi, rel=1e-14)
    assert sobolev_norm(f, 1) ** 2 == pytest.approx(5 * math.pi, rel=1e-14)
    assert sobolev_norm(f, -1) ** 2 == pytest.approx(math.pi / 5, rel=1e-14)


def test_parseval_against_quadrature():
    g = Grid(128)
    rng = np.random.default_rng(3)
    for _ in range(5):
        f = random_field(g, rng, bandwidth=30)
        quad = g.weight * np.sum(np.abs(f.values) ** 2)
        assert sobolev_norm(f, 0) ** 2 == pytest.approx(quad, rel=1e-13)


def test_tail_mass():
    g = Grid(64)
    low = np.zeros(64, complex)
    low[3] = 1
    high = np.zeros(64, complex)
    high[31] = 1
    assert tail_mass(low) == 0.0
    assert tail_mass(high) == 1.0
    both = tail_mass(np.vstack([low, high, np.zeros(64)]))
    assert list(both) == [0.0, 1.0, 0.0]
    assert g.n == 64


def test_dual_oracle_is_lower_bound_and_close():
    g = Grid(64)
    rng = np.random.default_rng(7)
    for _ in range(5):
        f = random_field(g, rng, bandwidth=4)
        spectral = sobolev_norm(f, -1)
        dual = dual_h_minus1_oracle(f, 200, rng)
        assert dual <= spectral + 1e-12
        assert dual >= 0.95 * spectral


def test_dual_oracle_attains_norm_at_representer():
    g = Grid(64)
    f = random_field(g, np.random.default_rng(1), bandwidth=6)
    # eta = (1 - d_yy)^{-1} f maximises the pairing
    eta = SpectralField.from_coeffs(g, f.coeffs / (1 + g.modes**2))
    dual = dual_h_minus1_oracle(f, 1, include=[eta])
    assert dual == pytest.approx(sobolev_norm(f, -1), abs=1e-12)


def test_random_field_bandwidth():
    g = Grid(64)
    f = random_field(g, np.random.default_rng(0), bandwidth=5)
    assert np.all(f.coeffs[np.abs(g.modes) > 5] == 0)
    assert np.any(f.coeffs[np.abs(g.modes) == 5] != 0)

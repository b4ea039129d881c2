import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from shearmix.core import FlowParams, Grid, SpectralField, dual_h_minus1_oracle, sobolev_norm
from shearmix.mixing import (
    MIXING_DATA,
    calibrate_constant,
    critical_sets,
    delta_objective,
    inviscid_time_averages,
    log_log_slope,
    mixing_functional,
    mixing_grid,
    mixing_scan,
    optimal_delta,
    phase_gradient_bound_check,
    theoretical_bound,
    time_average_field,
    write_critical_sets_csv,
    write_mixing_csv,
)
from shearmix.solver import SolverConfig, solve

# midpoint count of |cos u| < 0.1, |sin v| < 0.1 on the (u, v) cell [0, pi)^2
# with 1e7 points per axis, times the Jacobian 2/c at c = 0.1
UV_CELL_MEASURE = 0.802681966352555
# golden-section minimiser of ln T/(T d) + d^2/(c T) at c = 0.1, T = 10
GOLDEN_DELTA = 0.48647653155082415
# M(pi/c) for cos 2y at c = 0.1, trapezoid with store step 0.0025
M_COS2Y_C01 = 0.17715568532504453


@pytest.fixture(scope="module")
def cos2y_run():
    g = Grid(256)
    theta0 = g.field(lambda y: np.cos(2 * y))
    p = FlowParams(nu=0.0, c=0.1)
    return theta0, p


def test_no_shear_gives_plain_average():
    g = Grid(64)
    theta0 = g.field(lambda y: np.cos(3 * y) + 0.2)
    traj = solve(theta0, FlowParams(alpha=0.0, c=0.2), SolverConfig(dt=0.07, t_end=9.0))
    for T in (1.5, 4.0, 8.93):
        expected = (T - 1) / T * sobolev_norm(theta0, -1)
        assert mixing_functional(traj, T) == pytest.approx(expected, rel=1e-13)
        avg = time_average_field(traj, T)
        assert np.allclose(avg.coeffs, (T - 1) / T * theta0.coeffs, atol=1e-15)


def test_zero_datum():
    g = Grid(32)
    traj = solve(g.zeros(), FlowParams(c=0.1), SolverConfig(dt=0.1, t_end=3.0))
    assert mixing_functional(traj, 3.0) == 0.0


def test_window_and_frame_errors():
    g = Grid(32)
    f = g.field(np.cos)
    traj = solve(f, FlowParams(c=1.0), SolverConfig(dt=0.1, t_end=4.0))
    for T in (1.0, 0.5, 3.3):
        with pytest.raises(ValueError):
            time_average_field(traj, T)
    short = solve(f, FlowParams(c=0.1), SolverConfig(dt=0.1, t_end=2.0))
    with pytest.raises(ValueError):
        time_average_field(short, 3.0)
    viscous = solve(f, FlowParams(nu=1e-3, c=0.1), SolverConfig(dt=0.1, t_end=3.0))
    with pytest.raises(ValueError):
        time_average_field(viscous, 2.0)


def test_store_step_refinement(cos2y_run):
    theta0, p = cos2y_run
    T = math.pi / 0.1
    coarse = mixing_functional(solve(theta0, p, SolverConfig(dt=0.005, t_end=T)), T)
    fine = mixing_functional(solve(theta0, p, SolverConfig(dt=0.0025, t_end=T)), T)
    assert abs(coarse - fine) / fine <= 1e-6
    assert fine == pytest.approx(M_COS2Y_C01, rel=1e-9)


def test_streaming_matches_trajectory(cos2y_run):
    theta0, p = cos2y_run
    T = 7.3
    traj = solve(theta0, p, SolverConfig(dt=0.005, t_end=7.5))
    stream = inviscid_time_averages(theta0, p, [T, 3.0], dt=0.005)
    assert np.max(np.abs(stream[T].coeffs - time_average_field(traj, T).coeffs)) < 1e-6
    assert set(stream) == {3.0, T}
    with pytest.raises(ValueError):
        inviscid_time_averages(theta0, p.replace(nu=1e-3), [2.0])


def test_dual_characterisation(cos2y_run):
    theta0, p = cos2y_run
    avg = inviscid_time_averages(theta0, p, [10.0])[10.0]
    value = sobolev_norm(avg, -1)
    dual = dual_h_minus1_oracle(avg, 300, np.random.default_rng(5), degree=12)
    assert dual <= value + 1e-12
    eta = SpectralField.from_coeffs(avg.grid, avg.coeffs / (1 + avg.grid.modes**2))
    exact = dual_h_minus1_oracle(avg, 1, include=[eta])
    assert value - 1e-12 <= exact <= value + 1e-12


def test_theoretical_bound():
    b1 = theoretical_bound(20.0, 0.1, 1.0, 1, 2.0)
    expected = 2.0 / 20.0 * (math.log(20.0) ** 2 / 0.1) ** (1 / 3)
    assert b1 == pytest.approx(expected, rel=1e-14)
    assert theoretical_bound(20.0, 0.1, 1.0, 2, 2.0) == pytest.approx(b1 * 2 ** (-2 / 3))
    assert theoretical_bound(20.0, 0.1, 1.0, -1, 2.0, C=3.0) == pytest.approx(3 * b1)
    for bad in (dict(T=1.0, c=0.1, k=1), dict(T=5.0, c=1.5, k=1), dict(T=5.0, c=0.1, k=0)):
        with pytest.raises(ValueError):
            theoretical_bound(bad["T"], bad["c"], 1.0, bad["k"], 1.0)


def test_optimal_delta_values():
    c = 2.0 / math.log(10.0)
    assert optimal_delta(10.0, c, 1) == pytest.approx(1.0, rel=1e-14)
    d = optimal_delta(10.0, 0.1, 1)
    assert d == pytest.approx(GOLDEN_DELTA, rel=1e-7)
    res = minimize_scalar(delta_objective, bracket=(0.1, 1.0), args=(10.0, 0.1, 1),
                          method="golden", tol=1e-12)
    assert d == pytest.approx(res.x, rel=1e-6)
    with pytest.raises(ValueError):
        optimal_delta(1.0, 0.1, 1)


def test_optimal_delta_minimises():
    rng = np.random.default_rng(11)
    for T, c, k in ((10.0, 0.1, 1), (30.0, 0.05, 2), (3.0, 0.5, -1)):
        d = optimal_delta(T, c, k)
        best = delta_objective(d, T, c, k)
        for x in rng.uniform(1e-3, 5.0, 50):
            assert best <= delta_objective(x, T, c, k)


def test_critical_set_measures():
    s = critical_sets(0.1, 0.1, 0.1, 1.0, math.pi / 0.1)
    assert s.analytic_C == pytest.approx(20 * (2 * math.asin(0.1)) ** 2, rel=1e-14)
    assert s.analytic_C == pytest.approx(0.80268, abs=5e-6)
    assert s.analytic_C == pytest.approx(UV_CELL_MEASURE, rel=1e-5)
    total = s.meas_D + s.meas_E + s.meas_C
    assert abs(total - s.strip_area) <= s.strip_area / 2048
    assert min(s.meas_D, s.meas_E, s.meas_C) >= 0
    # strip quadrature against the density prediction
    assert s.meas_C == pytest.approx(s.predicted_C, rel=0.1)


def test_critical_sets_saturate():
    s = critical_sets(0.999999, 0.999999, 0.2, 1.0, 10.0, quad_n=512)
    assert s.meas_D < 1e-2 * s.strip_area
    assert s.meas_C + s.meas_E == pytest.approx(s.strip_area, rel=1e-2)
    for bad in ((0.0, 0.1), (0.1, 1.0)):
        with pytest.raises(ValueError):
            critical_sets(*bad, 0.1, 1.0, 5.0)
    with pytest.raises(ValueError):
        critical_sets(0.1, 0.1, 0.1, 5.0, 2.0)
    with pytest.raises(ValueError):
        critical_sets(0.1, 0.1, 1.0, 1.0, 4.0)


def test_phase_gradient_bound():
    worst = phase_gradient_bound_check(0.2, 0.1, 100000, np.random.default_rng(0))
    assert 0.9 < worst <= 1.0
    with pytest.raises(ValueError):
        phase_gradient_bound_check(1.0, 0.1, 10)


def test_phase_gradient_extremes():
    c, delta = 0.1, 0.3
    t = math.pi / c
    grad = 2 / c * math.sin(c * t / 2) * delta
    assert (2 / math.pi) * t * delta / grad == pytest.approx(1.0, rel=1e-14)
    for t in (0.5, 5.0, 20.0, math.pi / c):
        assert 2 / c * math.sin(c * t / 2) >= 2 / math.pi * t - 1e-12


def test_mixing_grid_resolves_phase():
    assert mixing_grid(0.02).n == 512
    assert mixing_grid(0.5).n == 256
    assert mixing_grid(0.01, alpha=2.0).n == 2048


def test_calibration_generalises():
    data = {k: MIXING_DATA[k] for k in ("cos2y", "one")}
    cal = mixing_scan([0.1, 0.5], 4, data)
    C = calibrate_constant(cal)
    assert all(r.functional_value <= C * r.bound_value * (1 + 1e-12) for r in cal)
    val = mixing_scan([0.2], 4, data, offset=0.5, C=C)
    assert {r.T for r in val}.isdisjoint({r.T for r in cal})
    assert all(r.ratio <= 1.0 for r in val)
    assert all(1 < r.T <= math.pi / r.c for r in val)


def test_slope_decays_faster_than_stationary():
    g = mixing_grid(0.05)
    theta0 = g.field(lambda y: np.cos(2 * y))
    Ts = list(np.exp(np.linspace(math.log(4.0), math.log(math.pi / 0.05), 10)))
    avgs = inviscid_time_averages(theta0, FlowParams(c=0.05), Ts)
    assert log_log_slope(Ts, [sobolev_norm(avgs[T], -1) for T in Ts]) <= -0.75


def test_csv_writers(tmp_path):
    rows = mixing_scan([0.5], 3, {"one": MIXING_DATA["one"]})
    text = write_mixing_csv(rows, tmp_path / "m.csv").read_text().splitlines()
    assert text[0] == "c,T,functional,bound,ratio" and len(text) == 4
    s = critical_sets(0.1, 0.1, 0.5, 1.0, 5.0, quad_n=64)
    text = write_critical_sets_csv([s], tmp_path / "s.csv").read_text().splitlines()
    assert text[0] == "delta,epsilon,meas_D,meas_E,meas_C,analytic_C"

import math

import numpy as np
import pytest

from shearmix.core import FlowParams, Grid, sobolev_norm
from shearmix.reference import rk4_solve
from shearmix.solver import (
    ResolutionWarning,
    SolverConfig,
    Trajectory,
    default_dt,
    exact_inviscid,
    from_moving_frame,
    heat_solution,
    phase,
    phase_increment,
    read_field_dump,
    solve,
    strang_step,
    to_moving_frame,
    write_field_dump,
    write_trajectory_csv,
)


@pytest.fixture
def theta0():
    return Grid(128).field(lambda y: np.cos(2 * y) + 0.3 * np.sin(y))


def test_phase_closed_form():
    y = np.linspace(0, 2 * np.pi, 17)
    c, t = 0.3, 2.7
    assert np.allclose(phase(y, t, c), (np.cos(y - c * t) - np.cos(y)) / c, atol=1e-14)
    assert np.allclose(phase(y, t, 0.0), t * np.sin(y), atol=1e-15)
    inc = phase_increment(y, t, 0.4, c)
    assert np.allclose(inc, phase(y, t + 0.4, c) - phase(y, t, c), atol=1e-14)


def test_phase_small_c_continuity():
    y = np.linspace(0, 2 * np.pi, 9)
    assert np.allclose(phase(y, 3.0, 1e-12), 3.0 * np.sin(y - 1.5e-12), atol=1e-12)


def test_exact_inviscid_preconditions(theta0):
    with pytest.raises(ValueError):
        exact_inviscid(theta0, FlowParams(nu=1e-3), 1.0)
    assert exact_inviscid(theta0, FlowParams(c=0.1), 0.0) is theta0


def test_inviscid_splitting_is_exact(theta0):
    p = FlowParams(nu=0.0, c=0.25)
    traj = solve(theta0, p, SolverConfig(dt=0.05, t_end=4.0))
    exact = exact_inviscid(theta0, p, 4.0)
    assert sobolev_norm(traj.final - exact, 0) < 1e-12
    assert np.max(np.abs(traj.norms / traj.norms[0] - 1)) < 1e-13


def test_no_shear_is_heat_flow(theta0):
    p = FlowParams(alpha=0.0, nu=0.02, k=2, c=0.3)
    traj = solve(theta0, p, SolverConfig(dt=0.1, t_end=3.0))
    heat = heat_solution(theta0, 2, 0.02, 3.0)
    assert np.max(np.abs(traj.final.coeffs - heat.coeffs)) < 1e-14


@pytest.mark.parametrize("k", [1, -2])
def test_frames_agree(theta0, k):
    p = FlowParams(alpha=1.3, nu=2e-3, k=k, c=0.4)
    rate = p.shear_rate
    lab = solve(theta0, p, SolverConfig(dt=0.05, t_end=2.0))
    moving = solve(theta0, p, SolverConfig(dt=0.05 * rate, t_end=2.0 * rate, frame="moving"))
    mapped = to_moving_frame(lab)
    assert np.allclose(mapped.times, moving.times, rtol=1e-12)
    assert np.max(np.abs(mapped.coeffs - moving.coeffs)) < 1e-12
    back = from_moving_frame(mapped)
    assert np.max(np.abs(back.coeffs - lab.coeffs)) < 1e-13
    with pytest.raises(ValueError):
        to_moving_frame(mapped)
    with pytest.raises(ValueError):
        from_moving_frame(lab)


@pytest.mark.parametrize("frame", ["lab", "moving"])
def test_second_order_against_rk4(theta0, frame):
    p = FlowParams(nu=1e-3, c=0.3)
    ref = rk4_solve(theta0, p, 4.0, 0.0125, frame).coeffs
    errs = [np.max(np.abs(solve(theta0, p, SolverConfig(dt=dt, t_end=4.0, frame=frame))
                          .final.coeffs - ref))
            for dt in (0.2, 0.1, 0.05)]
    for a, b in zip(errs, errs[1:]):
        assert 3.4 <= a / b <= 4.6


def test_rk4_reference_converged(theta0):
    p = FlowParams(nu=1e-3, c=0.3)
    a = rk4_solve(theta0, p, 2.0, 0.0125).coeffs
    b = rk4_solve(theta0, p, 2.0, 0.00625).coeffs
    assert np.max(np.abs(a - b)) < 1e-9
    with pytest.raises(ValueError):
        rk4_solve(theta0, p, 1.0, 0.3)


def test_strang_step_matches_solve(theta0):
    p = FlowParams(nu=1e-3, c=0.2)
    one = strang_step(theta0, 0.0, 0.1, p)
    two = strang_step(one, 0.1, 0.1, p)
    traj = solve(theta0, p, SolverConfig(dt=0.1, t_end=0.2))
    assert np.max(np.abs(two.coeffs - traj.final.coeffs)) < 1e-15
    with pytest.raises(ValueError):
        strang_step(theta0, 0.0, 0.0, p)


def test_solver_config_validation():
    for bad in (dict(dt=0, t_end=1), dict(dt=0.1, t_end=-1), dict(dt=0.1, t_end=1, frame="x"),
                dict(dt=0.1, t_end=1, snapshot_stride=0)):
        with pytest.raises(ValueError):
            SolverConfig(**bad)
    assert SolverConfig(dt=0.1, t_end=1.0).n_steps == 10
    assert SolverConfig(dt=0.3, t_end=1.0).n_steps == 4
    assert SolverConfig(dt=1e-3, t_end=100.0, snapshot_stride=None).stride() == 25


def test_final_state_always_stored(theta0):
    traj = solve(theta0, FlowParams(nu=1e-3), SolverConfig(dt=0.1, t_end=1.05, snapshot_stride=4))
    assert traj.times[-1] == pytest.approx(1.1)
    assert list(np.round(traj.times, 10)) == [0.0, 0.4, 0.8, 1.1]


def test_stop_ratio(theta0):
    traj = solve(theta0, FlowParams(nu=0.05), SolverConfig(dt=0.1, t_end=100, stop_ratio=0.5))
    assert traj.norms[-1] < 0.5 * traj.norms[0] <= traj.norms[-2]


def test_resolution_warning():
    g = Grid(16)
    with pytest.warns(ResolutionWarning):
        traj = solve(g.field(lambda y: np.cos(y) + 0.5 * np.sin(2 * y + 0.3)), FlowParams(nu=0.0),
                     SolverConfig(dt=0.1, t_end=20))
    assert traj.warnings


def test_trajectory_validation(theta0):
    g = theta0.grid
    with pytest.raises(ValueError):
        Trajectory(g, np.array([0.0, 0.0]), np.zeros((2, g.n)), FlowParams())
    with pytest.raises(ValueError):
        Trajectory(g, np.array([1.0]), np.zeros((1, g.n)), FlowParams())
    with pytest.raises(ValueError):
        Trajectory(g, np.array([0.0]), np.zeros((2, g.n)), FlowParams())
    traj = solve(theta0, FlowParams(nu=1e-3), SolverConfig(dt=0.1, t_end=0.5))
    with pytest.raises(ValueError):
        traj.coeffs[0, 0] = 1.0
    assert traj.uniform_prefix() == len(traj) == 6


def test_default_dt():
    p = FlowParams(alpha=20.0)
    assert default_dt(p) == pytest.approx(0.005)
    assert default_dt(p, "moving") == pytest.approx(0.1)


def test_exports(tmp_path, theta0):
    traj = solve(theta0, FlowParams(nu=1e-3), SolverConfig(dt=0.1, t_end=0.3))
    path = write_trajectory_csv(traj, tmp_path / "t.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "t,l2_norm,h1_norm,tail_mass"
    assert len(lines) == len(traj) + 1
    dump = write_field_dump(traj.final, tmp_path / "f.bin")
    raw = dump.read_bytes()
    assert len(raw) == 8 + 16 * 128
    assert int(np.frombuffer(raw[:8], "<i8")[0]) == 128
    back = read_field_dump(dump)
    assert np.array_equal(back.values, traj.final.values)
    (tmp_path / "bad.bin").write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        read_field_dump(tmp_path / "bad.bin")


def test_heat_mode_decay():
    g = Grid(32)
    f = g.field(lambda y: np.exp(3j * y))
    h = heat_solution(f, 1, 0.1, 2.0)
    assert sobolev_norm(h, 0) == pytest.approx(sobolev_norm(f, 0) * math.exp(-0.1 * 10 * 2.0))

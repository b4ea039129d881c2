"""Quick invariant suite over core, solver, mixing and hypo."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import hypo, mixing
from .core import FlowParams, Grid, dual_h_minus1_oracle, random_field, sobolev_norm
from .reference import rk4_solve
from .solver import (
    SolverConfig,
    exact_inviscid,
    from_moving_frame,
    solve,
    to_moving_frame,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    limit: float


def _check(name, value, limit, ok=None):
    ok = value <= limit if ok is None else ok
    return CheckResult(name, bool(ok), float(value), float(limit))


def core_checks(rng):
    grid = Grid(64)
    f = random_field(grid, rng, bandwidth=12)
    quad = math.sqrt(grid.weight * float(np.sum(np.abs(f.values) ** 2)))
    out = [_check("core.parseval", abs(quad - sobolev_norm(f, 0)) / quad, 1e-13)]
    g = random_field(grid, rng, bandwidth=4)
    spectral = sobolev_norm(g, -1)
    dual = dual_h_minus1_oracle(g, 200, rng)
    out.append(_check("core.dual_below_spectral", dual - spectral, 1e-12))
    out.append(_check("core.dual_close", 1 - dual / spectral, 0.05))
    return out


def solver_checks(rng):
    grid = Grid(128)
    theta0 = grid.field(lambda y: np.cos(2 * y) + 0.3 * np.sin(y))
    inviscid = FlowParams(nu=0.0, c=0.3)
    traj = solve(theta0, inviscid, SolverConfig(dt=0.05, t_end=5.0))
    drift = float(np.max(np.abs(traj.norms / traj.norms[0] - 1)))
    exact = exact_inviscid(theta0, inviscid, 5.0)
    err = sobolev_norm(traj.final - exact, 0) / sobolev_norm(exact, 0)
    out = [_check("solver.inviscid_norm", drift, 1e-12),
           _check("solver.inviscid_exact", err, 1e-11)]
    params = FlowParams(nu=1e-3, c=0.2)
    lab = solve(theta0, params, SolverConfig(dt=0.1, t_end=2.0))
    moving = solve(theta0, params, SolverConfig(dt=0.1, t_end=2.0, frame="moving"))
    gap = np.max(np.abs(to_moving_frame(lab).coeffs - moving.coeffs))
    back = np.max(np.abs(from_moving_frame(to_moving_frame(lab)).coeffs - lab.coeffs))
    out.append(_check("solver.frames_agree", gap, 1e-12))
    out.append(_check("solver.frame_round_trip", back, 1e-13))
    ref = rk4_solve(theta0, params, 2.0, 0.0125).coeffs
    errs = [np.max(np.abs(solve(theta0, params, SolverConfig(dt=dt, t_end=2.0)).final.coeffs - ref))
            for dt in (0.2, 0.1)]
    ratio = errs[0] / errs[1]
    out.append(_check("solver.second_order", ratio, 4.6, 3.4 <= ratio <= 4.6))
    return out


def mixing_checks(rng):
    grid = Grid(128)
    theta0 = grid.field(lambda y: np.cos(2 * y) + 0.5)
    T = 6.0
    still = solve(theta0, FlowParams(alpha=0.0, nu=0.0, c=0.1), SolverConfig(dt=0.05, t_end=T))
    expected = (T - 1) / T * sobolev_norm(theta0, -1)
    out = [_check("mixing.no_shear",
                  abs(mixing.mixing_functional(still, T) - expected) / expected, 1e-12)]
    sets = mixing.critical_sets(0.1, 0.1, 0.1, 1.0, 10.0, quad_n=512)
    total = sets.meas_D + sets.meas_E + sets.meas_C
    out.append(_check("mixing.partition", abs(total - sets.strip_area),
                      sets.strip_area / 512))
    out.append(_check("mixing.phase_gradient",
                      mixing.phase_gradient_bound_check(0.2, 0.1, 20000, rng), 1.0))
    d = mixing.optimal_delta(10.0, 0.1, 1)
    best = mixing.delta_objective(d, 10.0, 0.1, 1)
    worst_gap = min(mixing.delta_objective(x, 10.0, 0.1, 1) - best
                    for x in rng.uniform(0.01, 3.0, 50))
    out.append(_check("mixing.optimal_delta", -worst_gap, 1e-15))
    return out


def hypo_checks(rng):
    grid = Grid(128)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        co = hypo.make_coefficients(1e-2, 0.5, 1e-3, 1.0)
    out = [_check("hypo.beta_identity", abs(co.beta0**2 / co.alpha0 - co.gamma0 / 16), 1e-15),
           _check("hypo.beta1_identity",
                  abs(co.beta1**2 - co.gamma0 * co.gamma1 / 16) / co.beta1**2, 1e-14)]
    worst, bad = 0.0, 0
    for _ in range(50):
        led = hypo.energy_ledger(random_field(grid, rng, bandwidth=20), co)
        worst = max(worst, abs(led.E4 + led.E7 - led.E0) / led.E0)
        lo, hi, _ = hypo.coercivity_check(led, co)
        bad += (not lo) + (not hi)
    out.append(_check("hypo.e4_plus_e7", worst, 1e-12))
    out.append(_check("hypo.coercivity_violations", bad, 0))
    params = FlowParams(nu=1e-3, c0=1.0, ell=0.5)
    theta0 = grid.field(lambda y: np.cos(2 * y) + 0.3 * np.sin(y))
    traj = solve(theta0, params, SolverConfig(dt=0.01, t_end=5.0, frame="moving"))
    out.append(_check("hypo.identity_residuals", hypo.identity_residuals(traj, co).worst(), 1e-3))
    rows = hypo.constraint_audit(0.5)
    out.append(_check("hypo.audit_half", sum(not r.passed for r in rows), 0))
    return out


def run_checks(seed: int = 42) -> list:
    rng = np.random.default_rng(seed)
    results = []
    for suite in (core_checks, solver_checks, mixing_checks, hypo_checks):
        results.extend(suite(rng))
    return results

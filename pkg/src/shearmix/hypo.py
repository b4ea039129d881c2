"""Hypocoercive energy bookkeeping in the moving frame.

With v(y) = sin y and <f, g> = int f conj(g) dy the energies are

    E0 = ||theta||^2          E1 = ||theta_y||^2        E2 = ||theta_yy||^2
    E3 = Re<i v' theta, theta_y>                        E4 = ||v' theta||^2
    E6 = Re<v theta, v' theta>                          E7 = ||v theta||^2

(there is no E5) and the functional is

    Phi = (E0 + a0 E1 + 2 b0 E3 + g0 E4 - 2 b1 E6 + g1 E7) / 2.

All energies are computed for k > 0.  For k < 0 the moving-frame equation
is the complex conjugate of the k > 0 one, so ledgers are taken of
conj(theta) instead.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import FlowParams, Grid, SpectralField, random_field
from .solver import Trajectory

__all__ = [
    "HypoCoefficients",
    "EnergyLedger",
    "ResidualReport",
    "PhiReport",
    "AuditRow",
    "BETA0_DEFAULT",
    "IDENTITY_NAMES",
    "make_coefficients",
    "exponents",
    "energy_ledger",
    "ledger_series",
    "coercivity_check",
    "identity_residuals",
    "refinement_ratios",
    "phi_series",
    "decay_envelope",
    "constraint_audit",
    "spectral_gap_estimate",
    "probe_fields",
    "calibrate_cs",
    "burn_in_check",
    "write_ledger_csv",
    "write_audit_csv",
]

BETA0_DEFAULT = 1e-4
IDENTITY_NAMES = ("E0", "E1", "E3", "E4", "E6", "E7")


def exponents(ell):
    """p = (1 + 2 ell)/5 and q = (3 - 4 ell)/5; exact for Fraction input."""
    return (1 + 2 * ell) / 5, (3 - 4 * ell) / 5


@dataclass(frozen=True)
class HypoCoefficients:
    beta0: float
    ell: float
    p: float
    q: float
    mu: float
    varsigma: float
    varsigma_k: float
    alpha0: float
    gamma0: float
    beta1: float
    gamma1: float
    Cs: float
    lambda_mu: float
    T_mu: float


def make_coefficients(beta0: float, ell: float, mu: float, varsigma_k: float,
                      Cs: float = 1.0, varsigma: Optional[float] = None) -> HypoCoefficients:
    """Coefficient schedule for given (beta0, ell, mu).

    ``varsigma`` defaults to the power-law value varsigma_k * mu**ell.
    Warns when beta0 is above either smallness threshold under which the
    decay inequality is established.
    """
    if not 0 < beta0 < 1:
        raise ValueError(f"beta0 must lie in (0, 1), got {beta0}")
    if not 1.0 / 3.0 < ell < 0.75:
        raise ValueError(f"ell must lie in (1/3, 3/4), got {ell}")
    if not 0 < mu < 1:
        raise ValueError(f"mu must lie in (0, 1), got {mu}")
    if Cs < 1:
        raise ValueError(f"Cs must be >= 1, got {Cs}")
    p, q = exponents(ell)
    for name, limit in (("1/128^2", 1.0 / 128**2), ("1/(32 Cs)^4", 1.0 / (32.0 * Cs) ** 4)):
        if beta0 > limit:
            warnings.warn(f"beta0={beta0:g} exceeds the smallness threshold {name}={limit:.3g}",
                          stacklevel=2)
    rb = math.sqrt(beta0)
    return HypoCoefficients(
        beta0=beta0, ell=ell, p=p, q=q, mu=mu,
        varsigma=varsigma_k * mu**ell if varsigma is None else varsigma,
        varsigma_k=varsigma_k,
        alpha0=rb * mu**p,
        gamma0=16.0 * beta0 * rb / mu**p,
        beta1=beta0 / mu ** ((p + q) / 2.0),
        gamma1=rb / mu**q,
        Cs=Cs,
        lambda_mu=beta0**1.25 * varsigma_k * mu**p / (12.0 * Cs),
        T_mu=mu ** (-(1.0 - 2.0 * p)),
    )


@dataclass(frozen=True)
class EnergyLedger:
    tau: float
    E0: float
    E1: float
    E2: float
    E3: float
    E4: float
    E6: float
    E7: float
    Phi: float

    def sandwich(self, co: HypoCoefficients):
        lower = (4 * self.E0 + 3 * co.alpha0 * self.E1 + 2 * co.gamma0 * self.E4
                 + 3 * co.gamma1 * self.E7) / 8.0
        upper = (4 * self.E0 + 5 * co.alpha0 * self.E1 + 6 * co.gamma0 * self.E4
                 + 5 * co.gamma1 * self.E7) / 8.0
        return lower, upper


def _phi(e, co):
    return 0.5 * (e["E0"] + co.alpha0 * e["E1"] + 2 * co.beta0 * e["E3"] + co.gamma0 * e["E4"]
                  - 2 * co.beta1 * e["E6"] + co.gamma1 * e["E7"])


def _profiles(grid: Grid, coeffs: np.ndarray, sign: float):
    """theta, theta_y, theta_yy on the nodes for every row of ``coeffs``."""
    coeffs = np.atleast_2d(coeffs)
    n = grid.n
    m = grid.modes
    th = np.fft.ifft(coeffs, axis=-1) * n
    d1 = np.fft.ifft(1j * m * coeffs, axis=-1) * n
    d2 = np.fft.ifft(-(m**2) * coeffs, axis=-1) * n
    if sign < 0:
        th, d1, d2 = np.conj(th), np.conj(d1), np.conj(d2)
    return th, d1, d2


def _energies(grid: Grid, coeffs: np.ndarray, sign: float = 1.0, extra: bool = False) -> dict:
    w = grid.weight
    y = grid.nodes
    v, dv = np.sin(y), np.cos(y)
    th, d1, d2 = _profiles(grid, coeffs, sign)

    def sq(f):
        return w * np.sum(np.abs(f) ** 2, axis=-1)

    def re(f, g):
        return w * np.sum(f * np.conj(g), axis=-1).real

    e = {
        "E0": sq(th), "E1": sq(d1), "E2": sq(d2),
        "E3": re(1j * dv * th, d1), "E4": sq(dv * th),
        "E6": re(v * th, dv * th), "E7": sq(v * th),
    }
    if extra:
        # v'' = -v
        e["dv_d1__d2"] = re(1j * dv * d1, d2)
        e["ddv_th__d2"] = re(-1j * v * th, d2)
        e["ddv_th__d1"] = re(-1j * v * th, d1)
        e["dv_d1_sq"] = sq(dv * d1)
        e["dv_ddv_th__d1"] = re(-dv * v * th, d1)
        e["v_d1__dv_d1"] = re(v * d1, dv * d1)
        e["v_d1_sq"] = sq(v * d1)
    return e


def energy_ledger(state: SpectralField, coeffs: HypoCoefficients, tau: float = 0.0,
                  sign: float = 1.0) -> EnergyLedger:
    e = {key: float(val[0]) for key, val in _energies(state.grid, state.coeffs, sign).items()}
    return EnergyLedger(tau=tau, Phi=float(_phi(e, coeffs)), **e)


def _sign(traj: Trajectory) -> float:
    return 1.0 if traj.params.k > 0 else -1.0


def _require_moving(traj: Trajectory):
    if traj.frame != "moving":
        raise ValueError("hypocoercive quantities need a moving-frame trajectory")


def ledger_series(traj: Trajectory, coeffs: HypoCoefficients) -> list:
    _require_moving(traj)
    e = _energies(traj.grid, traj.coeffs, _sign(traj))
    phi = _phi(e, coeffs)
    return [EnergyLedger(float(traj.times[i]), *(float(e[k][i]) for k in
                         ("E0", "E1", "E2", "E3", "E4", "E6", "E7")), float(phi[i]))
            for i in range(len(traj))]


def coercivity_check(ledger: EnergyLedger, coeffs: HypoCoefficients, rtol: float = 1e-10):
    """Returns (lower_ok, upper_ok, (lower_margin, upper_margin)).

    Margins are Phi - lower and upper - Phi; a margin counts as satisfied
    when it is above -rtol times the size of the bounds.
    """
    lower, upper = ledger.sandwich(coeffs)
    m_lo, m_hi = ledger.Phi - lower, upper - ledger.Phi
    tol = rtol * max(abs(upper), abs(lower), abs(ledger.Phi))
    return m_lo >= -tol, m_hi >= -tol, (m_lo, m_hi)


@dataclass(frozen=True)
class ResidualReport:
    """Max relative residual of each energy identity, keyed by the energy it balances."""

    residuals: dict
    h: float

    def worst(self) -> float:
        return max(self.residuals.values())


def _identity_terms(e: dict, mu: float, vs: float) -> dict:
    """(differentiated quantity, factor on its derivative, list of RHS terms)."""
    return {
        "E0": (e["E0"], 0.5, [-mu * e["E1"]]),
        "E1": (e["E1"], 0.5, [-mu * e["E2"], -e["E3"]]),
        "E3": (e["E3"], 1.0, [-e["E4"], -2 * mu * e["dv_d1__d2"], -mu * e["ddv_th__d2"],
                              -vs * e["ddv_th__d1"]]),
        "E4": (e["E4"], 0.5, [-mu * e["dv_d1_sq"], -2 * mu * e["dv_ddv_th__d1"], vs * e["E6"]]),
        "E6": (e["E6"], 1.0, [-vs * e["E4"], vs * e["E7"], -4 * mu * e["E6"],
                              -2 * mu * e["v_d1__dv_d1"]]),
        "E7": (e["E7"], 0.5, [-vs * e["E6"], -mu * e["v_d1_sq"], mu * e["E4"], -mu * e["E7"]]),
    }


def identity_residuals(traj: Trajectory, coeffs: Optional[HypoCoefficients] = None) -> ResidualReport:
    """Relative residuals of the six energy balances along a moving-frame run.

    Left sides are centred differences of the ledger series, right sides are
    evaluated at the interior snapshots.  The residual of identity j is
    max |LHS - RHS| / (|RHS| + scale) with scale the largest value over the
    run of the summed magnitudes of its right-hand terms (or of the larger
    of E0 and the differentiated energy when every term vanishes).  ``coeffs`` is
    accepted for symmetry with the other ledger operations; the balances
    only involve mu and varsigma, which are read from the trajectory.
    """
    _require_moving(traj)
    if len(traj) < 3:
        raise ValueError("need at least three snapshots")
    if traj.uniform_prefix() != len(traj):
        raise ValueError("snapshot spacing must be uniform")
    sp = traj.scaled
    h = float(traj.times[1] - traj.times[0])
    e = _energies(traj.grid, traj.coeffs, _sign(traj), extra=True)
    out = {}
    for name, (q, factor, terms) in _identity_terms(e, sp.mu, sp.varsigma).items():
        lhs = factor * (q[2:] - q[:-2]) / (2 * h)
        rhs = sum(t[1:-1] for t in terms)
        scale = float(np.max(sum(np.abs(t) for t in terms)))
        if scale == 0.0:
            scale = float(np.max(np.maximum(np.abs(q), e["E0"])))
        if scale == 0.0:
            out[name] = 0.0
            continue
        out[name] = float(np.max(np.abs(lhs - rhs) / (np.abs(rhs) + scale)))
    return ResidualReport(out, h)


def refinement_ratios(coarse: ResidualReport, fine: ResidualReport,
                      target: float = 4.0, tolerance: float = 0.2):
    """Per-identity residual ratio coarse/fine and whether it lies in target*(1 +- tolerance)."""
    ratios, flags = {}, {}
    for name in coarse.residuals:
        r = coarse.residuals[name] / fine.residuals[name] if fine.residuals[name] > 0 else math.inf
        ratios[name] = r
        flags[name] = abs(r - target) <= tolerance * target
    return ratios, flags


@dataclass(frozen=True)
class PhiReport:
    tau: np.ndarray
    phi: np.ndarray
    T_mu: float
    lambda_mu: float
    monotone_after_burn_in: bool
    first_increase: Optional[float]
    empirical_rate: float
    envelope_slack: float

    @property
    def decay_ok(self) -> bool:
        return self.monotone_after_burn_in and self.empirical_rate >= self.lambda_mu


def phi_series(traj: Trajectory, coeffs: HypoCoefficients, window: float = 3.0) -> PhiReport:
    """Phi along a moving-frame run and its decay after the burn-in time.

    ``empirical_rate`` is the largest r with Phi(tau) <= Phi(T_mu) e^{-r(tau - T_mu)}
    on [T_mu, window*T_mu]; ``envelope_slack`` is the largest ratio
    Phi(tau) / (Phi(T_mu) e^{-lambda_mu (tau - T_mu)}) on the same window.
    """
    _require_moving(traj)
    e = _energies(traj.grid, traj.coeffs, _sign(traj))
    phi = _phi(e, coeffs)
    tau = np.asarray(traj.times)
    T = coeffs.T_mu
    if tau[-1] < window * T * (1 - 1e-12):
        raise ValueError(f"trajectory ends at tau={tau[-1]:.4g} before {window}*T_mu")
    after = tau >= T * (1 - 1e-12)
    idx = np.nonzero(after)[0]
    increase = np.nonzero(np.diff(phi[idx]) > 0)[0]
    first = float(tau[idx[increase[0] + 1]]) if increase.size else None
    win = idx[tau[idx] <= window * T * (1 + 1e-12)]
    start = win[0]
    later = win[1:]
    with np.errstate(divide="ignore"):
        rates = -np.log(phi[later] / phi[start]) / (tau[later] - tau[start])
    rate = float(np.min(rates)) if later.size else math.inf
    env = phi[start] * np.exp(-coeffs.lambda_mu * (tau[win] - tau[start]))
    slack = float(np.max(phi[win] / env))
    return PhiReport(tau, phi, T, coeffs.lambda_mu, increase.size == 0, first, rate, slack)


def decay_envelope(t, params: FlowParams, beta0: float, Cs: float, Ced: float,
                   e0: float = 1.0):
    """Upper envelope for ||theta(t)||^2 in lab time, for ||theta0||^2 = e0."""
    if not params.power_law:
        raise ValueError("decay_envelope needs a power-law speed (c0, ell)")
    p, _ = exponents(params.ell)
    ak, nu = params.shear_rate, params.nu
    if nu <= 0:
        raise ValueError("decay_envelope needs nu > 0")
    rate = (beta0**1.25 / (12.0 * Cs) * params.c0 * ak ** ((3 * params.ell - 1) / 5.0) * nu**p
            + 2.0 * nu * params.k**2)
    t = np.asarray(t, dtype=float)
    return Ced * (1.0 + math.sqrt(beta0) * (ak / nu) ** p) * np.exp(-rate * t) * e0


@dataclass(frozen=True)
class AuditRow:
    name: str
    lhs: Fraction
    rhs: Fraction
    relation: str
    passed: bool
    binding: bool

    @property
    def slack(self) -> Fraction:
        return self.rhs - self.lhs if self.relation in ("<=", "<") else self.lhs - self.rhs


def constraint_audit(ell, p=None, q=None) -> list:
    """Exact evaluation of the exponent constraints.

    Floats are converted to the nearest simple fraction first; p and q
    default to their closed forms in ell.
    """
    ell = Fraction(ell).limit_denominator(10**9)
    if p is None or q is None:
        p, q = exponents(ell)
    p = Fraction(p).limit_denominator(10**9)
    q = Fraction(q).limit_denominator(10**9)
    one = Fraction(1)
    checks = [
        ("A", 2 * ell - p + 2 * q, "<=", one),
        ("B", p, "<=", (1 - q) / 2),
        ("C", (1 - q) / 2, "<=", p),
        ("D", 2 * ell + q, ">=", 3 * p),
        ("E", 2 * ell + p + 3 * q, ">=", 2 * one),
        ("F", 2 * p, "<=", 1 + q),
        ("O:0<q", Fraction(0), "<", q),
        ("O:q<p", q, "<", p),
        ("O:p<=ell", p, "<=", ell),
        ("O:ell<1", ell, "<", one),
        ("C1", 2 * (ell - p), ">=", (2 * ell - p - q) / 2),
        ("C2", (2 * ell + p + q) / 2, ">=", 1 - q),
        ("C3", (1 - q) / 2, "<=", 1 - p),
    ]
    ops = {"<=": lambda a, b: a <= b, "<": lambda a, b: a < b, ">=": lambda a, b: a >= b}
    return [AuditRow(name, lhs, rhs, rel, ops[rel](lhs, rhs), lhs == rhs)
            for name, lhs, rel, rhs in checks]


def spectral_gap_estimate(fields: Iterable[SpectralField], sigma_grid: Sequence[float]):
    """Empirical Cs = max sigma^{1/2} E0 / (sigma E1 + E4) over fields and sigma.

    Returns (Cs, excluded) where ``excluded`` lists the indices of fields for
    which sigma E1 + E4 < 1e-14 E0 at some sigma (nearly degenerate fields).
    """
    sigma = np.asarray(sigma_grid, dtype=float)
    if sigma.size == 0 or np.any(sigma <= 0) or np.any(sigma > 1):
        raise ValueError("sigma values must lie in (0, 1]")
    best, excluded = 0.0, []
    for i, f in enumerate(fields):
        e = _energies(f.grid, f.coeffs)
        e0, e1, e4 = float(e["E0"][0]), float(e["E1"][0]), float(e["E4"][0])
        if e0 == 0.0:
            raise ValueError("fields must be nonzero")
        denom = sigma * e1 + e4
        if np.any(denom < 1e-14 * e0):
            excluded.append(i)
            continue
        best = max(best, float(np.max(np.sqrt(sigma) * e0 / denom)))
    return best, excluded


def probe_fields(grid: Grid, rng: np.random.Generator, count: int = 50) -> list:
    """Random smooth fields plus bumps centred on the critical points of sin y."""
    fields = [random_field(grid, rng, bandwidth=16, decay=1.5) for _ in range(count)]
    y = grid.nodes
    for centre in (np.pi / 2, 3 * np.pi / 2):
        for width in (0.05, 0.1, 0.2, 0.4):
            d = np.angle(np.exp(1j * (y - centre)))
            fields.append(SpectralField.from_values(grid, np.exp(-((d / width) ** 2))))
    fields.append(grid.field(np.cos))
    fields.append(grid.field(lambda s: np.ones_like(s)))
    return fields


def calibrate_cs(grid: Grid, rng: np.random.Generator, sigma_grid=None) -> float:
    """Spectral-gap constant from ``probe_fields``, floored at 1."""
    sigma = np.logspace(-6, 0, 25) if sigma_grid is None else sigma_grid
    cs, _ = spectral_gap_estimate(probe_fields(grid, rng), sigma)
    return max(cs, 1.0)


def burn_in_check(traj: Trajectory, coeffs: HypoCoefficients, rtol: float = 1e-6) -> bool:
    """int_0^{T_mu} E1 <= E0(0)/(2 mu) and min E1 <= mu^{-2p} E0(0)/2 on [0, T_mu]."""
    _require_moving(traj)
    tau = np.asarray(traj.times)
    T = coeffs.T_mu
    if tau[-1] < T * (1 - 1e-12):
        raise ValueError("trajectory must cover [0, T_mu]")
    e = _energies(traj.grid, traj.coeffs, _sign(traj))
    e0, e1 = e["E0"][0], e["E1"]
    inside = tau < T
    nodes = np.append(tau[inside], T)
    vals = np.append(e1[inside], np.interp(T, tau, e1))
    integral = float(np.trapezoid(vals, nodes))
    ok_int = integral <= e0 / (2.0 * coeffs.mu) * (1 + rtol)
    ok_min = float(np.min(vals)) <= 0.5 * coeffs.mu ** (-2 * coeffs.p) * e0 * (1 + rtol)
    return bool(ok_int and ok_min)


def write_ledger_csv(ledgers: Sequence[EnergyLedger], coeffs: HypoCoefficients, path) -> Path:
    """Ledger series with the envelope Phi(T_mu) exp(-lambda_mu (tau - T_mu)) from T_mu on."""
    path = Path(path)
    phi_T = None
    taus = np.array([l.tau for l in ledgers])
    if taus.size and taus[-1] >= coeffs.T_mu:
        phi_T = float(np.interp(coeffs.T_mu, taus, [l.Phi for l in ledgers]))
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "E0", "E1", "E2", "E3", "E4", "E6", "E7", "Phi", "envelope"])
        for l in ledgers:
            env = ""
            if phi_T is not None and l.tau >= coeffs.T_mu:
                env = repr(phi_T * math.exp(-coeffs.lambda_mu * (l.tau - coeffs.T_mu)))
            w.writerow([repr(x) for x in (l.tau, l.E0, l.E1, l.E2, l.E3, l.E4, l.E6, l.E7, l.Phi)]
                       + [env])
    return path


def write_audit_csv(rows: Sequence[AuditRow], ell, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ell", "constraint", "lhs", "relation", "rhs", "slack", "passed", "binding"])
        for r in rows:
            w.writerow([repr(float(ell)), r.name, str(r.lhs), r.relation, str(r.rhs),
                        str(r.slack), int(r.passed), int(r.binding)])
    return path

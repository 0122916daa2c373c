"""Numerical checks of the qualitative theory over sweep reports.

Each check returns a :class:`CheckOutcome` whose ``worst_violation`` is a
signed number compared against ``tolerance``: the check passes iff
``worst_violation <= tolerance``. Checks that lack the data they need return
status ``"inconclusive"`` instead of failing. Nothing here mutates its inputs
or uses randomness.

Synthetic counterexample reports (negative controls) are provided by the
``fixture_*`` functions and collected in :data:`NEGATIVE_CONTROLS`.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .functionals import energy
from .minimizer import SolveOptions, minimize_at_mass
from .model import DomainError, PhysicalParams, green_l2_norm_sq
from .report import SweepReport, SweepRow, read_csv
from .shooting import ShootingConfig, solve_action
from .space import (
    DEFAULT_COUNT,
    DEFAULT_GRADING,
    canonical_lambda,
    default_rmax,
    l2_distance,
    lp_norm_p,
    make_grid,
    mass,
    pure_green_state,
)

__all__ = [
    "CheckOutcome", "SweepReport", "SweepRow", "read_csv",
    "check_negativity_and_monotonicity", "check_small_mass_limit",
    "check_multiplier_window", "check_cross_consistency", "green_norm_ratio",
    "run_report_checks", "write_verification", "NEGATIVE_CONTROLS",
]

EPS_DISC = 1e-6
SANDWICH_SLACK = 0.5
CROSS_ENERGY_TOL = 1e-4
CROSS_PROFILE_TOL = 1e-3


@dataclass(frozen=True)
class CheckOutcome:
    name: str
    passed: bool
    detail: str
    worst_violation: float
    tolerance: float = 0.0
    status: str = ""
    data: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.status:
            object.__setattr__(self, "status", "pass" if self.passed else "fail")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def line(self) -> str:
        return (f"[{self.status.upper():>12}] {self.name}: worst={self.worst_violation:.3e} "
                f"tol={self.tolerance:.3e} | {self.detail}")


def _inconclusive(name, detail, tolerance=0.0):
    return CheckOutcome(name, False, detail, float("nan"), tolerance, "inconclusive")


def _outcome(name, worst, tol, detail, data=None):
    return CheckOutcome(name, bool(worst <= tol), detail, float(worst), float(tol),
                        data=data or {})


def _rel_increase(x):
    # violation of "x strictly increasing": positive where x fails to grow
    x = np.asarray(x, dtype=float)
    scale = np.maximum(np.abs(x[1:]), np.abs(x[:-1]))
    scale[scale == 0] = 1.0
    return -(x[1:] - x[:-1]) / scale


def _unconverged_note(report):
    bad = [r.mu for r in report.rows if not r.converged]
    return f"; {len(bad)} unconverged rows ignored" if bad else ""


def check_negativity_and_monotonicity(report: SweepReport, margin: float | None = None
                                      ) -> CheckOutcome:
    """``E < 0`` on every row and ``E`` strictly decreasing in ``mu``.

    Strictness uses ``margin`` (default ``10 * grad_tol``): every consecutive
    difference and every value must lie below ``-margin``.
    """
    name = "negativity_and_monotonicity"
    margin = 10.0 * report.grad_tol if margin is None else float(margin)
    rows = report.converged_rows()
    if len(rows) < 3:
        return _inconclusive(name, f"needs >= 3 converged rows, got {len(rows)}", -margin)
    e = np.array([r.E for r in rows])
    diffs = np.diff(e)
    worst_diff = float(diffs.max())
    worst_val = float(e.max())
    worst = max(worst_diff, worst_val)
    k = int(diffs.argmax())
    detail = (f"max E = {worst_val:.6e}; largest step E[i+1]-E[i] = {worst_diff:.6e} "
              f"between mu={rows[k].mu:.6g} and mu={rows[k + 1].mu:.6g}"
              + _unconverged_note(report))
    return _outcome(name, worst, -margin, detail,
                    {"margin": margin, "max_E": worst_val, "max_step": worst_diff})


def green_norm_ratio(params: PhysicalParams, grid=None) -> float:
    """``(||G||_p / ||G||_2)^p`` at ``lam = |ell|``, both norms by quadrature."""
    if grid is None:
        grid = make_grid(default_rmax(params), DEFAULT_COUNT, DEFAULT_GRADING, params.dim)
    g = pure_green_state(params, grid, 1.0, canonical_lambda(params))
    return lp_norm_p(g) / mass(g) ** (params.p / 2.0)


def _report_grid(report):
    info = report.meta.get("grid")
    if not info:
        return None
    return make_grid(float(info["rmax"]), int(info["count"]),
                     float(info["grading_ratio"]), report.params.dim)


def sandwich_bound(params: PhysicalParams, mu, ratio: float):
    """Upper bound on ``2E/(|ell| mu) + 1`` from the pure-G competitor."""
    mu = np.asarray(mu, dtype=float)
    return 2.0 / (params.p * params.abs_ell) * mu ** ((params.p - 2.0) / 2.0) * ratio


def check_small_mass_limit(report: SweepReport, eps_disc: float = EPS_DISC,
                           slack: float = SANDWICH_SLACK, ratio: float | None = None
                           ) -> CheckOutcome:
    """Sandwich ``-1 - eps <= 2E/(|ell| mu) <= -1 + (1 + slack) * bound`` and trend.

    Also requires ``2E/(|ell| mu) + 1`` to shrink as ``mu`` decreases. The
    reported violation is the largest of the three, each normalized so that
    ``<= 0`` means satisfied.
    """
    name = "small_mass_limit"
    params = report.params
    rows = report.converged_rows()
    if len(rows) < 3:
        return _inconclusive(name, f"needs >= 3 converged rows, got {len(rows)}")
    mus = np.array([r.mu for r in rows])
    if math.log10(mus[-1] / mus[0]) < 2.0 - 1e-12:
        return _inconclusive(name, "rows must span at least two decades of mu")
    if ratio is None:
        ratio = green_norm_ratio(params, _report_grid(report))
    ratio_r = 2.0 * np.array([r.E for r in rows]) / (params.abs_ell * mus)
    excess = ratio_r + 1.0
    upper = (1.0 + slack) * sandwich_bound(params, mus, ratio)
    lower_v = float(np.max(-excess - eps_disc))
    upper_v = float(np.max(excess / upper - 1.0))
    trend_v = float(np.max(_rel_increase(excess)))
    worst = max(lower_v, upper_v, trend_v)
    detail = (f"2E/(|ell|mu) in [{ratio_r.min():.6f}, {ratio_r.max():.6f}]; "
              f"lower={lower_v:.3e} upper={upper_v:.3e} trend={trend_v:.3e}; "
              f"eps_disc={eps_disc:g} slack={slack:g}" + _unconverged_note(report))
    return _outcome(name, worst, 0.0, detail,
                    {"eps_disc": eps_disc, "slack": slack, "norm_ratio": ratio,
                     "lower": lower_v, "upper": upper_v, "trend": trend_v})


def check_multiplier_window(report: SweepReport, mu_max: float | None = None,
                            margin: float | None = None) -> CheckOutcome:
    """``0 < omega < |ell|`` and the small-mass trends of the multiplier data.

    On converged rows with ``mu <= mu_max``: omega grows toward ``|ell|`` and
    ``lp_p/mu`` shrinks as ``mu`` decreases, and ``|h_alpha/(|ell| mu) + 1|``
    shrinks too. Window violations are relative to ``|ell|``; trend
    violations are relative changes; all must be ``<= -margin``.
    """
    name = "multiplier_window"
    params = report.params
    margin = 10.0 * report.grad_tol if margin is None else float(margin)
    rows = [r for r in report.converged_rows() if mu_max is None or r.mu <= mu_max]
    if not rows:
        return _inconclusive(name, "no converged small-mass rows", -margin)
    ell = params.abs_ell
    om = np.array([r.omega for r in rows])
    mus = np.array([r.mu for r in rows])
    window_v = float(max(np.max(-om / ell), np.max(om / ell - 1.0)))
    parts = {"window": window_v}
    if len(rows) >= 2:
        # along increasing mu: omega decreases, lp/mu and |h/(|ell|mu) + 1| increase
        parts["omega_trend"] = float(np.max(_rel_increase(-om)))
        parts["lp_trend"] = float(np.max(_rel_increase([r.lp_p / r.mu for r in rows])))
        hdev = np.abs(np.array([r.h_alpha for r in rows]) / (ell * mus) + 1.0)
        parts["h_trend"] = float(np.max(_rel_increase(hdev)))
    worst = max(parts.values())
    detail = (f"omega/|ell| in [{om.min() / ell:.9f}, {om.max() / ell:.9f}] over "
              f"{len(rows)} rows; " + " ".join(f"{k}={v:.3e}" for k, v in parts.items())
              + _unconverged_note(report))
    return _outcome(name, worst, -margin, detail, {"margin": margin, **parts})


def check_cross_consistency(params: PhysicalParams, omegas, shooting: ShootingConfig | None = None,
                            solve: SolveOptions | None = None, perturb: float = 1.0,
                            energy_tol: float = CROSS_ENERGY_TOL,
                            profile_tol: float = CROSS_PROFILE_TOL) -> CheckOutcome:
    """Shooting at each omega versus the minimizer at the mass it produces.

    ``perturb`` rescales the shooting profile after its mass is recorded
    (a value other than 1 gives a negative control). The violation is
    ``max(dE / energy_tol, dL2 / profile_tol)`` and must not exceed 1.
    """
    name = "cross_consistency"
    shooting = ShootingConfig(1.0) if shooting is None else shooting
    solve = SolveOptions() if solve is None else solve
    per_omega = []
    worst = -math.inf
    inconclusive = []
    for om in omegas:
        om = float(om)
        if not 0.0 < om < params.abs_ell:
            raise DomainError(f"omega={om} outside (0, |ell|)")
        shot = solve_action(params, dataclasses.replace(shooting, omega=om))
        mu = shot.mass
        u = shot.state.scaled(perturb) if perturb != 1.0 else shot.state
        if not shot.converged:
            inconclusive.append(om)
            per_omega.append({"omega": om, "status": "shooting unconverged"})
            continue
        opts = dataclasses.replace(solve, grid=shot.state.grid, init="pure-G")
        v = minimize_at_mass(params, mu, opts)
        if not v.converged:
            inconclusive.append(om)
            per_omega.append({"omega": om, "mu": mu, "status": "minimizer unconverged"})
            continue
        e_u = energy(u)
        d_e = abs(e_u - v.energy) / abs(v.energy)
        norm = math.sqrt(mass(v.state))
        d_l2 = min(l2_distance(u, v.state), l2_distance(u, -v.state)) / norm
        viol = max(d_e / energy_tol, d_l2 / profile_tol)
        worst = max(worst, viol)
        per_omega.append({"omega": om, "mu": mu, "energy_shooting": e_u,
                          "energy_minimizer": v.energy, "rel_energy_diff": d_e,
                          "rel_l2_diff": d_l2, "violation": viol})
    detail = "; ".join(
        f"omega={d['omega']:.6g}: " + (f"dE={d['rel_energy_diff']:.2e} dL2={d['rel_l2_diff']:.2e}"
                                        if "violation" in d else d["status"])
        for d in per_omega)
    data = {"per_omega": per_omega, "perturb": perturb}
    if worst > 1.0:
        return CheckOutcome(name, False, detail, worst, 1.0, "fail", data)
    if inconclusive or not per_omega:
        return CheckOutcome(name, False, detail or "no frequencies given",
                            worst if math.isfinite(worst) else float("nan"), 1.0,
                            "inconclusive", data)
    return CheckOutcome(name, True, detail, worst, 1.0, "pass", data)


def run_report_checks(report: SweepReport, mu_max: float | None = None) -> list[CheckOutcome]:
    return [
        check_negativity_and_monotonicity(report),
        check_small_mass_limit(report),
        check_multiplier_window(report, mu_max=mu_max),
    ]


def overall_status(outcomes) -> str:
    if any(o.status == "fail" for o in outcomes):
        return "fail"
    if any(o.status == "inconclusive" for o in outcomes):
        return "inconclusive"
    return "pass"


def write_verification(outcomes, json_path, text_path=None, header: dict | None = None) -> str:
    """Write the JSON report (and optional text summary); return overall status."""
    status = overall_status(outcomes)
    doc = {"status": status, "eps_disc": EPS_DISC, **(header or {}),
           "checks": [o.to_dict() for o in outcomes]}
    with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    if text_path is not None:
        with open(text_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"verification: {status}\n")
            for o in outcomes:
                fh.write(o.line() + "\n")
    return status


# ---------------------------------------------------------------- fixtures

def synthetic_report(params: PhysicalParams, mus=None, ratio: float = 1.0) -> SweepReport:
    """Smooth report obeying every checked property.

    ``E = ell mu/2 + (mu^{p/2}/p) R/2`` and ``lp = 0.4 R mu^{p/2}`` with
    ``R = ratio``; ``h`` and ``omega`` follow from the energy and pairing
    identities.
    """
    mus = np.logspace(-4, -1, 20) if mus is None else np.asarray(mus, dtype=float)
    p, ell = params.p, params.ell
    rows = []
    for mu in mus:
        lp = 0.4 * ratio * mu ** (p / 2.0)
        e = ell * mu / 2.0 + 0.5 * ratio * mu ** (p / 2.0) / p
        h = 2.0 * (e - lp / p)
        rows.append(SweepRow(float(mu), e, -(h + lp) / mu, math.sqrt(mu), h, lp, 1, 0.0, True))
    return SweepReport(params, tuple(rows), 1e-8, {"synthetic": True})


def _base_params():
    return PhysicalParams(3, -1.0 / (4.0 * math.pi), 2.5)


def _with_rows(report, rows):
    return SweepReport(report.params, tuple(rows), report.grad_tol, report.meta)


def fixture_increasing_energy() -> SweepReport:
    """One consecutive pair with ``E`` going up."""
    rep = synthetic_report(_base_params())
    rows = list(rep.rows)
    k = 10
    rows[k] = dataclasses.replace(rows[k], E=rows[k - 1].E + 1e-6)
    return _with_rows(rep, rows)


def fixture_single_row() -> SweepReport:
    rep = synthetic_report(_base_params())
    return _with_rows(rep, rep.rows[:1])


def fixture_constant_ratio() -> SweepReport:
    """``2E/(|ell| mu) = -0.5`` everywhere."""
    rep = synthetic_report(_base_params())
    ell = rep.params.abs_ell
    rows = [dataclasses.replace(r, E=-0.25 * ell * r.mu) for r in rep.rows]
    return _with_rows(rep, rows)


def fixture_omega_above_window() -> SweepReport:
    rep = synthetic_report(_base_params())
    rows = list(rep.rows)
    rows[0] = dataclasses.replace(rows[0], omega=1.001 * rep.params.abs_ell)
    return _with_rows(rep, rows)


def fixture_omega_nonpositive() -> SweepReport:
    rep = synthetic_report(_base_params())
    rows = list(rep.rows)
    rows[3] = dataclasses.replace(rows[3], omega=-0.01)
    return _with_rows(rep, rows)


# name -> (check, fixture, expected status); the cross-consistency control
# is a solver run with a rescaled shooting profile, see check_cross_consistency
NEGATIVE_CONTROLS = {
    "increasing_energy": (check_negativity_and_monotonicity, fixture_increasing_energy, "fail"),
    "single_row": (check_negativity_and_monotonicity, fixture_single_row, "inconclusive"),
    "constant_ratio": (check_small_mass_limit, fixture_constant_ratio, "fail"),
    "omega_above_window": (check_multiplier_window, fixture_omega_above_window, "fail"),
    "omega_nonpositive": (check_multiplier_window, fixture_omega_nonpositive, "fail"),
}

PERTURBED_AMPLITUDE = 1.1

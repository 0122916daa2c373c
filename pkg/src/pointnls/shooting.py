"""Fixed-frequency solver: inward shooting for the positive radial standing wave.

For ``0 < omega < |ell|`` the stationary equation
``-u'' - (N-1)/r u' + omega u + u^{p-1} = 0`` has a unique positive radial
decreasing solution that satisfies the point-interaction boundary condition at
the origin. We integrate inward from the decaying tail ``u ~ A G_omega`` and
tune the amplitude ``A`` until the condition holds.

Integration runs in ``s = log r``. In 3D the state is ``(w, w_r)`` with
``w = r u``; in 2D it is ``(u, r u_r)``. Both stay bounded at the origin, and
the singular coefficient and regular value are read off the derivative data
at the matching radius.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .functionals import el_residual, summary
from .minimizer import GroundStateResult
from .model import DomainError, PhysicalParams, _bessel_k1, bessel_k0
from .space import (
    DEFAULT_COUNT,
    DEFAULT_GRADING,
    DecomposedState,
    canonical_lambda,
    default_rmax,
    green_samples,
    make_grid,
)

# |y| above this (relative to the seed amplitude) counts as blow-up
_BLOWUP = 1e8
_SCAN_DECADES = np.arange(-8.0, 2.0 + 0.5, 0.5)


class BracketError(RuntimeError):
    """No sign change of the boundary residual over the amplitude scan."""

    def __init__(self, message, scan):
        super().__init__(message)
        self.scan = scan


@dataclass(frozen=True)
class ShootingConfig:
    """Frequency and numerical settings for :func:`solve_action`.

    ``r_start`` defaults to ``20/sqrt(omega)`` and becomes the outer radius of
    the output grid. ``r_match`` must lie below the first grid node and
    defaults to a thousandth of it.
    ``bisect_tol`` bounds ``|c/q - alpha|``, the boundary residual per unit
    charge.
    """

    omega: float
    r_start: float | None = None
    r_match: float | None = None
    bisect_tol: float = 1e-10
    ode_tol: float = 1e-10
    count: int = DEFAULT_COUNT
    grading_ratio: float = DEFAULT_GRADING

    def __post_init__(self):
        if not (math.isfinite(self.omega) and self.omega > 0):
            raise DomainError("omega must be positive")
        for name in ("bisect_tol", "ode_tol"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.r_match is not None and not self.r_match > 0:
            raise DomainError("r_match must be positive")
        if self.r_start is not None and not 1.0 / math.sqrt(self.omega) < self.r_start:
            raise DomainError("need 1/sqrt(omega) < r_start")
        if self.r_match is not None and not self.r_match < 1.0 / math.sqrt(self.omega):
            raise DomainError("need r_match << 1/sqrt(omega)")

    def matching_radius(self, first_node: float) -> float:
        return 1e-3 * first_node if self.r_match is None else float(self.r_match)

    def outer_radius(self, params: PhysicalParams) -> float:
        if self.r_start is not None:
            return float(self.r_start)
        return default_rmax(params, self.omega)


@dataclass(frozen=True)
class NearOriginProfile:
    """Value and radial derivative of ``u`` at a small radius ``r``.

    ``omega`` and ``nonlinear`` select which correction terms of the local
    expansion are removed before reading off the singular coefficient;
    ``nonlinear=False`` treats ``u`` as a solution of the linear equation.
    """

    r: float
    u: float
    du: float
    omega: float = 0.0
    nonlinear: bool = False
    p: float | None = None


def extract_charge(profile: NearOriginProfile, params: PhysicalParams):
    """Return ``(q_hat, c)`` with ``u ~ q_hat S_N(r) + c`` near the origin."""
    r, u, du = profile.r, profile.u, profile.du
    if not (r > 0 and math.isfinite(u) and math.isfinite(du)):
        raise DomainError("profile must have r > 0 and finite data")
    p = params.p if profile.p is None else profile.p
    if params.dim == 3:
        return _extract_3d(r, r * u, u + r * du, profile.omega, p, profile.nonlinear)
    return _extract_2d(r, u, r * du)


def _extract_3d(r, w, v, omega, p, nonlinear):
    # w = a + c r + b r^{4-p} + omega a r^2 / 2 + ..., v = w_r
    a, c = w, v
    for _ in range(8):
        b = abs(a) ** (p - 2.0) * a / ((3.0 - p) * (4.0 - p)) if nonlinear else 0.0
        c = v - b * (4.0 - p) * r ** (3.0 - p) - omega * a * r
        a = w - c * r - b * r ** (4.0 - p) - 0.5 * omega * a * r * r
    return 4.0 * math.pi * a, c


def _extract_2d(r, u, v):
    # u = -q log(r) / 2 pi + c + O(r^2 log^k r), v = r u_r
    return -2.0 * math.pi * v, u - v * math.log(r)


def boundary_condition_residual(profile: NearOriginProfile, params: PhysicalParams) -> float:
    """``c - alpha q_hat``: zero iff ``u`` lies in the operator domain.

    Raises
    ------
    DomainError
        If the charge is negligible while ``u`` is large, so the split into
        singular and regular parts is meaningless.
    """
    q, c = extract_charge(profile, params)
    scale = abs(profile.u) * (profile.r if params.dim == 3 else 1.0 / abs(math.log(profile.r)))
    if abs(q) < 1e-14 * scale:
        raise DomainError("charge extraction ill-conditioned: q_hat below floor")
    return c - params.alpha * q


def _rhs(params, omega):
    p = params.p
    if params.dim == 3:
        def f(s, y):
            r = math.exp(s)
            w, v = y
            nl = abs(w) ** (p - 2.0) * w * r ** (3.0 - p)
            return [r * v, r * omega * w + nl]
    else:
        def f(s, y):
            r = math.exp(s)
            u, v = y
            return [v, r * r * (omega * u + abs(u) ** (p - 2.0) * u)]
    return f


def _seed(params, omega, r, amp):
    k = math.sqrt(omega)
    if params.dim == 3:
        w = amp * math.exp(-k * r)
        return np.array([w, -k * w])
    u = amp * bessel_k0(k * r)
    return np.array([u, -amp * k * r * _bessel_k1(k * r)])


class _Shooter:
    def __init__(self, params, cfg, r_start, r_match):
        self.params, self.cfg = params, cfg
        self.r_start = r_start
        self.s0, self.s1 = math.log(r_start), math.log(r_match)
        self.f = _rhs(params, cfg.omega)
        self.evals = 0

    def integrate(self, amp, t_eval=None):
        y0 = _seed(self.params, self.cfg.omega, self.r_start, amp)
        cap = _BLOWUP * abs(amp)

        def blow(s, y):
            return cap - abs(y[0]) - abs(y[1])
        blow.terminal = True

        floor = float(np.min(np.abs(y0)))
        self.evals += 1
        return solve_ivp(self.f, (self.s0, self.s1), y0, method="DOP853",
                         rtol=self.cfg.ode_tol, atol=self.cfg.ode_tol * floor,
                         events=blow, t_eval=t_eval)

    def extract(self, sol):
        """``(q_hat, c)`` from the state at the inner end of ``sol``."""
        r = math.exp(sol.t[-1])
        y0, y1 = sol.y[:, -1]
        if self.params.dim == 3:
            return _extract_3d(r, y0, y1, self.cfg.omega, self.params.p, True)
        return _extract_2d(r, y0, y1)

    def residual(self, log_amp):
        """Boundary residual per unit charge; ``-inf`` marks blow-up."""
        sol = self.integrate(math.exp(log_amp))
        if sol.status != 0 or sol.t[-1] > self.s1 + 1e-12:
            return -math.inf
        q, c = self.extract(sol)
        if not q > 0:
            return -math.inf
        return c / q - self.params.alpha


def _finite_residual(shooter, x, floor):
    val = shooter.residual(x)
    return val if math.isfinite(val) else floor


def solve_action(params: PhysicalParams, config: ShootingConfig) -> GroundStateResult:
    """Positive radial critical point of the action at frequency ``config.omega``.

    The profile is sampled on a graded grid whose outer radius is the
    integration start, and converted to canonical coordinates.

    Raises
    ------
    DomainError
        If ``omega`` is not in ``(0, |ell|)``.
    BracketError
        If the amplitude scan finds no sign change.
    """
    omega = config.omega
    if not 0.0 < omega < params.abs_ell:
        raise DomainError(f"omega must lie in (0, |ell|) = (0, {params.abs_ell})")
    r_start = config.outer_radius(params)
    grid = make_grid(r_start, config.count, config.grading_ratio, params.dim)
    r_match = config.matching_radius(grid.nodes[0])
    if not r_match < grid.nodes[0]:
        raise DomainError("r_match must lie below the first grid node")
    shooter = _Shooter(params, config, r_start, r_match)

    scan = []
    bracket = None
    for dec in _SCAN_DECADES:
        x = dec * math.log(10.0)
        val = shooter.residual(x)
        scan.append((float(math.exp(x)), val))
        if len(scan) > 1 and scan[-2][1] > 0 and not val > 0:
            bracket = (math.log(scan[-2][0]), x)
            break
    if bracket is None:
        raise BracketError("boundary residual has no sign change over the amplitude scan",
                           scan)

    lo, hi = bracket
    floor = -1.0
    if not math.isfinite(scan[-1][1]):
        # shrink the upper end until the integration survives
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            val = shooter.residual(mid)
            if val > 0:
                lo = mid
            elif math.isfinite(val):
                hi = mid
                break
            else:
                hi = mid
        floor = min(floor, _finite_residual(shooter, hi, -1.0))
    x_star = brentq(lambda x: _finite_residual(shooter, x, floor), lo, hi,
                    xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    bc = shooter.residual(x_star)

    probe = np.linspace(lo, hi, 7)
    probe_vals = [_finite_residual(shooter, x, floor) for x in probe]
    monotone = bool(np.all(np.diff(probe_vals) <= 0))

    amp = math.exp(x_star)
    nodes = grid.nodes
    s_eval = np.concatenate([np.log(nodes[::-1]), [shooter.s1]])
    s_eval[0] = shooter.s0
    sol = shooter.integrate(amp, t_eval=s_eval)
    if sol.status != 0:
        raise RuntimeError(f"final integration failed: {sol.message}")
    q_hat, c_hat = shooter.extract(sol)
    y = sol.y[:, :-1][:, ::-1]

    lam = canonical_lambda(params)
    if params.dim == 3:
        a = q_hat / (4.0 * math.pi)
        w = y[0]
        phi = (w - a) / nodes - a * np.expm1(-math.sqrt(lam) * nodes) / nodes
    else:
        phi = y[0] - q_hat * green_samples(grid, lam)
    state = DecomposedState(params, grid, lam, phi, q_hat)

    info = summary(state)
    residual = el_residual(state, omega)
    u = phi + q_hat * green_samples(grid, lam)
    converged = bool(abs(bc) <= config.bisect_tol and q_hat > 0)
    extra = {
        "amplitude": amp,
        "bracket": [math.exp(lo), math.exp(hi)],
        "boundary_residual": bc,
        "regular_value": c_hat,
        "monotone_bracket": monotone,
        "pairing_omega": info["omega"],
        "positive": bool(np.all(u > 0)),
        "decreasing": bool(np.all(np.diff(u) < 0)),
        "ode_evaluations": shooter.evals,
        "scan": [[a_, v_] for a_, v_ in scan],
    }
    msg = "converged" if converged else "boundary residual above bisect_tol"
    if not monotone:
        msg += "; residual not monotone on final bracket"
    return GroundStateResult(
        state=state, energy=info["energy"], mass=info["mass"], omega=omega,
        charge=q_hat, residual=residual, iters=shooter.evals, converged=converged,
        h_alpha=info["h_alpha"], lp_p=info["lp_p"], message=msg, extra=extra)

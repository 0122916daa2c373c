"""Ground states at prescribed mass by Riemannian gradient descent.

The iterate lives on the discrete sphere ``{mass = mu}`` in canonical
coordinates (``lam = |ell|``, where the beta term vanishes). Search directions
are gradients in the ``H^1_lambda`` metric projected onto the tangent space,
steps follow a Barzilai-Borwein rule safeguarded by Armijo backtracking, and
the retraction simply rescales back to the sphere.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .functionals import _terms, el_residual, preconditioner
from .model import DomainError, PhysicalParams
from .report import SweepReport, SweepRow, format_float
from .space import (
    DEFAULT_COUNT,
    DEFAULT_GRADING,
    DecomposedState,
    RadialGrid,
    canonical_lambda,
    default_rmax,
    make_grid,
    mass,
    pure_green_state,
    redecompose,
    sample_u,
    state_to_dict,
)

STEP_RULES = ("bb", "fixed")


@dataclass(frozen=True)
class SolveOptions:
    """Settings for :func:`minimize_at_mass`.

    ``init`` is ``"pure-G"`` or a :class:`DecomposedState` to warm start from
    (it is redecomposed and rescaled as needed). The grid is taken from
    ``grid`` when given, else from the warm-start state, else built from
    ``rmax``/``count``/``grading_ratio``.
    """

    max_iters: int = 5000
    grad_tol: float = 1e-8
    step_rule: str = "bb"
    init: object = "pure-G"
    grid: RadialGrid | None = None
    rmax: float | None = None
    count: int = DEFAULT_COUNT
    grading_ratio: float = DEFAULT_GRADING
    charge_floor: float = 1e-12
    armijo_c: float = 1e-4
    initial_step: float = 1.0
    max_backtracks: int = 60
    parallel: bool = False
    workers: int | None = None

    def __post_init__(self):
        if not (isinstance(self.max_iters, (int, np.integer)) and self.max_iters >= 1):
            raise DomainError("max_iters must be an integer >= 1")
        for name in ("grad_tol", "charge_floor", "armijo_c", "initial_step"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise DomainError(f"{name} must be positive")
        if self.step_rule not in STEP_RULES:
            raise DomainError(f"step_rule must be one of {STEP_RULES}")
        if not (isinstance(self.init, DecomposedState) or self.init == "pure-G"):
            raise DomainError("init must be 'pure-G' or a DecomposedState")

    def with_init(self, init) -> "SolveOptions":
        return _replace(self, init=init)


def _replace(opts, **kw):
    fields = {k: getattr(opts, k) for k in opts.__dataclass_fields__}
    fields.update(kw)
    return SolveOptions(**fields)


@dataclass
class GroundStateResult:
    """Converged (or best available) state and its diagnostics."""

    state: DecomposedState
    energy: float
    mass: float
    omega: float
    charge: float
    residual: float
    iters: int
    converged: bool
    h_alpha: float = float("nan")
    lp_p: float = float("nan")
    message: str = ""
    energy_history: list = field(default_factory=list, repr=False)
    norm_history: list = field(default_factory=list, repr=False)
    extra: dict = field(default_factory=dict, repr=False)

    def to_dict(self, include_state: bool = True) -> dict:
        doc = {
            "params": self.state.params.to_dict(),
            "energy": self.energy,
            "mass": self.mass,
            "omega": self.omega,
            "charge": self.charge,
            "h_alpha": self.h_alpha,
            "lp_p": self.lp_p,
            "residual": self.residual,
            "iters": self.iters,
            "converged": self.converged,
            "message": self.message,
        }
        if self.extra:
            doc["diagnostics"] = self.extra
        if include_state:
            doc["state"] = state_to_dict(self.state)
        return doc

    def write_json(self, path, include_state: bool = True) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(include_state), fh, indent=1, sort_keys=True)
            fh.write("\n")

    def write_profile_csv(self, path) -> None:
        """Two columns ``r,u`` at the grid nodes."""
        r = self.state.grid.nodes
        u = sample_u(self.state)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("r,u\n")
            for ri, ui in zip(r, u):
                fh.write(f"{format_float(ri)},{format_float(ui)}\n")


def project_to_mass(state: DecomposedState, mu: float) -> DecomposedState:
    """Rescale ``state`` (both parts) onto the sphere of mass ``mu``."""
    if not (math.isfinite(mu) and mu > 0):
        raise DomainError("mu must be a positive real")
    m = mass(state)
    if not m > 0:
        raise DomainError("cannot project a state of zero mass")
    c = math.sqrt(mu / m)
    if c == 1.0:
        return state
    return state.scaled(c)


def _grid_for(params: PhysicalParams, opts: SolveOptions) -> RadialGrid:
    if opts.grid is not None:
        if opts.grid.dim != params.dim:
            raise DomainError("grid dimension does not match params")
        return opts.grid
    if isinstance(opts.init, DecomposedState):
        return opts.init.grid
    rmax = default_rmax(params) if opts.rmax is None else opts.rmax
    return make_grid(rmax, opts.count, opts.grading_ratio, params.dim)


def initial_state(params: PhysicalParams, mu: float, opts: SolveOptions) -> DecomposedState:
    grid = _grid_for(params, opts)
    lam = canonical_lambda(params)
    if isinstance(opts.init, DecomposedState):
        init = opts.init
        if init.params != params:
            raise DomainError("warm start belongs to a different instance")
        if init.grid is not grid:
            raise DomainError("warm start lives on a different grid")
        state = redecompose(init, lam)
        # the truncation node is held at zero
        if state.phi[-1] != 0.0:
            phi = state.phi.copy()
            phi[-1] = 0.0
            state = state.replace(phi)
    else:
        state = pure_green_state(params, grid, 1.0, lam)
    return project_to_mass(state, mu)


def _merit(t, lam, p):
    # E + lam * mu / 2 on the sphere, assembled without the large cancellation
    return 0.5 * (t.dirichlet + lam * t.phi_sq) + t.lp / p


def minimize_at_mass(params: PhysicalParams, mu: float,
                     opts: SolveOptions | None = None) -> GroundStateResult:
    """Minimize the energy over states of mass ``mu``.

    Every accepted step lowers the energy (Armijo). Non-convergence within
    ``max_iters`` is reported through ``converged=False`` rather than raised.

    Raises
    ------
    DomainError
        If ``mu`` is not positive or the iterate collapses to zero mass.
    """
    opts = SolveOptions() if opts is None else opts
    if not (math.isfinite(mu) and mu > 0):
        raise DomainError("mu must be a positive real")
    state = initial_state(params, mu, opts)
    lam, p = state.lam, params.p
    pre = preconditioner(state)
    n = pre.n

    def inner(a_phi, a_q, b_phi, b_q):
        return float(a_phi[:n] @ b_phi[:n]) + a_q * b_q

    t = _terms(state, derivatives=True)
    f_cur = _merit(t, lam, p)
    energies = [t.energy]
    norms = [math.sqrt(t.dirichlet + lam * t.phi_sq) + abs(state.q)]
    step = opts.initial_step
    prev = None
    converged = False
    message = "max_iters reached"
    iters = 0
    metric = float("inf")

    for iters in range(opts.max_iters + 1):
        ze = pre.solve(t.e_phi, t.e_q)
        zm = pre.solve(t.m_phi, t.m_q)
        tau = inner(t.m_phi, t.m_q, *ze) / inner(t.m_phi, t.m_q, *zm)
        r_phi, r_q = t.e_phi - tau * t.m_phi, t.e_q - tau * t.m_q
        d_phi, d_q = ze[0] - tau * zm[0], ze[1] - tau * zm[1]
        gnorm2 = max(inner(r_phi, r_q, d_phi, d_q), 0.0)
        metric = math.sqrt(gnorm2 / mu)

        if metric <= opts.grad_tol:
            omega = -(t.h_alpha + t.lp) / t.mass
            if el_residual(state, omega) <= opts.grad_tol:
                converged = True
                message = "converged"
                break
        if iters == opts.max_iters:
            break

        if prev is not None and opts.step_rule == "bb":
            s_phi, s_q, y_phi, y_q = (state.phi - prev[0], state.q - prev[1],
                                      r_phi - prev[2], r_q - prev[3])
            sy = inner(s_phi, s_q, y_phi, y_q)
            if sy > 0:
                zy = pre.solve(y_phi, y_q)
                yzy = inner(y_phi, y_q, *zy)
                step = sy / yzy if (iters % 2 == 0 and yzy > 0) else \
                    inner(s_phi, s_q, *pre.apply(s_phi, s_q)) / sy
            else:
                step = opts.initial_step
        prev = (state.phi, state.q, r_phi, r_q)

        slack = 1e-14 * (abs(f_cur) + lam * mu)
        for _ in range(opts.max_backtracks):
            trial = state.replace(state.phi - step * d_phi, state.q - step * d_q)
            trial = project_to_mass(trial, mu)
            tt = _terms(trial, derivatives=True)
            f_new = _merit(tt, lam, p)
            if f_new <= f_cur - opts.armijo_c * step * gnorm2 + slack:
                break
            step *= 0.5
        else:
            message = "line search failed"
            break
        state, t, f_cur = trial, tt, f_new
        energies.append(t.energy)
        norms.append(math.sqrt(t.dirichlet + lam * t.phi_sq) + abs(state.q))

    omega = -(t.h_alpha + t.lp) / t.mass
    residual = el_residual(state, omega)
    if converged and not abs(state.q) > opts.charge_floor:
        converged = False
        message = "charge below floor"
    return GroundStateResult(
        state=state, energy=t.energy, mass=t.mass, omega=omega, charge=state.q,
        residual=residual, iters=iters, converged=converged, h_alpha=t.h_alpha,
        lp_p=t.lp, message=message, energy_history=energies, norm_history=norms,
        extra={"tangent_gradient_norm": metric})


def _row(mu: float, res: GroundStateResult) -> SweepRow:
    return SweepRow(mu=mu, E=res.energy, omega=res.omega, q=res.charge,
                    h_alpha=res.h_alpha, lp_p=res.lp_p, iters=res.iters,
                    residual=res.residual, converged=res.converged)


def _solve_independent(args):
    params, mu, opts = args
    return minimize_at_mass(params, mu, opts)


def continuation_sweep(params: PhysicalParams, mus, opts: SolveOptions | None = None,
                       return_results: bool = False):
    """Solve at each mass in ``mus`` (ascending), warm starting from the previous row.

    With ``opts.parallel`` the solves are independent (pure-G start each) and
    run in a process pool; row order is preserved either way.
    """
    opts = SolveOptions() if opts is None else opts
    mus = [float(m) for m in mus]
    if not mus:
        raise DomainError("mus must be nonempty")
    if any(not (m > 0 and math.isfinite(m)) for m in mus):
        raise DomainError("masses must be positive reals")
    if any(b <= a for a, b in zip(mus, mus[1:])):
        raise DomainError("mus must be strictly increasing")
    grid = _grid_for(params, opts)
    base = _replace(opts, grid=grid, init="pure-G")

    if opts.parallel:
        with ProcessPoolExecutor(max_workers=opts.workers) as pool:
            results = list(pool.map(_solve_independent, [(params, m, base) for m in mus]))
    else:
        results = []
        init = opts.init
        for mu in mus:
            res = minimize_at_mass(params, mu, _replace(base, init=init))
            results.append(res)
            init = res.state if res.converged else init
    meta = {"grid": {"rmax": grid.rmax, "count": grid.count,
                     "grading_ratio": grid.grading_ratio},
            "max_iters": opts.max_iters, "warm_start": not opts.parallel}
    report = SweepReport(params, tuple(_row(m, r) for m, r in zip(mus, results)),
                         opts.grad_tol, meta)
    return (report, results) if return_results else report

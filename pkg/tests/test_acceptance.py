"""Acceptance criteria, one test each; a PASS/FAIL line per criterion is printed."""
import math
import time

import numpy as np
import pytest

import oracles
from conftest import ACCEPTANCE_LINES
from states import random_direction, random_state
from pointnls.functionals import action, el_residual, energy, gradient
from pointnls.minimizer import SolveOptions, continuation_sweep, minimize_at_mass
from pointnls.model import PRESETS, bessel_k0, green_l2_norm_sq
from pointnls.shooting import ShootingConfig, solve_action
from pointnls.space import (
    default_rmax,
    l2_distance,
    make_grid,
    mass,
    pure_green_state,
    quadratic_form,
    redecompose,
    regular_mass,
    sample_u,
)
from pointnls.verify import (
    NEGATIVE_CONTROLS,
    PERTURBED_AMPLITUDE,
    check_cross_consistency,
    check_multiplier_window,
    check_negativity_and_monotonicity,
    check_small_mass_limit,
    green_norm_ratio,
)

NAMES = sorted(PRESETS)
OPTS = SolveOptions()
SOLVES = []  # every minimizer result, for the ground-state structure criterion


class Criterion:
    """Times a block and records one PASS/FAIL line."""

    def __init__(self, number, title, limit):
        self.number, self.title, self.limit = number, title, limit
        self.notes = []

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def note(self, text):
        self.notes.append(text)

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        ok = exc_type is None and elapsed < self.limit
        status = "PASS" if ok else "FAIL"
        detail = "; ".join(self.notes)
        if exc_type is not None:
            detail = f"{detail}; {exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        line = (f"[{status}] criterion {self.number:>2} {self.title} "
                f"({elapsed:.1f}s, limit {self.limit:.0f}s) {detail}")
        ACCEPTANCE_LINES.append((self.number, line))
        print(line)
        if exc_type is None:
            assert elapsed < self.limit, f"runtime {elapsed:.1f}s over {self.limit}s"
        return False


def _default_grid(params):
    return make_grid(default_rmax(params), OPTS.count, OPTS.grading_ratio, params.dim)


def test_special_functions():
    with Criterion(1, "special functions", 5.0) as c:
        x = np.logspace(-6, math.log10(50.0), 1000)
        ref = np.array([oracles.k0(v) for v in x])
        err = float(np.max(np.abs(bessel_k0(x) / ref - 1.0)))
        c.note(f"K0 rel err {err:.2e}")
        assert err <= 1e-12
        worst = 0.0
        for name in NAMES:
            params = PRESETS[name]
            for lam in (0.25, 1.0, 4.0):
                grid = make_grid(40.0 / math.sqrt(lam), OPTS.count, OPTS.grading_ratio, params.dim)
                g = pure_green_state(params, grid, 1.0, lam)
                worst = max(worst, abs(mass(g) / green_l2_norm_sq(params, lam) - 1.0))
        c.note(f"||G||^2 rel err {worst:.2e}")
        assert worst <= 1e-6


def test_lambda_invariance():
    with Criterion(2, "lambda invariance", 10.0) as c:
        rng = np.random.default_rng(2)
        worst = 0.0
        for name in NAMES:
            params = PRESETS[name]
            grid = _default_grid(params)
            for _ in range(50):
                st = random_state(params, grid, rng)
                h0 = quadratic_form(st)
                for factor in (0.2, 1.7, 5.0):
                    h = quadratic_form(redecompose(st, factor * params.abs_ell))
                    worst = max(worst, abs(h - h0) / abs(h0))
        c.note(f"worst rel diff {worst:.2e}")
        assert worst <= 1e-8


def test_gradient_finite_differences():
    with Criterion(3, "gradient vs finite differences", 30.0) as c:
        rng = np.random.default_rng(3)
        worst = 0.0
        eps = 1e-5
        for name in NAMES:
            params = PRESETS[name]
            grid = _default_grid(params)
            for _ in range(10):
                st = random_state(params, grid, rng)
                g = gradient(st)
                for _ in range(5):
                    d_phi, d_q = random_direction(st, rng)
                    plus = st.replace(st.phi + eps * d_phi, st.q + eps * d_q)
                    minus = st.replace(st.phi - eps * d_phi, st.q - eps * d_q)
                    fd = (energy(plus) - energy(minus)) / (2 * eps)
                    worst = max(worst, abs(g.pair(st, d_phi, d_q) - fd) / abs(fd))
        c.note(f"worst rel err {worst:.2e}")
        assert worst <= 1e-6


def test_energy_sandwich():
    with Criterion(4, "energy sandwich", 300.0) as c:
        worst = -math.inf
        for name in NAMES:
            params = PRESETS[name]
            ratio = green_norm_ratio(params, _default_grid(params))
            for mu in (1e-4, 1e-3, 1e-2):
                res = minimize_at_mass(params, mu, OPTS)
                SOLVES.append(res)
                assert res.converged, f"{name} mu={mu}: {res.message}"
                lower = params.ell * mu / 2.0
                upper = lower + mu ** (params.p / 2.0) / params.p * ratio + 1e-8
                assert lower < res.energy, f"{name} mu={mu}: E={res.energy} <= {lower}"
                assert res.energy <= upper, f"{name} mu={mu}: E={res.energy} > {upper}"
                worst = max(worst, (res.energy - lower) / (upper - lower))
        c.note(f"max (E - lower)/(upper - lower) = {worst:.3f}")


@pytest.fixture(scope="module")
def sweeps():
    t0 = time.perf_counter()
    mus = np.logspace(-4, -1, 20)
    out = {}
    for name in NAMES:
        report, results = continuation_sweep(PRESETS[name], mus, OPTS, return_results=True)
        SOLVES.extend(results)
        out[name] = report
    return out, time.perf_counter() - t0


def test_energy_negative_decreasing(sweeps):
    reports, elapsed = sweeps
    with Criterion(5, "E(mu) negative and strictly decreasing", 600.0 - elapsed) as c:
        c.note(f"sweeps took {elapsed:.1f}s")
        for name in NAMES:
            rep = reports[name]
            assert all(r.converged for r in rep.rows), f"{name}: unconverged rows"
            out = check_negativity_and_monotonicity(rep, margin=10 * OPTS.grad_tol)
            c.note(f"{name} worst {out.worst_violation:.2e}")
            assert out.status == "pass", out.detail
            e = np.array([r.E for r in rep.rows])
            assert np.all(e < -10 * OPTS.grad_tol)
            assert np.all(np.diff(e) < -10 * OPTS.grad_tol)


def test_multiplier_window(sweeps):
    reports, _ = sweeps
    with Criterion(6, "multiplier window and small-mass limits", 60.0) as c:
        for name in NAMES:
            rep = reports[name]
            ell = rep.params.abs_ell
            rows = rep.converged_rows()
            om = np.array([r.omega for r in rows])
            assert np.all((om > 0) & (om < ell)), f"{name}: omega outside (0, |ell|)"
            # ordered by decreasing mass: omega rises toward |ell|, lp/mu falls toward 0
            assert np.all(np.diff(om[::-1]) > 0)
            lp_ratio = np.array([r.lp_p / r.mu for r in rows])
            assert np.all(np.diff(lp_ratio[::-1]) < 0)
            assert math.log10(rows[-1].mu / rows[0].mu) >= 2.0
            out = check_multiplier_window(rep, margin=0.0)
            assert out.status == "pass", out.detail
            lim = check_small_mass_limit(rep)
            assert lim.status == "pass", lim.detail
            c.note(f"{name} omega/|ell| at mu=1e-4: {om[0] / ell:.6f}, "
                   f"lp/mu: {lp_ratio[0]:.2e}")


@pytest.fixture(scope="module")
def cross():
    t0 = time.perf_counter()
    pairs = {}
    for name in NAMES:
        params = PRESETS[name]
        for frac in (0.3, 0.6, 0.9):
            shot = solve_action(params, ShootingConfig(frac * params.abs_ell))
            opts = SolveOptions(grid=shot.state.grid)
            mini = minimize_at_mass(params, shot.mass, opts)
            SOLVES.append(mini)
            pairs[name, frac] = (shot, mini)
    return pairs, time.perf_counter() - t0


def test_cross_solver_agreement(cross):
    pairs, elapsed = cross
    with Criterion(8, "cross-solver agreement", 600.0 - elapsed) as c:
        worst_e = worst_l2 = 0.0
        for (name, frac), (shot, mini) in pairs.items():
            assert shot.converged and mini.converged, f"{name} {frac}"
            d_e = abs(shot.energy - mini.energy) / abs(mini.energy)
            d_l2 = min(l2_distance(shot.state, mini.state),
                       l2_distance(shot.state, -mini.state)) / math.sqrt(mini.mass)
            worst_e, worst_l2 = max(worst_e, d_e), max(worst_l2, d_l2)
            assert d_e <= 1e-4, f"{name} omega={shot.omega}: dE={d_e}"
            assert d_l2 <= 1e-3, f"{name} omega={shot.omega}: dL2={d_l2}"
        c.note(f"worst rel dE {worst_e:.2e}, rel dL2 {worst_l2:.2e}")


def test_shooting_contract(cross):
    pairs, _ = cross
    with Criterion(9, "shooting profile contract", 120.0) as c:
        worst_n = worst_s = 0.0
        for (name, frac), (shot, _) in pairs.items():
            p = PRESETS[name].p
            u = sample_u(shot.state)
            assert np.all(u > 0), f"{name} {frac}: not positive"
            assert np.all(np.diff(u) < 0), f"{name} {frac}: not decreasing"
            nehari = abs(shot.h_alpha + shot.omega * shot.mass + shot.lp_p) / shot.lp_p
            s = action(shot.state, shot.omega)
            s_ref = -(p - 2) / (2 * p) * shot.lp_p
            rel_s = abs(s - s_ref) / abs(s_ref)
            worst_n, worst_s = max(worst_n, nehari), max(worst_s, rel_s)
        c.note(f"Nehari rel {worst_n:.2e}, action identity rel {worst_s:.2e}")
        assert worst_n <= 1e-6 and worst_s <= 1e-6


def test_ground_state_structure(cross, sweeps):
    with Criterion(7, "ground-state structure on every solve", 120.0) as c:
        assert len(SOLVES) >= 40
        worst = 0.0
        for res in SOLVES:
            assert res.converged
            assert abs(res.charge) > OPTS.charge_floor
            assert regular_mass(res.state) > 0
            r = el_residual(res.state, res.omega)
            worst = max(worst, r)
        c.note(f"{len(SOLVES)} solves, worst EL residual {worst:.2e}")
        assert worst <= 1e-8


def test_negative_controls():
    with Criterion(10, "negative controls", 5.0) as c:
        failing = set()
        for name, (check, fixture, expected) in NEGATIVE_CONTROLS.items():
            out = check(fixture())
            assert out.status == expected, f"{name}: {out.status}"
            if out.status == "fail":
                failing.add(check.__name__)
        params = PRESETS["3d-canonical"]
        out = check_cross_consistency(params, [0.6 * params.abs_ell],
                                      perturb=PERTURBED_AMPLITUDE)
        assert out.status == "fail"
        failing.add(check_cross_consistency.__name__)
        expected_checks = {check_negativity_and_monotonicity.__name__,
                           check_small_mass_limit.__name__,
                           check_multiplier_window.__name__,
                           check_cross_consistency.__name__}
        assert failing == expected_checks
        c.note(f"{len(NEGATIVE_CONTROLS) + 1} fixtures, {len(failing)} checks fail as intended")

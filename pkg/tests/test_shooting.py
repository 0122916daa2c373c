import math

import numpy as np
import pytest

from pointnls.model import PRESETS, DomainError, PhysicalParams, bessel_k0, beta
from pointnls.functionals import action, el_residual
from pointnls.shooting import (
    NearOriginProfile,
    ShootingConfig,
    boundary_condition_residual,
    extract_charge,
    solve_action,
)

P3 = PRESETS["3d-canonical"]
P2 = PRESETS["2d-canonical"]


class TestExtraction:
    @pytest.mark.parametrize("r", [1e-4, 1e-5])
    def test_green_3d(self, r):
        # G_lam = 1/(4 pi r) - sqrt(lam)/(4 pi) + O(r): q = 1, c = -sqrt(lam)/4pi
        lam = 1.0
        u = math.exp(-r) / (4 * math.pi * r)
        du = -u * (1.0 + 1.0 / r)
        q, c = extract_charge(NearOriginProfile(r, u, du, omega=lam), P3)
        assert q == pytest.approx(1.0, rel=1e-8)
        assert c == pytest.approx(-1.0 / (4 * math.pi), abs=1e-8)
        # lam = |ell| makes beta vanish, so G satisfies the boundary condition
        assert beta(P3, lam) == pytest.approx(0.0, abs=1e-15)
        assert abs(boundary_condition_residual(NearOriginProfile(r, u, du, omega=lam), P3)) < 1e-8

    def test_green_2d(self):
        lam = P2.abs_ell
        k = math.sqrt(lam)
        r = 1e-6
        u = bessel_k0(k * r) / (2 * math.pi)
        h = 1e-6 * r
        du = (bessel_k0(k * (r + h)) - bessel_k0(k * (r - h))) / (4 * math.pi * h)
        q, c = extract_charge(NearOriginProfile(r, u, du), P2)
        assert q == pytest.approx(1.0, rel=1e-6)
        assert abs(boundary_condition_residual(NearOriginProfile(r, u, du), P2)) < 1e-6

    def test_wrong_alpha_nonzero(self):
        other = PhysicalParams(3, -0.3, 2.5)
        r = 1e-4
        u = math.exp(-r) / (4 * math.pi * r)
        du = -u * (1.0 + 1.0 / r)
        res = boundary_condition_residual(NearOriginProfile(r, u, du, omega=1.0), other)
        assert res == pytest.approx(-1.0 / (4 * math.pi) + 0.3, rel=1e-6)

    def test_regular_profile_rejected(self):
        # a smooth profile has no charge to normalize by
        with pytest.raises(DomainError):
            boundary_condition_residual(NearOriginProfile(1e-4, 1.0, 0.0), P3)

    def test_bad_profile(self):
        with pytest.raises(DomainError):
            extract_charge(NearOriginProfile(0.0, 1.0, 0.0), P3)
        with pytest.raises(DomainError):
            extract_charge(NearOriginProfile(1e-3, float("nan"), 0.0), P3)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(omega=0.0), dict(omega=-1.0), dict(omega=0.5, ode_tol=0.0),
                                    dict(omega=0.5, r_start=1.0), dict(omega=0.5, r_match=2.0),
                                    dict(omega=0.5, bisect_tol=-1.0)])
    def test_invalid(self, kw):
        with pytest.raises(DomainError):
            ShootingConfig(**kw)

    @pytest.mark.parametrize("params", [P2, P3], ids=["2d", "3d"])
    def test_outside_window(self, params):
        with pytest.raises(DomainError):
            solve_action(params, ShootingConfig(1.01 * params.abs_ell))

    def test_r_match_above_first_node(self):
        with pytest.raises(DomainError):
            solve_action(P3, ShootingConfig(0.5, r_match=0.1))


@pytest.fixture(scope="module")
def shots():
    out = {}
    for name, params in PRESETS.items():
        for frac in (0.3, 0.6, 0.9):
            out[name, frac] = solve_action(params, ShootingConfig(frac * params.abs_ell))
    return out


@pytest.mark.parametrize("name", sorted(PRESETS))
@pytest.mark.parametrize("frac", [0.3, 0.6, 0.9])
def test_profile_shape(shots, name, frac):
    res = shots[name, frac]
    assert res.converged, res.message
    assert res.extra["positive"] and res.extra["decreasing"]
    assert res.charge > 0
    assert res.extra["monotone_bracket"]


@pytest.mark.parametrize("name", sorted(PRESETS))
@pytest.mark.parametrize("frac", [0.3, 0.6, 0.9])
def test_nehari_and_action(shots, name, frac):
    res, params = shots[name, frac], PRESETS[name]
    om = res.omega
    nehari = res.h_alpha + om * res.mass + res.lp_p
    assert abs(nehari) <= 1e-6 * res.lp_p
    s = action(res.state, om)
    assert s == pytest.approx(-(params.p - 2) / (2 * params.p) * res.lp_p, rel=1e-6)
    assert res.extra["pairing_omega"] == pytest.approx(om, rel=1e-6)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_mass_decreases_toward_threshold(shots, name):
    masses = [shots[name, f].mass for f in (0.3, 0.6, 0.9)]
    assert masses[0] > masses[1] > masses[2] > 0


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_el_residual_small(shots, name):
    res = shots[name, 0.6]
    assert res.residual <= 1e-6


@pytest.mark.xfail(strict=True, reason=(
    "the EL residual of the sampled shooting profile is limited by the "
    "sampling and differentiation of the ODE solution, about 100x ode_tol"))
def test_el_residual_within_ten_ode_tol():
    cfg = ShootingConfig(0.6 * P3.abs_ell)
    res = solve_action(P3, cfg)
    assert el_residual(res.state, cfg.omega) <= 10 * cfg.ode_tol


def test_deterministic():
    cfg = ShootingConfig(0.5 * P3.abs_ell)
    a, b = solve_action(P3, cfg), solve_action(P3, cfg)
    assert a.energy == b.energy and np.array_equal(a.state.phi, b.state.phi)

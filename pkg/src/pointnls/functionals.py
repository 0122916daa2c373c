"""Energy and action functionals with exact gradients of their discretizations.

All gradients here are derivatives of the *discrete* functionals built in
:mod:`pointnls.space`, so central differences of :func:`energy` agree with
:func:`gradient` to roundoff. The natural metric for the regular part is the
``H^1_lambda`` product ``||grad phi||^2 + lam ||phi||^2``; residual norms are
measured in its dual.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .model import DomainError, beta
from .space import (
    DecomposedState,
    _tail_rule,
    green_samples,
    sample_u,
    to_canonical,
)


@dataclass(frozen=True)
class GradientPair:
    """Gradient in ``(phi, q)`` coordinates.

    ``g_phi`` is L2-represented: the directional derivative along ``(d_phi, d_q)``
    is ``sum(w * g_phi * d_phi) + g_q * d_q`` with ``w`` the grid weights.
    """

    g_phi: np.ndarray
    g_q: float

    def pair(self, state: DecomposedState, d_phi, d_q) -> float:
        return float(state.grid.weights @ (self.g_phi * d_phi) + self.g_q * d_q)


@dataclass(frozen=True)
class _Terms:
    u: np.ndarray
    mass: float
    lp: float
    dirichlet: float
    phi_sq: float
    h_alpha: float
    energy: float
    # raw partial derivatives (not divided by weights)
    e_phi: np.ndarray | None = None
    e_q: float = 0.0
    m_phi: np.ndarray | None = None
    m_q: float = 0.0


def _terms(state: DecomposedState, derivatives: bool = False) -> _Terms:
    grid, lam, p = state.grid, state.lam, state.params.p
    g = green_samples(grid, lam)
    u = state.phi + state.q * g
    w = grid.weights
    t2 = _tail_rule(grid, 2.0)
    tp = _tail_rule(grid, p)
    au = np.abs(u)
    upm2 = au ** (p - 2.0)
    mass = float(w @ (u * u)) + t2.value(u[0], state.q, 2.0)
    lp = float(w @ (upm2 * au * au)) + tp.value(u[0], state.q, p)
    dirichlet = grid.dirichlet(state.phi)
    phi_sq = grid.integrate(state.phi**2)
    b = beta(state.params, lam)
    h = dirichlet + lam * (phi_sq - mass) + b * state.q**2
    energy = 0.5 * h + lp / p
    if not derivatives:
        return _Terms(u, mass, lp, dirichlet, phi_sq, h, energy)

    m_u = 2.0 * w * u
    m0, mq = t2.derivatives(u[0], state.q, 2.0)
    m_u[0] += m0
    l_u = p * w * upm2 * u
    l0, lq = tp.derivatives(u[0], state.q, p)
    l_u[0] += l0
    m_q = float(m_u @ g) + mq
    l_qtot = float(l_u @ g) + lq

    e_phi = grid.stiffness_apply(state.phi) + lam * w * state.phi
    e_phi[0] += lam * grid.core_volume * state.phi[0]
    e_phi += -0.5 * lam * m_u + l_u / p
    e_q = -0.5 * lam * m_q + l_qtot / p + b * state.q
    return _Terms(u, mass, lp, dirichlet, phi_sq, h, energy, e_phi, e_q, m_u, m_q)


def energy(state: DecomposedState) -> float:
    """``E(u) = h_alpha(u, u) / 2 + ||u||_p^p / p``."""
    return _terms(state).energy


def action(state: DecomposedState, omega: float) -> float:
    """``S_omega(u) = E(u) + omega ||u||^2 / 2``."""
    t = _terms(state)
    return t.energy + 0.5 * omega * t.mass


def gradient(state: DecomposedState) -> GradientPair:
    """Gradient of :func:`energy` in the coordinates of ``state``.

    At the canonical ``lam = |ell|`` the beta term drops out and
    ``g_phi = -Lap phi + lam phi - lam u + |u|^{p-2} u`` away from the first
    node.
    """
    t = _terms(state, derivatives=True)
    return GradientPair(t.e_phi / state.grid.weights, t.e_q)


def mass_gradient(state: DecomposedState) -> GradientPair:
    t = _terms(state, derivatives=True)
    return GradientPair(t.m_phi / state.grid.weights, t.m_q)


def multiplier(state: DecomposedState) -> float:
    """Lagrange multiplier ``omega = -(h_alpha + ||u||_p^p) / ||u||^2``."""
    t = _terms(state)
    if not t.mass > 0:
        raise DomainError("multiplier is undefined for a state of zero mass")
    return -(t.h_alpha + t.lp) / t.mass


class Preconditioner:
    """Banded ``H^1_lambda`` metric on the free nodes plus an L2-type weight for q.

    The outermost node is the truncation boundary and is not a degree of
    freedom.
    """

    def __init__(self, state: DecomposedState, g_norm_sq: float):
        grid, lam = state.grid, state.lam
        n = grid.count - 1
        c = grid.stiffness
        diag = np.zeros(grid.count)
        diag[:-1] += c
        diag[1:] += c
        diag += lam * grid.weights
        diag[0] += lam * grid.core_volume
        self.n = n
        self.ab = np.zeros((3, n))
        self.ab[0, 1:] = -c[: n - 1]
        self.ab[1] = diag[:n]
        self.ab[2, :-1] = -c[: n - 1]
        self.q_weight = lam * g_norm_sq

    def solve(self, r_phi, r_q):
        z = solve_banded((1, 1), self.ab, r_phi[: self.n], check_finite=False)
        return np.append(z, 0.0), r_q / self.q_weight

    def apply(self, v_phi, v_q):
        v = v_phi[: self.n]
        out = self.ab[1] * v
        out[:-1] += self.ab[0, 1:] * v[1:]
        out[1:] += self.ab[2, :-1] * v[:-1]
        return np.append(out, 0.0), v_q * self.q_weight


def _g_norm_sq(state):
    t = _tail_rule(state.grid, 2.0)
    g = green_samples(state.grid, state.lam)
    return float(state.grid.weights @ (g * g)) + t.value(g[0], 1.0, 2.0)


def preconditioner(state: DecomposedState) -> Preconditioner:
    return Preconditioner(state, _g_norm_sq(state))


def el_residual(state: DecomposedState, omega: float) -> float:
    """Dual norm of ``E'(u) + omega u`` divided by ``||u||``.

    Zero exactly at discrete critical points of the action (the truncation node
    excluded). Evaluated in canonical coordinates.
    """
    state = to_canonical(state)
    t = _terms(state, derivatives=True)
    if t.mass == 0.0:
        return 0.0
    r_phi = t.e_phi + 0.5 * omega * t.m_phi
    r_q = t.e_q + 0.5 * omega * t.m_q
    pre = preconditioner(state)
    z_phi, z_q = pre.solve(r_phi, r_q)
    val = float(r_phi[: pre.n] @ z_phi[: pre.n]) + r_q * z_q
    return math.sqrt(max(val, 0.0) / t.mass)


def summary(state: DecomposedState) -> dict:
    """Mass, energy, h_alpha, ``||u||_p^p`` and the multiplier in one pass."""
    t = _terms(state)
    omega = -(t.h_alpha + t.lp) / t.mass if t.mass > 0 else float("nan")
    return {"mass": t.mass, "energy": t.energy, "h_alpha": t.h_alpha, "lp_p": t.lp,
            "omega": omega}

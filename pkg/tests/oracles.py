"""Independent reference values for the test suite.

K0 is evaluated in extended precision with mpmath arithmetic only (no mpmath
Bessel routines): the ascending series for small and moderate x and the
asymptotic expansion for large x.
"""
from __future__ import annotations

import math

import mpmath as mp

EULER_DIGITS = "0.57721566490153286060651209008240243104215933593992358880976"
_SWITCH = 20.0


def k0_series(x, dps: int = 90):
    """K0(x) = -(log(x/2) + gamma) I0(x) + sum_k H_k (x^2/4)^k / (k!)^2."""
    with mp.workdps(dps):
        x = mp.mpf(x)
        y = x * x / 4
        term = mp.mpf(1)
        i0 = mp.mpf(1)
        tail = mp.mpf(0)
        harmonic = mp.mpf(0)
        k = 0
        while True:
            k += 1
            term = term * y / (k * k)
            harmonic += mp.mpf(1) / k
            i0 += term
            tail += harmonic * term
            if term < mp.mpf(10) ** (-dps) * i0:
                break
        return -(mp.log(x / 2) + mp.mpf(EULER_DIGITS)) * i0 + tail


def k0_asymptotic(x, dps: int = 40):
    """sqrt(pi/2x) e^{-x} sum_k (-1)^k ((2k-1)!!)^2 / (k! (8x)^k), optimally truncated."""
    with mp.workdps(dps):
        x = mp.mpf(x)
        total = mp.mpf(1)
        term = mp.mpf(1)
        k = 0
        while True:
            k += 1
            nxt = -term * (2 * k - 1) ** 2 / (k * 8 * x)
            if abs(nxt) >= abs(term) or abs(nxt) < mp.mpf(10) ** (-dps):
                break
            term = nxt
            total += term
        return mp.sqrt(mp.pi / (2 * x)) * mp.exp(-x) * total


def k0(x) -> float:
    return float(k0_series(x) if x <= _SWITCH else k0_asymptotic(x))


def ell(dim: int, alpha: float) -> float:
    with mp.workdps(40):
        if dim == 2:
            return float(-4 * mp.exp(-4 * mp.pi * mp.mpf(alpha) - 2 * mp.mpf(EULER_DIGITS)))
        return float(-(4 * mp.pi * mp.mpf(alpha)) ** 2)


def gaussian_mass_3d() -> float:
    # int exp(-r^2) d^3x
    return math.pi ** 1.5


def gaussian_dirichlet(dim: int, a: float = 0.5) -> float:
    """||grad exp(-a r^2)||^2 over R^dim."""
    # |grad|^2 = 4 a^2 r^2 exp(-2 a r^2); integrate with the r^{dim-1} measure
    with mp.workdps(30):
        surf = 2 * mp.pi if dim == 2 else 4 * mp.pi
        f = lambda r: 4 * a * a * r ** 2 * mp.exp(-2 * a * r * r) * r ** (dim - 1)
        return float(surf * mp.quad(f, [0, mp.inf]))


def green_lp_3d(lam: float, p: float) -> float:
    """||G_lam||_p^p in 3D: (4 pi)^{1-p} Gamma(3-p) / (p sqrt(lam))^{3-p}."""
    k = math.sqrt(lam)
    return (4 * math.pi) ** (1 - p) * math.gamma(3 - p) / (p * k) ** (3 - p)


def green_lp_2d(lam: float, p: float) -> float:
    """||G_lam||_p^p in 2D by extended-precision quadrature of K0^p."""
    with mp.workdps(30):
        k = mp.sqrt(lam)
        f = lambda r: (mp.besselk(0, k * r) / (2 * mp.pi)) ** p * 2 * mp.pi * r
        return float(mp.quad(f, [0, mp.mpf(1) / 1000, 1, 10, mp.inf]))

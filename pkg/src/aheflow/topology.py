"""Riemann-Roch numbers of ``E ⊗ L^k`` computed by Chern-Weil quadrature.

On the flat torus the Todd class is 1, so

    chi(k) = ∫ tr exp((i/2π)F + k omega) = r vol k^2 + k ∫ch1^omega + ∫ch2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import grid
from .bundle import chern_integrands, curvature


@dataclass(frozen=True)
class CharNumbers:
    """Coefficients of ``chi(k) = c2 k^2 + c1 k + c0`` and the slope."""

    c0: float
    c1: float
    c2: float
    slope: float
    degree: float
    rank: int
    vol: float

    def chi(self, k):
        return self.c2 * k * k + self.c1 * k + self.c0

    def normalized_constant(self):
        """``c0 / (r vol)``: the k-independent part of ``chi / (r vol)``."""
        return self.c0 / (self.rank * self.vol)

    def as_dict(self):
        return {
            "c0": self.c0,
            "c1": self.c1,
            "c2": self.c2,
            "slope": self.slope,
            "degree": self.degree,
            "rank": self.rank,
            "vol": self.vol,
        }


def integral_beta(degree):
    """Background coefficient giving ``c1(L_beta) = degree [omega]``.

    With ``g = I`` this makes ``chi(k) = r (k + degree)^2`` an integer.
    """
    return math.pi * degree


def char_numbers(m, F=None):
    """Characteristic numbers of the bundle carrying metric ``m``."""
    F = curvature(m) if F is None else F
    geometry = m.geometry
    ch1_omega, ch2 = chern_integrands(F)
    degree = float(np.real(grid.integrate_top(ch1_omega, geometry)))
    c0 = float(np.real(grid.integrate_top(ch2, geometry)))
    r = m.rank
    vol = geometry.vol
    return CharNumbers(
        c0=c0,
        c1=degree,
        c2=r * vol,
        slope=degree / (r * vol),
        degree=degree,
        rank=r,
        vol=vol,
    )


def euler_char(m, k, F=None):
    """``chi(X, E ⊗ L^k)`` for real ``k``."""
    return char_numbers(m, F).chi(k)


def slope(m, F=None):
    """``mu_E = ∫ch1^omega / (r vol)``; the constant of the Hermitian-Einstein equation."""
    return char_numbers(m, F).slope

"""Moment map density and the almost Hermitian-Einstein residual.

The residual is computed from the moment map (the exponential route):

    rho = k^{1-n} (n!/omega^n) (M - chi(k)/r * omega^n/n! I)
        = K(F) - mu_E I + S(k),

and, independently, from the explicit 1/k expansion on the flat base
(:func:`s_term_expansion`).  The two must agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import grid
from .bundle import (
    CURVATURE_SCALE,
    curvature,
    lambda_contract,
    wedge_top,
)
from .topology import char_numbers


def _is_inf(k):
    return k is None or (isinstance(k, float) and math.isinf(k)) or k == "inf"


def check_k(k):
    """Validate a polarization parameter; returns ``math.inf`` or a positive float."""
    if _is_inf(k):
        return math.inf
    k = float(k)
    if not k > 0:
        raise ValueError(f"k must be positive, got {k}")
    return k


@dataclass(eq=False)
class MomentDensity:
    """``[exp((i/2π)F + k omega I)]_top`` relative to the Euclidean volume."""

    M: np.ndarray
    k: float
    geometry: object

    def integral(self):
        """``∫ tr M``; equals ``chi(X, E ⊗ L^k)``."""
        tr = np.trace(self.M, axis1=-2, axis2=-1)
        return float(np.real(grid.integrate_top(tr, self.geometry)))


def moment(m, k, F=None):
    k = check_k(k)
    if math.isinf(k):
        raise ValueError("the moment density needs a finite k")
    F = curvature(m) if F is None else F
    geometry = m.geometry
    r = m.rank
    a = F.chern_form()
    M = (
        0.5 * wedge_top(a, a)
        + k * F.chern_omega()
        + (k * k * geometry.det_g) * np.eye(r)
    )
    return MomentDensity(M, k, geometry)


def residual(m, k, F=None):
    """``rho = K(F) - mu_E I + S(k)``; ``k = inf`` gives ``K(F) - mu_E I``."""
    k = check_k(k)
    F = curvature(m) if F is None else F
    geometry = m.geometry
    r = m.rank
    if math.isinf(k):
        mu = char_numbers(m, F).slope
        return lambda_contract(F) - mu * np.eye(r)
    if r == 1:
        return _line_residual(F, k, geometry)
    md = moment(m, k, F)
    chi = md.integral()
    scale = 1.0 / (k ** (geometry.n - 1) * geometry.det_g)
    # chi / (r vol) times omega^n / n!, relative to Euclidean volume
    return scale * (md.M - (chi / (r * geometry.vol)) * geometry.det_g * np.eye(r))


def _line_residual(F, k, geometry):
    # rank one: the same moment density with scalar products written out
    a = F.chern_form()[..., 0, 0]
    det = geometry.det_g
    M = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    M += k * F.chern_omega()[..., 0, 0]
    M += k * k * det
    chi = float(np.real(grid.integrate_top(M, geometry)))
    M -= chi * det / geometry.vol
    M *= 1.0 / (k * det)
    return M[..., None, None]


def s_term(m, k, F=None):
    """``S(k) = rho - (K(F) - mu_E I)``, of order 1/k."""
    F = curvature(m) if F is None else F
    return residual(m, k, F) - residual(m, math.inf, F)


def s_term_expansion(m, k, F=None):
    """``S(k)`` from the explicit rank-agnostic flat-base 1/k formula.

    ``S(k) = (1/k) ( (F̂^2 - F_{ik̄} F_{kī}) / 2π^2 - c0/(r vol) )``,
    indices raised with ``g``.  Independent of the moment density.
    """
    k = check_k(k)
    F = curvature(m) if F is None else F
    if math.isinf(k):
        return np.zeros(m.H.shape, dtype=complex)
    geometry = m.geometry
    Y = np.einsum("jk,...klab->...jlab", geometry.ginv, F.F)
    Fhat = np.einsum("...jjab->...ab", Y)
    FF = np.einsum("...jkab,...kjbc->...ac", Y, Y)
    quad = (Fhat @ Fhat - FF) * (CURVATURE_SCALE ** 2 / 2.0)
    cn = char_numbers(m, F)
    return (quad - cn.normalized_constant() * np.eye(m.rank)) / k


@dataclass(eq=False)
class Terms:
    """Everything derived from one metric at one ``k``, computed once."""

    F: object
    K: np.ndarray
    mu: float
    chars: object
    rho: np.ndarray

    @property
    def S(self):
        return self.rho - (self.K - self.mu * np.eye(self.rho.shape[-1]))


def evaluate(m, k):
    """Curvature, contraction, slope and residual of ``m`` in one pass."""
    k = check_k(k)
    F = curvature(m)
    chars = char_numbers(m, F)
    K = lambda_contract(F)
    r = m.rank
    if math.isinf(k):
        rho = K - chars.slope * np.eye(r)
    else:
        rho = residual(m, k, F)
    return Terms(F=F, K=K, mu=chars.slope, chars=chars, rho=rho)


def stage_residual(m, k):
    """Just ``rho``, skipping the bookkeeping of :func:`evaluate` for finite ``k``."""
    k = check_k(k)
    if math.isinf(k):
        return evaluate(m, k).rho
    return residual(m, k, curvature(m))

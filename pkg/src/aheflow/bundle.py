"""Hermitian metrics, Chern curvature and the (1,1)-form algebra.

Conventions
-----------
A matrix-valued (1,1)-form ``A`` is stored by its *omega-normalized*
components: ``A = (i/2) A[k, j] dz^j ^ dz̄^k``, array shape
``lattice + (2, 2, r, r)``.  In these components ``omega`` itself is ``g``.

The curvature is stored by its plain components ``F = F[k, j] dz^j ^ dz̄^k``
with ``F[k, j] = beta g[k, j] I - d_{k̄}(H^{-1} d_j H)``, so the Chern form
``(i/2π)F`` has omega-normalized components ``F / π``.  For a line bundle with
``H = exp(u)`` this gives ``K(F) = -Δu / 2π``: the contraction is a
*negative* Laplacian and the flow ``u' = -K(F)`` is a forward heat equation.

Endomorphisms are self-adjoint for ``H`` when ``H A`` is a Hermitian matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _linalg, grid
from ._linalg import dagger, hermitian_part
from .grid import TorusGeometry

CURVATURE_SCALE = 1.0 / math.pi  # (i/2π) F  ->  omega-normalized components
C_LAPLACE = 1.0 / (2.0 * math.pi)  # K(F) = -C_LAPLACE * Δ log H for r = 1


class PositivityError(ValueError):
    """A metric failed to be positive definite somewhere on the lattice."""

    def __init__(self, message, index=None, margin=None):
        super().__init__(message)
        self.index = index
        self.margin = margin


def min_eigenvalue(H):
    """Pointwise smallest eigenvalue of a Hermitian matrix field."""
    return _linalg.eigvalsh(H)[..., 0]


@dataclass(eq=False)
class MetricField:
    """Hermitian metric ``H`` on ``E = L_beta ⊗ C^r`` over the torus.

    ``H`` has shape ``lattice + (r, r)``.  ``beta`` sets the scalar background
    curvature ``beta g I`` carrying ``c1(E)``; it must be real.
    """

    H: np.ndarray
    geometry: TorusGeometry
    beta: float = 0.0

    def __post_init__(self):
        H = np.asarray(self.H, dtype=complex)
        if H.ndim == 4:
            H = H[..., None, None]
        if H.ndim != 6 or H.shape[-1] != H.shape[-2]:
            raise ValueError(f"metric must have shape lattice+(r, r), got {H.shape}")
        if H.shape[:4] != self.geometry.shape:
            raise ValueError(
                f"metric lattice {H.shape[:4]} does not match grid {self.geometry.shape}"
            )
        if np.iscomplexobj(self.beta) and abs(np.imag(self.beta)) > 0:
            raise ValueError("beta must be real")
        self.H = H
        self.beta = float(np.real(self.beta))

    @property
    def rank(self):
        return self.H.shape[-1]

    @property
    def N(self):
        return self.geometry.N

    def with_H(self, H):
        return MetricField(H, self.geometry, self.beta)

    def hermiticity_defect(self):
        return float(np.abs(self.H - dagger(self.H)).max())

    def positivity_margin(self):
        return float(min_eigenvalue(self.H).min())

    def check_positive(self, margin=0.0):
        lam = min_eigenvalue(self.H)
        worst = np.unravel_index(np.argmin(lam), lam.shape)
        if not np.isfinite(lam).all() or lam[worst] <= margin:
            raise PositivityError(
                f"metric not positive definite at grid point {tuple(int(i) for i in worst)}"
                f" (smallest eigenvalue {lam[worst]:.3e})",
                index=worst,
                margin=float(lam[worst]),
            )
        return float(lam[worst])


def identity_metric(geometry, rank=1, beta=0.0):
    H = np.broadcast_to(np.eye(rank, dtype=complex), geometry.shape + (rank, rank))
    return MetricField(H.copy(), geometry, beta)


def hermitian_exp(X):
    """``exp`` of a Hermitian matrix field via batched eigendecomposition."""
    return _linalg.funm(*_linalg.eigh(X), np.exp)


def hermitian_log(H):
    lam, U = _linalg.eigh(H)
    if (lam <= 0).any():
        raise PositivityError("logarithm of a non-positive metric")
    return _linalg.funm(lam, U, np.log)


def hermitian_sqrt(H):
    return _linalg.funm(*_linalg.eigh(H), np.sqrt)


def mode_field(geometry, modes, rank=1):
    """Hermitian matrix field ``sum_m A_m * cos/sin(2π m.x)``.

    ``modes`` is an iterable of ``(wavevector, amplitude, kind)`` with
    ``amplitude`` an ``r x r`` Hermitian matrix (or a scalar for ``r = 1``).
    """
    X = np.zeros(geometry.shape + (rank, rank), dtype=complex)
    for wavevector, amplitude, kind in modes:
        A = np.atleast_2d(np.asarray(amplitude, dtype=complex))
        if A.shape != (rank, rank):
            raise ValueError(f"mode amplitude must be {rank}x{rank}, got {A.shape}")
        if not np.allclose(A, A.conj().T):
            raise ValueError("mode amplitude must be Hermitian")
        X += grid.mode(geometry, wavevector, kind)[..., None, None] * A
    return X


def random_hermitian_field(geometry, rank=1, amplitude=0.1, band=2, seed=0):
    """Seeded bandlimited Hermitian field with sup norm ``amplitude``."""
    rng = np.random.default_rng(seed)
    N = geometry.N
    m = np.fft.fftfreq(N, d=1.0 / N)
    keep = np.abs(m) <= band
    keep[N // 2] = False
    mask = np.ones(geometry.shape, dtype=bool)
    for ax in range(4):
        mask = mask & keep.reshape([-1 if a == ax else 1 for a in range(4)])
    mask[0, 0, 0, 0] = False
    coeff = np.zeros(geometry.shape + (rank, rank), dtype=complex)
    n = int(mask.sum())
    coeff[mask] = rng.standard_normal((n, rank, rank)) + 1j * rng.standard_normal(
        (n, rank, rank)
    )
    X = hermitian_part(grid.ifft(coeff))
    if rank == 1:
        X = X.real.astype(complex)
    X *= amplitude / np.abs(X).max()
    return X


def exp_metric(geometry, X, beta=0.0, base=None):
    """Metric ``H = L exp(X) L^†`` with ``L L^† = base`` (identity by default)."""
    E = hermitian_exp(X)
    if base is not None:
        L = hermitian_sqrt(base)
        E = _linalg.mm(_linalg.mm(L, E), L)
    return MetricField(hermitian_part(E), geometry, beta)


# -- curvature ---------------------------------------------------------------


@dataclass(eq=False)
class CurvatureField:
    """Curvature components ``F[k, j]`` (shape ``lattice + (2, 2, r, r)``)."""

    F: np.ndarray
    geometry: TorusGeometry
    beta: float = 0.0

    @property
    def rank(self):
        return self.F.shape[-1]

    def chern_form(self):
        """Omega-normalized components of ``(i/2π) F``."""
        a = self.__dict__.get("_chern")
        if a is None:
            a = self.__dict__["_chern"] = self.F * CURVATURE_SCALE
        return a

    def chern_omega(self):
        """``wedge_omega`` of the Chern form (cached; used by several routes)."""
        w = self.__dict__.get("_chern_omega")
        if w is None:
            w = self.__dict__["_chern_omega"] = wedge_omega(self.chern_form(), self.geometry)
        return w


def _connection(m):
    """``theta_j = H^{-1} d_j H`` stacked on a new axis after the lattice."""
    geometry = m.geometry
    Hh = grid.fft(m.H)
    Hinv = _linalg.inv(m.H)
    theta = np.empty(m.H.shape[:4] + (2,) + m.H.shape[4:], dtype=complex)
    for j in range(2):
        dH = grid.ifft(Hh * grid._expand(geometry.holo_symbols[j], m.H))
        theta[:, :, :, :, j] = _linalg.mm(Hinv, dH)
    return theta


def curvature(m):
    """Chern curvature of a metric field.

    Raises :class:`PositivityError` naming the worst lattice point when ``H``
    is not positive definite.
    """
    geometry = m.geometry
    r = m.rank
    if r == 1:
        h = m.H[..., 0, 0].real
        if not h.min() > 0:
            m.check_positive()  # raises with the offending point
        u = np.log(h)
        F = grid.ddbar(u, geometry, scale=-1.0)[..., None, None]
    else:
        m.check_positive()
        theta = _connection(m)
        if geometry.dealias:
            theta = grid.dealias(theta, geometry)
        F = np.empty(m.H.shape[:4] + (2, 2, r, r), dtype=complex)
        for j in range(2):
            th = grid.fft(theta[:, :, :, :, j])
            for k in range(2):
                F[:, :, :, :, k, j] = grid.ifft(
                    th * grid._expand(-geometry.anti_symbols[k], th)
                )
    if m.beta:
        for a in range(r):
            F[..., a, a] += m.beta * geometry.g
    return CurvatureField(F, geometry, m.beta)


def covariant_holo(m, v, theta=None):
    """``∇_j v = d_j v + [theta_j, v]`` for an endomorphism field ``v``."""
    geometry = m.geometry
    out = np.empty(v.shape[:4] + (2,) + v.shape[4:], dtype=complex)
    if m.rank == 1:
        for j in range(2):
            out[:, :, :, :, j] = grid.deriv_holo(v, j, geometry)
        return out
    if theta is None:
        theta = _connection(m)
    for j in range(2):
        th = theta[:, :, :, :, j]
        out[:, :, :, :, j] = (
            grid.deriv_holo(v, j, geometry) + _linalg.mm(th, v) - _linalg.mm(v, th)
        )
    return out


def curvature_variation(m, v):
    """First variation of the curvature along ``H' = H v``.

    Returns ``dF[k, j] = -d_{k̄} ∇_j v``, i.e. minus the ``d̄ ∂_H`` operator of
    the flow.
    """
    geometry = m.geometry
    nabla = covariant_holo(m, v)
    out = np.empty(v.shape[:4] + (2, 2) + v.shape[4:], dtype=complex)
    for j in range(2):
        nh = grid.fft(nabla[:, :, :, :, j])
        for k in range(2):
            out[:, :, :, :, k, j] = -grid.ifft(
                nh * grid._expand(geometry.anti_symbols[k], nh)
            )
    return out


# -- contraction and wedge ---------------------------------------------------


def contract(A, geometry):
    """``g^{jk̄} A[k, j]`` for an omega-normalized (1,1)-form."""
    P = geometry.ginv
    out = 0
    for j in range(2):
        for k in range(2):
            if P[j, k] != 0:
                out = out + P[j, k] * A[..., k, j, :, :]
    return out


def lambda_contract(F, geometry=None):
    """Normalized contraction ``K(F) = (i/2π)F ^ omega / (omega^2/2)``."""
    geometry = geometry or F.geometry
    return contract(F.chern_form(), geometry)


def raw_contract(F, geometry=None):
    """Literal ``g^{jk̄} F_{k̄j}`` without the 1/2π normalization (diagnostic)."""
    geometry = geometry or F.geometry
    return contract(F.F, geometry)


def omega_form(geometry, rank=1):
    """Omega-normalized components of ``omega I``."""
    return geometry.g[:, :, None, None] * np.eye(rank)


def _product(X, Y, sym):
    if sym:
        return 0.5 * _linalg.anticommutator(X, Y)
    return _linalg.mm(X, Y)


def wedge_top(A, B, sym=True):
    """Top-degree coefficient (relative to Euclidean volume) of ``A ^ B``.

    Both arguments are omega-normalized (1,1)-forms with the two form axes
    immediately before the matrix axes.  Matrix products are symmetrized
    ``(XY + YX)/2`` unless ``sym`` is false.
    """
    same = A is B
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape[-1] != B.shape[-1]:
        raise ValueError(f"rank mismatch: {A.shape[-1]} vs {B.shape[-1]}")

    def c(X, k, j):
        return X[..., k, j, :, :]

    if same:
        # symmetrization is automatic for A ^ A
        ac = _linalg.anticommutator
        return ac(c(A, 0, 0), c(A, 1, 1)) - ac(c(A, 0, 1), c(A, 1, 0))
    return (
        _product(c(A, 0, 0), c(B, 1, 1), sym)
        + _product(c(A, 1, 1), c(B, 0, 0), sym)
        - _product(c(A, 0, 1), c(B, 1, 0), sym)
        - _product(c(A, 1, 0), c(B, 0, 1), sym)
    )


def wedge_omega(A, geometry):
    """``wedge_top(A, omega I)`` computed without matrix products."""
    g = geometry.g
    if g[0, 0] == 1 and g[1, 1] == 1:
        out = A[..., 0, 0, :, :] + A[..., 1, 1, :, :]
    else:
        out = A[..., 0, 0, :, :] * g[1, 1] + A[..., 1, 1, :, :] * g[0, 0]
    if g[1, 0] != 0:
        out = out - A[..., 0, 1, :, :] * g[1, 0] - A[..., 1, 0, :, :] * g[0, 1]
    return out


def chern_integrands(F):
    """Top-form coefficients of ``ch1 ^ omega`` and ``ch2``.

    ``ch1 = tr (i/2π)F`` and ``ch2 = tr((i/2π)F ^ (i/2π)F) / 2``.
    """
    a = F.chern_form()
    ch1_omega = _linalg.trace(F.chern_omega())
    tp = _linalg.trace_product
    ch2 = tp(a[..., 0, 0, :, :], a[..., 1, 1, :, :]) - tp(
        a[..., 0, 1, :, :], a[..., 1, 0, :, :]
    )
    return ch1_omega, ch2


def curvature_norm_sq(F, geometry=None):
    """Pointwise ``|F|^2 = tr_form tr_end (g^{-1}F g^{-1}F)`` (real for Chern F)."""
    geometry = geometry or F.geometry
    P = geometry.ginv
    X = F.F
    idx = [(j, k) for j in range(2) for k in range(2) if P[j, k] != 0]
    out = 0
    # sum over P[j,k] P[l,m] tr(F[k,l] F[m,j])
    for j, k in idx:
        for l, m in idx:
            out = out + (P[j, k] * P[l, m]) * _linalg.trace_product(
                X[..., k, l, :, :], X[..., m, j, :, :]
            )
    return np.real(out)

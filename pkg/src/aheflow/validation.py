"""Input validation helpers shared by the estimator, the config loader and the CLI."""

from __future__ import annotations

import math
import numbers

import numpy as np

from .bundle import MetricField
from .grid import ALLOWED_N, TorusGeometry
from .moment import check_k

__all__ = [
    "check_k",
    "check_positive",
    "check_geometry",
    "check_metric",
    "check_wavevector",
    "check_hermitian_amplitude",
]


def check_positive(name, value, allow_zero=False):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    ok = value >= 0 if allow_zero else value > 0
    if not ok or not math.isfinite(value):
        bound = "non-negative" if allow_zero else "positive"
        raise ValueError(f"{name} must be finite and {bound}, got {value}")
    return value


def check_geometry(N=16, g=None, normalize_volume=False, dealias=False):
    """Build a :class:`TorusGeometry`, optionally rescaling ``g`` to unit volume."""
    if isinstance(N, bool) or int(N) != N or int(N) not in ALLOWED_N:
        raise ValueError(f"N must be one of {ALLOWED_N}, got {N!r}")
    g = np.eye(2, dtype=complex) if g is None else np.asarray(g, dtype=complex)
    if g.shape != (2, 2):
        raise ValueError(f"g must be 2x2, got shape {g.shape}")
    if normalize_volume:
        det = np.linalg.det(g).real
        if det <= 0:
            raise ValueError("g must be positive definite")
        g = g / math.sqrt(det)
    return TorusGeometry(int(N), g, bool(dealias))


def check_metric(H, geometry=None, beta=0.0, hermitian_tol=1e-10):
    """Coerce ``H`` to a positive :class:`MetricField`.

    ``H`` may be a MetricField (returned unchanged) or an array of shape
    ``(N,)*4`` or ``(N,)*4 + (r, r)``; ``N`` is inferred when no geometry is
    given.
    """
    if isinstance(H, MetricField):
        H.check_positive()
        return H
    H = np.asarray(H)
    if H.ndim not in (4, 6):
        raise ValueError(f"metric must have 4 lattice axes (+2 matrix axes), got shape {H.shape}")
    if geometry is None:
        geometry = check_geometry(H.shape[0])
    if not np.all(np.isfinite(H)):
        raise ValueError("metric contains non-finite values")
    m = MetricField(H, geometry, float(beta))
    if m.hermiticity_defect() > hermitian_tol:
        raise ValueError(f"metric is not Hermitian (defect {m.hermiticity_defect():.3g})")
    m.check_positive()
    return m


def check_wavevector(w):
    w = tuple(w)
    if len(w) != 4 or not all(isinstance(c, numbers.Integral) and not isinstance(c, bool) for c in w):
        raise ValueError(f"wave vector must be four integers, got {w!r}")
    return w


def check_hermitian_amplitude(a, rank, tol=1e-12):
    """Scalar or ``rank x rank`` Hermitian amplitude as a complex matrix."""
    A = np.asarray(a, dtype=complex)
    if A.ndim == 0:
        A = A * np.eye(rank)
    if A.shape != (rank, rank):
        raise ValueError(f"amplitude must be a scalar or {rank}x{rank} matrix, got shape {A.shape}")
    if np.abs(A - A.conj().T).max() > tol:
        raise ValueError("mode amplitude must be Hermitian")
    return A

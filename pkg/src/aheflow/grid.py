"""Periodic spectral grid on the flat complex 2-torus.

The torus is the unit 4-cube with coordinates ``(x1, y1, x2, y2)``, all of
period one, and complex coordinates ``z_j = x_j + i y_j``. Fields are numpy
arrays whose first four axes are the lattice in that order; any trailing axes
(matrix indices, form indices) ride along untouched.

The Kähler form is ``omega = (i/2) g_{k̄j} dz^j ^ dz̄^k`` with a constant
Hermitian positive matrix ``g`` stored as ``g[k, j]``.  With ``g = I`` this is
``dx1^dy1 + dx2^dy2`` and the volume ``∫ omega^2/2`` is one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft

N_COMPLEX = 2
GRID_AXES = (0, 1, 2, 3)
ALLOWED_N = (4, 8, 16, 32, 64)

_workers = 1


def set_workers(n):
    """Set the number of threads used by the FFTs (``-1`` for all cores)."""
    global _workers
    _workers = int(n)


@dataclass(frozen=True, eq=False)
class TorusGeometry:
    """Flat Kähler structure on the periodic lattice.

    Parameters
    ----------
    N : int
        Grid points per real axis, a power of two.
    g : array_like, optional
        2x2 Hermitian positive definite Kähler coefficients ``g[k, j]``.
        Defaults to the identity, which gives unit volume.
    dealias : bool
        If true, quadratic products inside the curvature are truncated with
        the 2/3 rule.
    """

    N: int = 16
    g: np.ndarray = field(default_factory=lambda: np.eye(2, dtype=complex))
    dealias: bool = False

    def __post_init__(self):
        if self.N not in ALLOWED_N:
            raise ValueError(f"N must be one of {ALLOWED_N}, got {self.N}")
        g = np.asarray(self.g, dtype=complex)
        if g.shape != (2, 2):
            raise ValueError(f"g must be 2x2, got shape {g.shape}")
        if not np.allclose(g, g.conj().T, atol=1e-13):
            raise ValueError("g must be Hermitian")
        if np.linalg.eigvalsh(g).min() <= 0:
            raise ValueError("g must be positive definite")
        object.__setattr__(self, "g", g)

    @property
    def n(self):
        return N_COMPLEX

    @cached_property
    def ginv(self):
        """Inverse metric ``g^{jk̄}`` stored as ``ginv[j, k]``."""
        return np.linalg.inv(self.g)

    @cached_property
    def det_g(self):
        return float(np.linalg.det(self.g).real)

    @property
    def vol(self):
        """Volume ``∫ omega^2 / 2!`` (closed form, periods one)."""
        return self.det_g

    @property
    def shape(self):
        return (self.N,) * 4

    @cached_property
    def coords(self):
        """Open-grid coordinates ``(x1, y1, x2, y2)`` as broadcastable arrays."""
        x = np.arange(self.N) / self.N
        return tuple(
            x.reshape([-1 if a == ax else 1 for a in range(4)]) for ax in range(4)
        )

    @cached_property
    def wavenumbers(self):
        """Integer wavenumbers per axis with the Nyquist mode kept."""
        m = np.fft.fftfreq(self.N, d=1.0 / self.N)
        return tuple(
            m.reshape([-1 if a == ax else 1 for a in range(4)]) for ax in range(4)
        )

    @cached_property
    def _first_derivative_wavenumbers(self):
        # Nyquist zeroed: keeps d(conj f) = conj(d f) exact.
        m = np.fft.fftfreq(self.N, d=1.0 / self.N)
        m[self.N // 2] = 0.0
        return tuple(
            m.reshape([-1 if a == ax else 1 for a in range(4)]) for ax in range(4)
        )

    @cached_property
    def holo_symbols(self):
        """Fourier symbols of ``d_j = (d_{x_j} - i d_{y_j}) / 2``."""
        m = self._first_derivative_wavenumbers
        return tuple(
            np.pi * (1j * m[2 * j] + m[2 * j + 1]) for j in range(N_COMPLEX)
        )

    @cached_property
    def anti_symbols(self):
        """Fourier symbols of ``d_{k̄} = (d_{x_k} + i d_{y_k}) / 2``."""
        m = self._first_derivative_wavenumbers
        return tuple(
            np.pi * (1j * m[2 * k] - m[2 * k + 1]) for k in range(N_COMPLEX)
        )

    @cached_property
    def laplacian_symbol(self):
        """Symbol of ``2 g^{jk̄} d_j d_{k̄}``; non-positive."""
        s = 0
        for j in range(2):
            for k in range(2):
                s = s + 2 * self.ginv[j, k] * self.holo_symbols[j] * self.anti_symbols[k]
        return s.real if np.allclose(s.imag, 0) else s

    @cached_property
    def packed_ddbar_symbols(self):
        """Symbols for real input: ``d_0̄d_0 + i d_1̄d_1`` (both real) and ``d_0̄d_1``."""
        s00 = self.anti_symbols[0] * self.holo_symbols[0]
        s11 = self.anti_symbols[1] * self.holo_symbols[1]
        return s00.real + 1j * s11.real, self.anti_symbols[0] * self.holo_symbols[1]

    @cached_property
    def dealias_mask(self):
        m = self.wavenumbers
        cut = self.N / 3.0
        mask = np.ones(self.shape, dtype=bool)
        for ax in range(4):
            mask = mask & (np.abs(m[ax]) < cut)
        return mask


def _expand(sym, f):
    return sym.reshape(sym.shape + (1,) * (f.ndim - 4))


def fft(f):
    return scipy.fft.fftn(f, axes=GRID_AXES, workers=_workers)


def ifft(fh):
    return scipy.fft.ifftn(fh, axes=GRID_AXES, workers=_workers)


def _check_field(f, geometry):
    if f.shape[:4] != geometry.shape:
        raise ValueError(
            f"field lattice shape {f.shape[:4]} does not match grid {geometry.shape}"
        )


def _check_axis(j):
    if j not in (0, 1):
        raise ValueError(f"complex axis index must be 0 or 1, got {j}")


def deriv_holo(f, j, geometry):
    """Holomorphic derivative ``d_j f`` (``j`` is 0 or 1)."""
    _check_axis(j)
    f = np.asarray(f)
    _check_field(f, geometry)
    return ifft(fft(f) * _expand(geometry.holo_symbols[j], f))


def deriv_anti(f, k, geometry):
    """Antiholomorphic derivative ``d_{k̄} f`` (``k`` is 0 or 1)."""
    _check_axis(k)
    f = np.asarray(f)
    _check_field(f, geometry)
    return ifft(fft(f) * _expand(geometry.anti_symbols[k], f))


def laplacian(f, geometry):
    """``Δ f = 2 g^{jk̄} d_j d_{k̄} f``; non-positive spectrum."""
    f = np.asarray(f)
    _check_field(f, geometry)
    return ifft(fft(f) * _expand(geometry.laplacian_symbol, f))


def ddbar(f, geometry, scale=1.0):
    """All mixed second derivatives ``d_{k̄} d_j f`` stacked as ``[..., k, j]``.

    The two form axes are inserted right after the lattice axes.  The result
    is multiplied by the real ``scale``.
    """
    f = np.asarray(f)
    _check_field(f, geometry)
    if f.ndim == 4 and np.isrealobj(f):
        return _ddbar_real(f, geometry, scale)
    fh = fft(f)
    out = np.empty(f.shape[:4] + (2, 2) + f.shape[4:], dtype=complex)
    for k in range(2):
        for j in range(2):
            sym = scale * geometry.anti_symbols[k] * geometry.holo_symbols[j]
            out[:, :, :, :, k, j] = ifft(fh * _expand(sym, f))
    return out


def _ddbar_real(f, geometry, scale=1.0):
    # For real f the diagonal entries are real, so two of them share one
    # complex transform; [1, 0] is the conjugate of [0, 1].
    fh = fft(f)
    diag_sym, off_sym = geometry.packed_ddbar_symbols
    if scale != 1.0:
        fh *= scale
    diag = ifft(fh * diag_sym)
    off = ifft(fh * off_sym)
    out = np.empty(f.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = diag.real
    out[..., 1, 1] = diag.imag
    out[..., 0, 1] = off
    out[..., 1, 0] = np.conj(off)
    return out


def dealias(f, geometry):
    """Apply the 2/3-rule truncation to a field."""
    f = np.asarray(f)
    return ifft(fft(f) * _expand(geometry.dealias_mask, f))


def integrate_top(f, geometry):
    """``∫ f dV`` for a top-form coefficient ``f`` relative to Euclidean volume.

    Trailing axes are preserved, so a matrix field integrates to a matrix.
    """
    f = np.asarray(f)
    _check_field(f, geometry)
    # coordinate volume is one
    return f.mean(axis=GRID_AXES)


def integrate_volume(f, geometry):
    """``∫ f omega^2/2`` for a function ``f``."""
    return integrate_top(f, geometry) * geometry.det_g


def fourier_coefficients(f, geometry):
    """Normalized Fourier coefficients so that ``f = sum c_m exp(2 pi i m.x)``."""
    return fft(f) / geometry.N ** 4


def mode(geometry, wavevector, kind="exp"):
    """Single Fourier mode ``exp / cos / sin (2 pi m.x)`` on the grid."""
    m = np.asarray(wavevector, dtype=float)
    if m.shape != (4,):
        raise ValueError("wavevector must have four integer entries")
    phase = 2 * np.pi * sum(m[a] * geometry.coords[a] for a in range(4))
    phase = np.broadcast_to(phase, geometry.shape)
    if kind == "exp":
        return np.exp(1j * phase)
    if kind == "cos":
        return np.cos(phase)
    if kind == "sin":
        return np.sin(phase)
    raise ValueError(f"unknown mode kind {kind!r}")


# -- snapshot files ---------------------------------------------------------

SNAPSHOT_MAGIC = "aheflow-field"


def write_snapshot(path, values, kind, t=0.0, **extra):
    """Write a field snapshot: one JSON header line, then raw ``<c16`` data.

    Matrices are stored row-major within each lattice point, lattice points in
    row-major order over ``(x1, y1, x2, y2)``.
    """
    values = np.asarray(values, dtype=complex)
    N = values.shape[0]
    rank = values.shape[-1] if values.ndim > 4 else 1
    header = {
        "format": SNAPSHOT_MAGIC,
        "version": 1,
        "kind": kind,
        "rank": rank,
        "N": N,
        "t": float(t),
        "shape": list(values.shape),
    }
    header.update(extra)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(values).astype("<c16").tobytes())


def read_snapshot(path):
    """Read a snapshot written by :func:`write_snapshot`; returns ``(header, values)``."""
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl].decode())
    if header.get("format") != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a field snapshot")
    shape = tuple(header["shape"])
    data = np.frombuffer(raw[nl + 1:], dtype="<c16")
    if data.size != int(np.prod(shape)):
        raise ValueError(
            f"{path}: expected {int(np.prod(shape))} values, found {data.size}"
        )
    return header, data.reshape(shape).astype(complex)

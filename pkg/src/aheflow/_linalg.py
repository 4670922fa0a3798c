"""Batched small-matrix kernels.

numpy's LAPACK-backed batched ``eigh``/``inv`` pay per-matrix overhead that
dominates for 2x2 blocks on 10^5-10^6 lattice points; ranks 1 and 2 use
closed forms here.
"""

import numpy as np


def dagger(A):
    return np.conj(np.swapaxes(A, -1, -2))


def hermitian_part(A):
    if A.shape[-2:] == (1, 1):
        return A.real.astype(complex)
    return 0.5 * (A + dagger(A))


def eigh(H):
    """Ascending eigenvalues and unitary eigenvectors of a Hermitian field."""
    r = H.shape[-1]
    if r == 1:
        return H[..., 0].real, np.ones_like(H)
    if r != 2:
        return np.linalg.eigh(hermitian_part(H))
    a = H[..., 0, 0].real
    d = H[..., 1, 1].real
    b = 0.5 * (H[..., 0, 1] + np.conj(H[..., 1, 0]))
    half = 0.5 * (a - d)
    mean = 0.5 * (a + d)
    babs = np.abs(b)
    delta = np.hypot(half, babs)
    theta = np.arctan2(babs, half)
    # subnormal |b| would overflow the complex division; any phase will do there
    ok = babs >= np.finfo(float).tiny
    phase = np.where(ok, b / np.where(ok, babs, 1.0), 1.0)
    c = np.cos(0.5 * theta)
    s = np.sin(0.5 * theta)
    lam = np.stack([mean - delta, mean + delta], axis=-1)
    U = np.empty(H.shape, dtype=complex)
    U[..., 0, 0] = -phase * s
    U[..., 1, 0] = c
    U[..., 0, 1] = phase * c
    U[..., 1, 1] = s
    return lam, U


def eigvalsh(H):
    r = H.shape[-1]
    if r == 1:
        return H[..., 0].real
    if r == 2:
        a = H[..., 0, 0].real
        d = H[..., 1, 1].real
        b = 0.5 * (H[..., 0, 1] + np.conj(H[..., 1, 0]))
        delta = np.hypot(0.5 * (a - d), np.abs(b))
        mean = 0.5 * (a + d)
        return np.stack([mean - delta, mean + delta], axis=-1)
    return np.linalg.eigvalsh(hermitian_part(H))


def inv(A):
    r = A.shape[-1]
    if r == 1:
        return 1.0 / A
    if r != 2:
        return np.linalg.inv(A)
    a, b, c, d = A[..., 0, 0], A[..., 0, 1], A[..., 1, 0], A[..., 1, 1]
    det = a * d - b * c
    out = np.empty_like(A, dtype=complex)
    out[..., 0, 0] = d / det
    out[..., 0, 1] = -b / det
    out[..., 1, 0] = -c / det
    out[..., 1, 1] = a / det
    return out


def mm(A, B):
    """Batched matrix product; explicit for 1x1 and 2x2 blocks."""
    if A.shape[-2:] == (1, 1) and B.shape[-2:] == (1, 1):
        return A * B
    if A.shape[-1] != 2 or B.shape[-2:] != (2, 2) or A.shape[-2] != 2:
        return A @ B
    a00, a01, a10, a11 = A[..., 0, 0], A[..., 0, 1], A[..., 1, 0], A[..., 1, 1]
    b00, b01, b10, b11 = B[..., 0, 0], B[..., 0, 1], B[..., 1, 0], B[..., 1, 1]
    out = np.empty(np.broadcast_shapes(A.shape, B.shape), dtype=np.result_type(A, B))
    out[..., 0, 0] = a00 * b00 + a01 * b10
    out[..., 0, 1] = a00 * b01 + a01 * b11
    out[..., 1, 0] = a10 * b00 + a11 * b10
    out[..., 1, 1] = a10 * b01 + a11 * b11
    return out


def anticommutator(X, Y):
    """``XY + YX``; for 2x2 blocks via Cayley-Hamilton, without matrix products."""
    r = X.shape[-1]
    if r == 1:
        return 2.0 * X * Y
    if r != 2:
        return mm(X, Y) + mm(Y, X)
    tx = X[..., 0, 0] + X[..., 1, 1]
    ty = Y[..., 0, 0] + Y[..., 1, 1]
    out = tx[..., None, None] * Y + ty[..., None, None] * X
    c = trace_product(X, Y) - tx * ty
    out[..., 0, 0] += c
    out[..., 1, 1] += c
    return out


def funm(lam, U, f):
    """``U f(lam) U^†`` for an eigendecomposition from :func:`eigh`."""
    if U.shape[-1] == 1:
        return f(lam)[..., None].astype(complex)
    return mm(U * f(lam)[..., None, :], dagger(U))


def logdet(H):
    """Pointwise ``log det H`` of a positive Hermitian field (real)."""
    r = H.shape[-1]
    if r == 1:
        return np.log(H[..., 0, 0].real)
    if r == 2:
        return np.log((H[..., 0, 0] * H[..., 1, 1] - H[..., 0, 1] * H[..., 1, 0]).real)
    return np.linalg.slogdet(H)[1]


def trace(X):
    if X.shape[-2:] == (1, 1):
        return X[..., 0, 0]
    return np.trace(X, axis1=-2, axis2=-1)


def trace_product(X, Y):
    """``tr(X Y)`` without forming the product."""
    if X.shape[-2:] == (1, 1) and Y.shape[-2:] == (1, 1):
        return X[..., 0, 0] * Y[..., 0, 0]
    return np.einsum("...ab,...ba->...", X, Y)

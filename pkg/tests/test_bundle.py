import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aheflow import bundle, grid
from aheflow.bundle import (
    C_LAPLACE,
    MetricField,
    PositivityError,
    curvature,
    curvature_norm_sq,
    curvature_variation,
    exp_metric,
    identity_metric,
    lambda_contract,
    mode_field,
    wedge_omega,
    wedge_top,
)
from aheflow.grid import TorusGeometry

from conftest import hermitian, line_metric, rank2_metric

G_SKEW = np.array([[1.3, 0.2 + 0.1j], [0.2 - 0.1j, 0.8]])


def _random_unitary(seed):
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    Q, R = np.linalg.qr(Z)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def test_single_mode_curvature_is_analytic(geo8):
    a = 0.4
    m = line_metric(geo8, [((1, 0, 0, 0), a, "cos")])
    F = curvature(m)
    c = grid.mode(geo8, (1, 0, 0, 0), "cos")
    np.testing.assert_allclose(F.F[..., 0, 0, 0, 0], np.pi ** 2 * a * c, atol=1e-11)
    np.testing.assert_allclose(F.F[..., 1, 1, 0, 0], 0, atol=1e-11)
    np.testing.assert_allclose(F.F[..., 0, 1, 0, 0], 0, atol=1e-11)
    np.testing.assert_allclose(lambda_contract(F)[..., 0, 0], np.pi * a * c, atol=1e-11)


def test_line_contraction_is_minus_laplacian_of_log(geo8):
    geometry = TorusGeometry(8, g=G_SKEW)
    m = line_metric(geometry, [((1, 0, 0, 0), 0.3, "cos"), ((0, 1, 1, 0), 0.2, "sin")])
    K = lambda_contract(curvature(m))[..., 0, 0]
    u = np.log(m.H[..., 0, 0].real)
    np.testing.assert_allclose(K, -C_LAPLACE * grid.laplacian(u, geometry), atol=1e-11)


def test_background_beta_adds_constant_curvature(geo4):
    m = identity_metric(geo4, 2, beta=0.7)
    F = curvature(m)
    expected = 0.7 * np.einsum("kj,ab->kjab", geo4.g, np.eye(2))
    np.testing.assert_allclose(F.F, np.broadcast_to(expected, F.F.shape), atol=1e-14)


def _diag_gap(N):
    geometry = TorusGeometry(N)
    modes = [((1, 0, 0, 0), 0.3, "cos"), ((0, 0, 1, 1), 0.2, "sin")]
    line = line_metric(geometry, modes, beta=0.3)
    other = line_metric(geometry, [((0, 1, 0, 0), 0.25, "cos")], beta=0.3)
    H = np.zeros(geometry.shape + (2, 2), dtype=complex)
    H[..., 0, 0] = line.H[..., 0, 0]
    H[..., 1, 1] = other.H[..., 0, 0]
    F2 = curvature(MetricField(H, geometry, 0.3)).F
    assert np.abs(F2[..., 0, 1]).max() < 1e-12
    return max(
        np.abs(F2[..., 0, 0] - curvature(line).F[..., 0, 0]).max(),
        np.abs(F2[..., 1, 1] - curvature(other).F[..., 0, 0]).max(),
    )


def test_rank_one_routes_agree():
    # log route (r = 1) against the connection route on a diagonal rank-two
    # metric; exp of a mode is not bandlimited, so they agree spectrally in N
    gaps = [_diag_gap(N) for N in (8, 16, 32)]
    assert gaps[0] < 1e-3 and gaps[1] < 1e-8 and gaps[2] < 1e-10
    assert gaps[1] < 1e-4 * gaps[0]


def test_curvature_is_gauge_covariant(geo8):
    m = rank2_metric(geo8, beta=0.2)
    U = _random_unitary(3)
    Hg = np.conj(U.T) @ m.H @ U
    F = curvature(m).F
    Fg = curvature(m.with_H(Hg)).F
    np.testing.assert_allclose(Fg, np.linalg.inv(U) @ F @ U, atol=1e-10)


def test_chern_form_is_H_self_adjoint():
    # H F[k, j] is Hermitian under the combined (form, matrix) adjoint
    m = rank2_metric(TorusGeometry(16))
    F = curvature(m).F
    HF = m.H[..., None, None, :, :] @ F
    HF_adj = np.conj(np.swapaxes(np.swapaxes(HF, -1, -2), 4, 5))
    np.testing.assert_allclose(HF, HF_adj, atol=1e-10)


def test_curvature_variation_matches_finite_difference(geo8):
    m = rank2_metric(geo8)
    v = mode_field(geo8, [((0, 1, 0, 0), hermitian(0.1, -0.2, 0.05 + 0.1j), "cos")], 2)
    eps = 1e-4
    Ep = bundle.hermitian_exp(eps * v)
    Em = bundle.hermitian_exp(-eps * v)
    Fp = curvature(m.with_H(m.H @ Ep)).F
    Fm = curvature(m.with_H(m.H @ Em)).F
    fd = (Fp - Fm) / (2 * eps)
    np.testing.assert_allclose(curvature_variation(m, v), fd, atol=1e-6)


def test_nonpositive_metric_raises_with_location(geo4):
    H = np.ones(geo4.shape)
    H[1, 2, 3, 0] = -0.5
    with pytest.raises(PositivityError) as info:
        curvature(MetricField(H, geo4))
    assert info.value.index == (1, 2, 3, 0)
    H2 = np.broadcast_to(np.eye(2), geo4.shape + (2, 2)).copy()
    H2[0, 0, 0, 1] = np.diag([1.0, 0.0])
    with pytest.raises(PositivityError):
        curvature(MetricField(H2, geo4))


def test_metric_field_validation(geo4):
    with pytest.raises(ValueError):
        MetricField(np.ones((8, 8, 8, 8)), geo4)
    with pytest.raises(ValueError):
        MetricField(np.ones(geo4.shape + (2, 3)), geo4)
    with pytest.raises(ValueError):
        MetricField(np.ones(geo4.shape), geo4, beta=1j)
    with pytest.raises(ValueError):
        mode_field(geo4, [((1, 0, 0, 0), np.array([[0, 1], [0, 0]]), "cos")], 2)


def test_curvature_norm_matches_einsum():
    geometry = TorusGeometry(16, g=G_SKEW)
    m = rank2_metric(geometry, beta=0.1)
    F = curvature(m)
    P = geometry.ginv
    ref = np.einsum("jk,lm,...klab,...mjba->...", P, P, F.F, F.F)
    np.testing.assert_allclose(curvature_norm_sq(F), ref.real, atol=1e-9)
    assert np.abs(ref.imag).max() < 1e-8


def test_wedge_omega_matches_wedge_top(geo4):
    geometry = TorusGeometry(4, g=G_SKEW)
    F = curvature(rank2_metric(geometry, beta=0.3))
    a = F.chern_form()
    np.testing.assert_allclose(
        wedge_omega(a, geometry), wedge_top(a, bundle.omega_form(geometry, 2)), atol=1e-13
    )


def test_wedge_top_of_omega_is_twice_det(geo4):
    geometry = TorusGeometry(4, g=G_SKEW)
    w = bundle.omega_form(geometry, 1)
    assert wedge_top(w, w)[0, 0] == pytest.approx(2 * np.linalg.det(G_SKEW).real)


def test_exp_metric_with_base(geo4):
    X = mode_field(geo4, [((1, 0, 0, 0), hermitian(0.2, 0.1, 0.1j), "cos")], 2)
    # L = exp(X / 4), so L exp(X) L = exp(3X / 2) as everything commutes
    base = exp_metric(geo4, 0.5 * X).H
    m = exp_metric(geo4, X, base=base)
    np.testing.assert_allclose(m.H, exp_metric(geo4, 1.5 * X).H, atol=1e-12)


def test_random_field_is_seeded_hermitian_and_bounded(geo8):
    X1 = bundle.random_hermitian_field(geo8, 2, 0.3, 2, seed=5)
    X2 = bundle.random_hermitian_field(geo8, 2, 0.3, 2, seed=5)
    X3 = bundle.random_hermitian_field(geo8, 2, 0.3, 2, seed=6)
    np.testing.assert_array_equal(X1, X2)
    assert np.abs(X1 - X3).max() > 0.01
    np.testing.assert_allclose(X1, np.conj(np.swapaxes(X1, -1, -2)), atol=1e-15)
    assert np.abs(X1).max() == pytest.approx(0.3)
    assert abs(grid.integrate_top(X1, geo8)).max() < 1e-14


hermitian_amp = st.tuples(
    st.floats(-0.3, 0.3), st.floats(-0.3, 0.3), st.floats(-0.2, 0.2), st.floats(-0.2, 0.2)
).map(lambda t: hermitian(t[0], t[1], t[2] + 1j * t[3]))
wavevectors = st.tuples(*[st.integers(-2, 2)] * 4)


@settings(max_examples=15, deadline=None)
@given(A=hermitian_amp, w=wavevectors, seed=st.integers(0, 1000), beta=st.floats(-1, 1))
def test_gauge_covariance_property(A, w, seed, beta):
    geometry = TorusGeometry(4)
    m = exp_metric(geometry, mode_field(geometry, [(w, A, "cos")], 2), beta)
    U = _random_unitary(seed)
    F = curvature(m).F
    Fg = curvature(m.with_H(np.conj(U.T) @ m.H @ U)).F
    np.testing.assert_allclose(Fg, np.conj(U.T) @ F @ U, atol=1e-9)


@settings(max_examples=15, deadline=None)
@given(A=hermitian_amp, B=hermitian_amp, w=wavevectors)
def test_wedge_top_symmetric_property(A, B, w):
    geometry = TorusGeometry(4)
    Fa = curvature(exp_metric(geometry, mode_field(geometry, [(w, A, "cos")], 2))).chern_form()
    Fb = curvature(exp_metric(geometry, mode_field(geometry, [((1, 1, 0, 0), B, "sin")], 2))).chern_form()
    np.testing.assert_allclose(wedge_top(Fa, Fb), wedge_top(Fb, Fa), atol=1e-12)
    np.testing.assert_allclose(wedge_top(Fa, Fa), wedge_top(Fa, Fa.copy()), atol=1e-12)

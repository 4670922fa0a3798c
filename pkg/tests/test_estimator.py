import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from aheflow import validation
from aheflow.bundle import MetricField, identity_metric
from aheflow.estimator import AlmostHermitianEinsteinFlow
from aheflow.grid import TorusGeometry

from conftest import two_mode_line_metric


def test_params_roundtrip_and_clone():
    est = AlmostHermitianEinsteinFlow(k=5.0, dt=0.01, t_end=0.1)
    params = est.get_params()
    assert params["k"] == 5.0 and params["integrator"] == "rk4"
    est.set_params(k="inf")
    assert clone(est).get_params()["k"] == "inf"


def test_fit_transform_score(geo8):
    m0 = two_mode_line_metric(geo8)
    est = AlmostHermitianEinsteinFlow(k=50.0, dt=0.01, t_end=0.2, tol=None)
    with pytest.raises(NotFittedError):
        est.transform(m0.H)
    assert est.fit(m0.H) is est
    assert est.n_steps_ == 20
    assert est.residual_ < est.trajectory_.records[0].res_Linf
    np.testing.assert_allclose(est.transform(m0.H), est.metric_.H)
    assert est.score(est.metric_) > est.score(m0.H)
    assert est.score(identity_metric(geo8)) == pytest.approx(0.0, abs=1e-13)
    H = AlmostHermitianEinsteinFlow(k=50.0, dt=0.01, t_end=0.2, tol=None).fit_transform(m0)
    np.testing.assert_allclose(H, est.metric_.H)


def test_bad_parameters_raise_at_fit(geo4):
    H = np.ones(geo4.shape)
    for kwargs in ({"dt": 0}, {"dt": "x"}, {"k": -1}, {"t_end": -1.0}, {"integrator": "euler"}):
        with pytest.raises((ValueError, TypeError)):
            AlmostHermitianEinsteinFlow(**kwargs).fit(H)


def test_validation_helpers(geo4):
    assert validation.check_positive("x", 2) == 2.0
    assert validation.check_positive("x", 0, allow_zero=True) == 0.0
    for bad in (0, -1, math.inf, math.nan):
        with pytest.raises(ValueError):
            validation.check_positive("x", bad)
    with pytest.raises(TypeError):
        validation.check_positive("x", True)
    g = validation.check_geometry(4, np.diag([4.0, 1.0]), normalize_volume=True)
    assert g.vol == pytest.approx(1.0)
    with pytest.raises(ValueError):
        validation.check_geometry(6)
    with pytest.raises(ValueError):
        validation.check_geometry(4, np.eye(3))
    assert validation.check_wavevector([1, 0, -2, 3]) == (1, 0, -2, 3)
    for bad in ([1, 0, 0], [1.5, 0, 0, 0], [True, 0, 0, 0]):
        with pytest.raises(ValueError):
            validation.check_wavevector(bad)
    np.testing.assert_array_equal(validation.check_hermitian_amplitude(0.5, 2), 0.5 * np.eye(2))
    with pytest.raises(ValueError):
        validation.check_hermitian_amplitude(np.eye(3), 2)


def test_check_metric(geo4):
    H = np.ones(geo4.shape)
    m = validation.check_metric(H)
    assert isinstance(m, MetricField) and m.geometry.N == 4
    assert validation.check_metric(m) is m
    with pytest.raises(ValueError, match="non-finite"):
        validation.check_metric(np.full(geo4.shape, np.nan))
    with pytest.raises(ValueError, match="4 lattice axes"):
        validation.check_metric(np.ones((4, 4)))
    bad = np.broadcast_to(np.eye(2, dtype=complex), geo4.shape + (2, 2)).copy()
    bad[..., 0, 1] = 0.5j
    with pytest.raises(ValueError, match="Hermitian"):
        validation.check_metric(bad)
    with pytest.raises(ValueError):
        validation.check_metric(-H)
    G = TorusGeometry(4, g=np.diag([2.0, 1.0]))
    assert validation.check_metric(H, G, beta=0.5).beta == 0.5

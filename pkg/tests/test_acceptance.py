"""Acceptance criteria, one test per criterion, each at its stated tolerance.

Every test prints a single ``criterion N: PASS/FAIL`` line (also collected in
the terminal summary).  Runtime budgets are measured and asserted as part of
the criterion.
"""

import math
import time

import numpy as np
import pytest

from aheflow import diagnostics
from aheflow.bundle import exp_metric, identity_metric, mode_field, random_hermitian_field
from aheflow.flow import FlowConfig, run
from aheflow.functional import ExponentialPath, path_functionals, path_independence_check, potential
from aheflow.grid import TorusGeometry, fourier_coefficients
from aheflow.moment import residual
from aheflow.topology import char_numbers, euler_char, integral_beta

from conftest import hermitian, rank2_metric, two_mode_line_metric

pytestmark = pytest.mark.acceptance


class Clock:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


# 1 -------------------------------------------------------------------------


def test_c01_fixed_point(criterion):
    geometry = TorusGeometry(8)
    m0 = identity_metric(geometry, 1)
    worst_res, worst_drift = 0.0, 0.0
    with Clock() as clock:
        for k in (2.0, 10.0, 100.0):
            worst_res = max(worst_res, float(np.abs(residual(m0, k)).max()))
            cfg = FlowConfig(k=k, dt=1e-3, t_end=0.1, tol=None, functionals=False)
            traj = run(m0, cfg)
            assert len(traj.records) == 101
            worst_drift = max(worst_drift, float(np.abs(traj.final.m.H - m0.H).max()))
    ok = worst_res < 1e-12 and worst_drift < 1e-13 and clock.seconds < 1.0
    criterion(1, ok, f"fixed point: residual Linf {worst_res:.1e} (<1e-12), drift {worst_drift:.1e} (<1e-13)",
              clock.seconds)
    assert worst_res < 1e-12
    assert worst_drift < 1e-13
    assert clock.seconds < 1.0


# 2 -------------------------------------------------------------------------


def _fd_errors(D, res_l2, dt, idx):
    """Relative error of the centred difference of D against -||rho||^2 at ``idx``."""
    out = []
    for i in idx:
        fd = (D[i + 1] - D[i - 1]) / (2.0 * dt)
        exact = -res_l2[i] ** 2
        out.append(abs(fd - exact) / abs(exact))
    return np.array(out)


def _run_with_potential(m0, k, dt, t_end, every=None, functionals=True):
    """Flow and evaluate D_k(H(t), H0) from the endpoints at the requested steps."""
    cfg = FlowConfig(k=k, dt=dt, t_end=t_end, tol=None, functionals=functionals)
    D = {0: 0.0}
    counter = {"i": 0}

    def record(state):
        counter["i"] += 1
        i = counter["i"]
        if every is None or i in every:
            D[i] = potential(state.m, m0, k, nodes=2)

    traj = run(m0, cfg, callback=record)
    return traj, D


def test_c02_monotonicity_and_energy_identity(criterion):
    geometry = TorusGeometry(16)
    k, dt, T = 20.0, 1e-3, 0.5
    X = random_hermitian_field(geometry, 1, amplitude=0.4, band=1, seed=20240607)
    m0 = exp_metric(geometry, X)
    with Clock() as clock:
        traj, Dmap = _run_with_potential(m0, k, dt, T)
        n = len(traj.records)
        D = np.array([Dmap[i] for i in range(n)])
        res = traj.column("res_L2")
        ham = traj.column("Dk_hamiltonian")
        monotone = bool(np.all(np.diff(D) <= 0.0)) and bool(np.all(np.diff(ham) <= 0.0))
        errs = _fd_errors(D, res, dt, range(1, n - 1))
        # refinement: same data at dt/2 on a window of checkpoints
        checkpoints = [0.05, 0.1, 0.15, 0.2, 0.25]
        half = dt / 2
        wanted = set()
        for t in checkpoints:
            j = round(t / half)
            wanted |= {j - 1, j + 1}
        traj_h, Dh = _run_with_potential(m0, k, half, 0.25 + half, every=wanted, functionals=False)
        res_h = traj_h.column("res_L2")
        ratios = []
        for t in checkpoints:
            i, j = round(t / dt), round(t / half)
            e1 = _fd_errors(D, res, dt, [i])[0]
            e2 = abs((Dh[j + 1] - Dh[j - 1]) / (2 * half) + res_h[j] ** 2) / res_h[j] ** 2
            ratios.append(e1 / e2)
    ratios = np.array(ratios)
    ok = (
        monotone
        and errs.max() < 1e-3
        and bool(np.all((ratios > 3.0) & (ratios < 5.0)))
        and clock.seconds < 120.0
    )
    criterion(
        2, ok,
        f"D_k monotone={monotone}, max FD rel err {errs.max():.2e} (<1e-3), "
        f"dt-halving ratios {np.round(ratios, 2).tolist()} (~4)",
        clock.seconds,
    )
    assert monotone
    assert errs.max() < 1e-3
    assert np.all((ratios > 3.0) & (ratios < 5.0)), ratios
    assert clock.seconds < 120.0


# 3 and 4 -------------------------------------------------------------------


def _line_paths(geometry):
    base = identity_metric(geometry, 1, beta=integral_beta(1.0))
    A = mode_field(geometry, [((1, 0, 0, 0), 0.3, "cos"), ((0, 0, 1, 1), 0.2, "sin")])
    B = mode_field(
        geometry, [((1, 0, 0, 0), 0.25, "cos"), ((0, 0, 1, 1), 0.15, "sin"), ((0, 1, 0, 0), 0.2, "cos")]
    )
    return [ExponentialPath(base, A), ExponentialPath(base, A, B, profile="sine")]


def _rank2_paths(geometry):
    base = identity_metric(geometry, 2, beta=integral_beta(0.5))
    A = mode_field(
        geometry,
        [((1, 0, 0, 0), hermitian(0.2, -0.1, 0.05j), "cos"), ((0, 0, 1, 1), hermitian(0.1, 0.15, 0.08), "sin")],
        2,
    )
    B = mode_field(
        geometry,
        [((1, 0, 0, 0), hermitian(0.15, 0.1, 0.05), "cos"), ((0, 1, 0, 0), hermitian(0.1, -0.05, 0.1j), "cos")],
        2,
    )
    return [ExponentialPath(base, A), ExponentialPath(base, A, B, profile="sine")]


def test_c03_path_independence(criterion):
    geometry = TorusGeometry(16)
    k, steps = 20.0, 256
    lines = []
    ok = True
    with Clock() as clock:
        for label, paths in (("r=1", _line_paths(geometry)), ("r=2", _rank2_paths(geometry))):
            rep = path_independence_check(paths, k, steps, names=["straight", "bowed"])
            for route in ("hamiltonian", "secondary"):
                d, order = rep.deltas[route], rep.refinement_orders[route]
                good = d < 1e-6 and 3.5 <= order <= 4.5
                ok &= good
                lines.append(f"{label} {route[:3]} delta {d:.1e} order {order:.2f}")
    ok &= clock.seconds < 120.0
    criterion(3, ok, "path independence (<1e-6, order ~4): " + "; ".join(lines), clock.seconds)
    assert ok, lines


def test_c04_route_equality(criterion):
    geometry = TorusGeometry(8)
    k, steps = 20.0, 64
    base_g = TorusGeometry(8, g=np.array([[1.2, 0.3j], [-0.3j, 0.9]]))
    paths = [
        _line_paths(geometry)[1],
        _rank2_paths(geometry)[1],
        ExponentialPath(
            rank2_metric(base_g, beta=0.7),
            mode_field(base_g, [((0, 1, 1, 0), hermitian(0.2, 0.1, 0.1 - 0.05j), "sin")], 2),
            mode_field(base_g, [((1, 0, 0, 1), hermitian(-0.1, 0.1, 0.05), "cos")], 2),
            profile="quadratic",
        ),
    ]
    gaps = []
    with Clock() as clock:
        for p in paths:
            vals = path_functionals(p, k, steps)
            h, s = vals["hamiltonian"].D, vals["secondary"].D
            gaps.append(abs(h - s) / max(abs(h), 1e-300))
    ok = max(gaps) < 1e-6 and clock.seconds < 120.0
    criterion(4, ok, f"route equality rel err {[f'{g:.1e}' for g in gaps]} (<1e-6)", clock.seconds)
    assert max(gaps) < 1e-6
    assert clock.seconds < 120.0


# 5 -------------------------------------------------------------------------


def test_c05_k_limit_exponent(criterion):
    geometry = TorusGeometry(16)
    exps = {}
    with Clock() as clock:
        for label, m in (
            ("r=1", two_mode_line_metric(geometry, beta=integral_beta(1.0))),
            ("r=2", rank2_metric(geometry)),
        ):
            rep = diagnostics.k_limit_check(m, (25, 50, 100, 200))
            assert not rep.details["zero_gap"]
            exps[label] = rep.details["exponent"]
    ok = all(-1.1 <= p <= -0.9 for p in exps.values()) and clock.seconds < 60.0
    criterion(5, ok, "k-limit exponents " + ", ".join(f"{k} {p:.4f}" for k, p in exps.items()) + " in [-1.1, -0.9]",
              clock.seconds)
    assert ok


# 6 -------------------------------------------------------------------------


def test_c06_moment_evolution(criterion):
    geometry = TorusGeometry(16)
    m0 = two_mode_line_metric(geometry, beta=integral_beta(1.0))
    with Clock() as clock:
        rep = diagnostics.theorem2_refinement(m0, 10.0, [1e-3, 5e-4], t_check=0.01)
    order = rep.refinement_orders[0]
    ok = rep.rel_err < 1e-3 and 1.5 <= order <= 2.5 and clock.seconds < 120.0
    criterion(6, ok, f"moment evolution rel err {rep.rel_err:.2e} (<1e-3) at dt=1e-3, order {order:.2f} (~2)",
              clock.seconds)
    assert rep.rel_err < 1e-3
    assert 1.5 <= order <= 2.5
    assert clock.seconds < 120.0


# 7 -------------------------------------------------------------------------


def test_c07_chern_weil_riemann_roch(criterion):
    geometry = TorusGeometry(16)
    ks = (1.0, 2.0, 3.0, 4.0)
    with Clock() as clock:
        spread = 0.0
        for rank, beta in ((1, integral_beta(1.0)), (2, 0.7)):
            if rank == 1:
                metrics = [
                    identity_metric(geometry, 1, beta),
                    two_mode_line_metric(geometry, beta),
                    exp_metric(geometry, random_hermitian_field(geometry, 1, 0.5, 2, seed=3), beta),
                ]
            else:
                metrics = [
                    identity_metric(geometry, 2, beta),
                    rank2_metric(geometry, beta),
                    exp_metric(geometry, random_hermitian_field(geometry, 2, 0.4, 2, seed=5), beta),
                ]
            chis = np.array([[euler_char(m, k) for k in ks] for m in metrics])
            spread = max(spread, float(np.abs(chis - chis[0]).max()))
        trivial = identity_metric(geometry, 1)
        trivial_err = max(abs(euler_char(trivial, k) - k * k) for k in ks)
        # quadratic extrapolation from k = 1, 2, 3 to k = 4 and 7.5
        m = rank2_metric(geometry, integral_beta(1.0))
        coef = np.polyfit([1.0, 2.0, 3.0], [euler_char(m, k) for k in (1.0, 2.0, 3.0)], 2)
        extrap_err = max(abs(np.polyval(coef, k) - euler_char(m, k)) for k in (4.0, 7.5))
        cn = char_numbers(m)
        integer_err = max(abs(cn.chi(k) - 2 * (k + 1) ** 2) for k in ks)
    ok = max(spread, trivial_err, extrap_err, integer_err) < 1e-8 and clock.seconds < 10.0
    criterion(
        7, ok,
        f"metric spread {spread:.1e}, trivial chi-k^2 {trivial_err:.1e}, extrapolation {extrap_err:.1e}, "
        f"r(k+d)^2 {integer_err:.1e} (all <1e-8)",
        clock.seconds,
    )
    assert spread < 1e-8
    assert trivial_err < 1e-8
    assert extrap_err < 1e-8
    assert integer_err < 1e-8
    assert clock.seconds < 10.0


# 8 -------------------------------------------------------------------------


def test_c08_contraction_identities(criterion):
    geometry = TorusGeometry(32)
    metrics = [
        two_mode_line_metric(geometry),
        exp_metric(geometry, mode_field(geometry, [((1, 1, 0, 0), 0.4, "sin"), ((0, 0, 2, 1), 0.2, "cos")])),
    ]
    errs = []
    with Clock() as clock:
        for m in metrics:
            for rep in diagnostics.section5_identity_check(m):
                errs.append(rep.rel_err)
    ok = max(errs) < 1e-8 and clock.seconds < 30.0
    criterion(8, ok, f"contraction identities max rel err {max(errs):.1e} (<1e-8) at N=32", clock.seconds)
    assert max(errs) < 1e-8
    assert clock.seconds < 30.0


# 9 -------------------------------------------------------------------------


def test_c09_donaldson_linear_oracle(criterion):
    geometry = TorusGeometry(8)
    eps, T = 0.5, 1.0
    m0 = exp_metric(geometry, mode_field(geometry, [((1, 0, 0, 0), eps, "cos")]))
    cos = np.cos(2 * np.pi * geometry.coords[0]) * np.ones(geometry.shape)
    exact = eps * math.exp(-math.pi * T)  # d/dt u = Δu / 2π, Δ cos(2πx1) = -2π^2 cos(2πx1)
    errors = []
    with Clock() as clock:
        for dt in (0.0125, 0.00625, 0.003125):
            traj = run(m0, FlowConfig(k="inf", dt=dt, t_end=T, tol=None, functionals=False))
            u = np.log(traj.final.m.H[..., 0, 0].real)
            amp = 2.0 * float(np.mean(u * cos))
            field_err = float(np.abs(u - exact * cos).max())
            errors.append(max(abs(amp - exact), field_err))
    orders = [math.log2(errors[i] / errors[i + 1]) for i in range(2)]
    ok = all(3.5 <= p <= 4.5 for p in orders) and clock.seconds < 30.0
    criterion(9, ok, f"Donaldson oracle errors {[f'{e:.1e}' for e in errors]}, orders "
                     f"{[round(p, 3) for p in orders]} in [3.5, 4.5]", clock.seconds)
    assert all(3.5 <= p <= 4.5 for p in orders), orders
    assert clock.seconds < 30.0


# 10 ------------------------------------------------------------------------


def test_c10_empirical_parabolicity(criterion):
    geometry = TorusGeometry(8)
    m0 = diagnostics.standard_test_metric(geometry)
    ks = (2, 4, 6, 8, 10, 15, 20, 30, 50, 100)
    with Clock() as clock:
        scan = diagnostics.parabolicity_scan(m0, ks, dt=0.01, t_end=1.0)
    large = [r for r in scan["runs"] if r["k"] >= 20]
    ok = all(r["stable"] for r in large)
    unstable = [r["k"] for r in scan["runs"] if not r["stable"]]
    criterion(
        10, ok,
        f"all k>=20 stable and residual-decreasing; smallest stable k = {scan['smallest_stable_k']} "
        f"(ellipticity threshold {scan['ellipticity_threshold']:.3f}, unstable k {unstable})",
        clock.seconds,
    )
    assert ok

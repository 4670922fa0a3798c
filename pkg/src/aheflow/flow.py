"""Time integration of the almost Hermitian-Einstein flow.

The metric evolves by ``H' = -H rho`` with ``rho = residual(H, k)``, so that
``v = H^{-1} H' = -rho``.  ``k = inf`` gives the Donaldson heat flow.  Two
integrators are provided: classical RK4 and a second-order IMEX scheme
(ARS(2,2,2)) that treats ``C_LAPLACE * Δ`` implicitly in Fourier space.

Alongside ``H`` the integrators carry the running time integrals needed for
both routes of ``D_k(H(t), H(0))``:

* the Hamiltonian integral ``∫∫ tr(rho v) dvol dt``,
* the R2 integral ``∫∫ 2 tr(F v) ^ omega dt``,
* the S-term integral ``n! ∫∫ tr(S v) dvol dt``,

integrated with the same stage weights as the metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import _linalg, grid
from ._linalg import hermitian_part
from .bundle import C_LAPLACE, MetricField, PositivityError, curvature_norm_sq
from .functional import log_det_ratio, node_integrands, secondary_kappa
from .moment import check_k, evaluate, stage_residual

INTEGRATORS = ("rk4", "imex")
CSV_COLUMNS = (
    "t",
    "Dk_hamiltonian",
    "Dk_secondary",
    "res_L2",
    "res_Linf",
    "F_L2",
    "F_Linf",
    "chi_check",
    "pos_margin",
)
CSV_SCHEMA = "# aheflow-trajectory v1"

# ARS(2,2,2)
_GAMMA = 1.0 - 1.0 / math.sqrt(2.0)
_DELTA = 1.0 - 1.0 / (2.0 * _GAMMA)


class FlowError(RuntimeError):
    """The flow stopped abnormally; ``trajectory`` holds what was computed."""

    def __init__(self, message, reason, trajectory=None):
        super().__init__(message)
        self.reason = reason
        self.trajectory = trajectory


def stability_bound(geometry, constant=1.0):
    """Largest rk4 step ``c_s / (N^2 ||g^{-1}||)``."""
    norm = float(np.linalg.norm(geometry.ginv, 2))
    return constant / (geometry.N ** 2 * norm)


@dataclass
class FlowConfig:
    """Time-stepping parameters.

    ``tol`` is the convergence target for the residual sup norm (``None``
    disables early convergence).  ``max_residual`` flags blow-up and
    ``min_margin`` loss of positivity.
    """

    k: float = math.inf
    dt: float = 1e-3
    t_end: float = 1.0
    integrator: str = "rk4"
    tol: float | None = 1e-8
    max_residual: float = 1e6
    min_margin: float = 1e-8
    stability_constant: float = 1.0
    snapshot_every: int = 0
    functionals: bool = True

    def __post_init__(self):
        self.k = check_k(self.k)
        self.dt = float(self.dt)
        self.t_end = float(self.t_end)
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be non-negative, got {self.t_end}")
        if self.integrator not in INTEGRATORS:
            raise ValueError(
                f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}"
            )
        if self.stability_constant <= 0:
            raise ValueError("stability_constant must be positive")
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be non-negative")

    def check_stability(self, geometry):
        if self.integrator != "rk4":
            return
        bound = stability_bound(geometry, self.stability_constant)
        if self.dt > bound:
            raise ValueError(
                f"dt = {self.dt:g} exceeds the rk4 stability bound {bound:.6g} "
                f"(c_s = {self.stability_constant:g}, N = {geometry.N})"
            )

    def n_steps(self):
        return int(math.ceil(self.t_end / self.dt - 1e-9))


@dataclass
class Diagnostics:
    """One row of the trajectory table."""

    t: float
    Dk_hamiltonian: float
    Dk_secondary: float
    res_L2: float
    res_Linf: float
    F_L2: float
    F_Linf: float
    chi_check: float
    pos_margin: float

    def row(self):
        return [getattr(self, f.name) for f in fields(self)]


@dataclass
class Accumulators:
    """Running time integrals along the flow (see module docstring)."""

    ham: float = 0.0
    r2: float = 0.0
    t_term: float = 0.0

    def copy(self):
        return Accumulators(self.ham, self.r2, self.t_term)


@dataclass(eq=False)
class FlowState:
    t: float
    m: MetricField
    acc: Accumulators = field(default_factory=Accumulators)
    stats: Diagnostics | None = None
    terms: object = None  # cached residual terms of ``m``


def flow_rhs(m, k):
    """``v = H^{-1} H' = -rho``; vanishes exactly at solutions."""
    return -stage_residual(m, k)


def _metric_rate(m, rho):
    return -_linalg.mm(m.H, rho)


def _integrands(m, terms, k):
    nodes = node_integrands(m, -terms.rho, k, terms)
    return np.array(
        [nodes.ham_K + nodes.ham_mu + nodes.ham_S, float(np.real(nodes.r2_top)), nodes.t_density]
    )


def _advance_acc(acc, inc):
    return Accumulators(acc.ham + inc[0], acc.r2 + inc[1], acc.t_term + inc[2])


def _rk4(state, dt, k, with_acc):
    m0 = state.m
    terms = state.terms or evaluate(m0, k)
    stages_H = []
    acc_inc = np.zeros(3)
    weights = (1.0, 2.0, 2.0, 1.0)
    offsets = (0.5, 0.5, 1.0)
    m = m0
    for i in range(4):
        if i == 0:
            rho = terms.rho
        elif with_acc:
            terms = evaluate(m, k)
            rho = terms.rho
        else:
            rho = stage_residual(m, k)
        K = _metric_rate(m, rho)
        stages_H.append(K)
        if with_acc:
            acc_inc += weights[i] * _integrands(m, terms, k)
        if i < 3:
            m = m0.with_H(m0.H + (offsets[i] * dt) * K)
    H = m0.H + (dt / 6.0) * (stages_H[0] + 2 * stages_H[1] + 2 * stages_H[2] + stages_H[3])
    return H, (dt / 6.0) * acc_inc


def _implicit_solve(rhs, geometry, coeff):
    """Solve ``(I - coeff * C_LAPLACE * Δ) X = rhs`` componentwise in Fourier space."""
    sym = 1.0 - coeff * C_LAPLACE * geometry.laplacian_symbol
    return grid.ifft(grid.fft(rhs) / grid._expand(sym, rhs))


def _linear(H, geometry):
    return C_LAPLACE * grid.laplacian(H, geometry)


def _imex(state, dt, k, with_acc):
    geometry = state.m.geometry
    m1 = state.m
    t1 = state.terms or evaluate(m1, k)
    N1 = _metric_rate(m1, t1.rho) - _linear(m1.H, geometry)
    Y2 = _implicit_solve(m1.H + (dt * _GAMMA) * N1, geometry, dt * _GAMMA)
    m2 = m1.with_H(hermitian_part(Y2))
    t2 = evaluate(m2, k) if with_acc else None
    L2 = _linear(m2.H, geometry)
    N2 = _metric_rate(m2, t2.rho if with_acc else stage_residual(m2, k)) - L2
    rhs = m1.H + dt * (_DELTA * N1 + (1.0 - _DELTA) * N2) + (dt * (1.0 - _GAMMA)) * L2
    H = _implicit_solve(rhs, geometry, dt * _GAMMA)
    inc = np.zeros(3)
    if with_acc:
        inc = dt * (_DELTA * _integrands(m1, t1, k) + (1.0 - _DELTA) * _integrands(m2, t2, k))
    return H, inc


def step(state, dt, k, integrator="rk4", with_acc=True):
    """Advance one step and Hermitian-project; returns a new :class:`FlowState`.

    Raises :class:`PositivityError` if a stage metric stops being positive.
    """
    k = check_k(k)
    if integrator == "rk4":
        H, inc = _rk4(state, dt, k, with_acc)
    elif integrator == "imex":
        H, inc = _imex(state, dt, k, with_acc)
    else:
        raise ValueError(f"integrator must be one of {INTEGRATORS}, got {integrator!r}")
    m = state.m.with_H(hermitian_part(H))
    acc = _advance_acc(state.acc, inc) if with_acc else state.acc.copy()
    return FlowState(t=state.t + dt, m=m, acc=acc)


def residual_norms(m, rho):
    """``(L2, Linf)`` of ``|rho|_H = sqrt(tr rho^2)``, the metric-invariant pointwise norm."""
    sq = np.maximum(_linalg.trace_product(rho, rho).real, 0.0)
    l2 = math.sqrt(max(float(grid.integrate_volume(sq, m.geometry).real), 0.0))
    return l2, math.sqrt(float(sq.max()))


def _curvature_norms(F):
    sq = np.maximum(np.real(curvature_norm_sq(F)), 0.0)
    l2 = math.sqrt(max(float(grid.integrate_volume(sq, F.geometry).real), 0.0))
    return l2, math.sqrt(float(sq.max()))


@dataclass(eq=False)
class Trajectory:
    """Per-step diagnostics, optional snapshots and the stop reason."""

    config: FlowConfig
    initial: MetricField
    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # (t, MetricField)
    stop_reason: str = "running"
    final: FlowState | None = None
    kappa: float = 0.5
    chars0: object = None

    @property
    def early_stop(self):
        return self.stop_reason not in ("t_end", "running")

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def times(self):
        return self.column("t")

    def snapshot_at(self, t, atol=1e-12):
        for ts, m in self.snapshots:
            if abs(ts - t) <= atol:
                return m
        raise KeyError(f"no snapshot at t = {t}")

    def write_csv(self, fh, timestamp=None):
        """Schema line, timestamp comment, header, rows; a trailer on early stop."""
        fh.write(CSV_SCHEMA + "\n")
        fh.write(f"# generated {timestamp or 'unknown'}\n")
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for r in self.records:
            fh.write(",".join("%.17g" % v for v in r.row()) + "\n")
        if self.early_stop:
            fh.write(f"# early-stop: {self.stop_reason} at t={self.records[-1].t:.17g}\n")


def diagnose(state, initial, k, kappa, chars0, functionals=True):
    """Fill ``state.stats`` (and ``state.terms``) for the current metric.

    Without ``functionals`` the two ``D_k`` columns are NaN.
    """
    terms = state.terms or evaluate(state.m, k)
    state.terms = terms
    geometry = state.m.geometry
    res_l2, res_inf = residual_norms(state.m, terms.rho)
    f_l2, f_inf = _curvature_norms(terms.F)
    ch = terms.chars
    chi_check = max(abs(ch.c0 - chars0.c0), abs(ch.c1 - chars0.c1))
    n = geometry.n
    if functionals:
        R1 = grid.integrate_volume(log_det_ratio(initial.H, state.m.H), geometry).real
        ham = state.acc.ham
        secondary = kappa * (
            n / (2.0 * math.pi) * state.acc.r2
            - chars0.slope * math.factorial(n) * R1
            + state.acc.t_term
        )
    else:
        ham = secondary = math.nan
    state.stats = Diagnostics(
        t=state.t,
        Dk_hamiltonian=ham,
        Dk_secondary=float(secondary),
        res_L2=res_l2,
        res_Linf=res_inf,
        F_L2=f_l2,
        F_Linf=f_inf,
        chi_check=float(chi_check),
        pos_margin=float(state.m.positivity_margin()),
    )
    return state


def run(m0, config, callback=None, raise_on_error=True):
    """Integrate from ``m0`` (so ``h(0) = I``) according to ``config``.

    Stops at ``t_end``, when the residual sup norm drops below ``config.tol``
    (``stop_reason = "converged"``), or on failure.  Failures (positivity
    loss, residual blow-up, non-finite values) raise :class:`FlowError`
    carrying the partial trajectory unless ``raise_on_error`` is false.
    """
    geometry = m0.geometry
    config.check_stability(geometry)
    k = config.k
    m0.check_positive(config.min_margin)
    kappa = secondary_kappa() if config.functionals else 0.0
    state = FlowState(t=0.0, m=m0)
    terms0 = evaluate(m0, k)
    state.terms = terms0
    traj = Trajectory(config=config, initial=m0, kappa=kappa, chars0=terms0.chars)
    diagnose(state, m0, k, kappa, terms0.chars, config.functionals)
    traj.records.append(state.stats)
    if config.snapshot_every:
        traj.snapshots.append((0.0, m0))
    n_steps = config.n_steps()

    def fail(reason, message):
        traj.stop_reason = reason
        traj.final = state
        if raise_on_error:
            raise FlowError(message, reason, traj)
        return traj

    for i in range(1, n_steps + 1):
        if config.tol is not None and state.stats.res_Linf < config.tol:
            traj.stop_reason = "converged"
            break
        t_next = min(i * config.dt, config.t_end)
        dt = t_next - state.t
        try:
            new = step(state, dt, k, config.integrator, config.functionals)
        except PositivityError as exc:
            return fail("positivity", f"positivity lost near t = {state.t:.6g}: {exc}")
        new.t = t_next
        if not np.all(np.isfinite(new.m.H)):
            return fail("nonfinite", f"non-finite metric at t = {t_next:.6g}")
        margin = new.m.positivity_margin()
        if margin < config.min_margin:
            state = new
            return fail(
                "positivity", f"positivity margin {margin:.3g} below {config.min_margin:g} at t = {t_next:.6g}"
            )
        try:
            diagnose(new, m0, k, kappa, terms0.chars, config.functionals)
        except PositivityError as exc:
            state = new
            return fail("positivity", str(exc))
        state = new
        traj.records.append(state.stats)
        if not math.isfinite(state.stats.res_Linf) or state.stats.res_Linf > config.max_residual:
            return fail("diverged", f"residual {state.stats.res_Linf:.3g} exceeds {config.max_residual:g} at t = {t_next:.6g}")
        if config.snapshot_every and i % config.snapshot_every == 0:
            traj.snapshots.append((state.t, state.m))
        if callback is not None:
            callback(state)
    else:
        traj.stop_reason = "t_end"
    traj.final = state
    return traj

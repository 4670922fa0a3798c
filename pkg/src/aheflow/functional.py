"""The potential ``D_k`` along paths of metrics.

Two independent evaluations are provided.

``hamiltonian``
    t-quadrature of ``∫_X tr(rho v) omega^2/2`` with ``v = H^{-1} dH/dt``.
``secondary``
    secondary characteristic classes: ``R1 = log det(H_0^{-1} H)`` taken at
    the endpoint, ``R2 = i ∫ tr(F v) dt`` accumulated as a (1,1)-form and
    wedged with ``omega``, plus the 1/k correction term.  This route is
    written with ``omega^n`` as the volume and is brought to the Hamiltonian
    normalization by one constant ``kappa`` calibrated once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _linalg, grid
from .bundle import (
    MetricField,
    dagger,
    hermitian_log,
    hermitian_part,
    hermitian_sqrt,
    mode_field,
)
from .moment import check_k, evaluate, residual

ROUTES = ("hamiltonian", "secondary")


@dataclass
class FunctionalValue:
    """Value of ``D_k`` with its three parts.

    For the secondary route the parts are the ``R2``, ``R1`` and T-sum terms;
    for the Hamiltonian route they are the matching pieces
    ``∫tr(K v)``, ``-mu ∫tr v`` and ``∫tr(S v)``.
    """

    D: float
    term_R2: float
    term_R1: float
    term_T: float
    route: str
    imag: float = 0.0

    def as_dict(self):
        return {
            "D": self.D,
            "term_R2": self.term_R2,
            "term_R1": self.term_R1,
            "term_T": self.term_T,
            "route": self.route,
        }


def simpson_weights(steps):
    """Composite Simpson weights on ``steps + 1`` nodes of ``[0, 1]``."""
    if steps < 2:
        raise ValueError(f"quadrature needs at least 2 steps, got {steps}")
    if steps % 2:
        raise ValueError(f"Simpson quadrature needs an even step count, got {steps}")
    w = np.full(steps + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w / (3.0 * steps)


def _exp_log_derivative(lam, U, Z):
    """``exp(-Y) dexp_Y[Z]`` at ``Y = U diag(lam) U^†``.

    Daleckii-Krein with kernel ``(1 - exp(-(l_i - l_j))) / (l_i - l_j)``.
    """
    if lam.shape[-1] == 1:
        return Z
    d = lam[..., :, None] - lam[..., None, :]
    small = np.abs(d) < 1e-6
    safe = np.where(small, 1.0, d)
    gamma = np.where(small, 1.0 - 0.5 * d + d * d / 6.0, -np.expm1(-d) / safe)
    mm = _linalg.mm
    Ud = dagger(U)
    return mm(mm(U, gamma * mm(mm(Ud, Z), U)), Ud)


class ExponentialPath:
    """``H(t) = L exp(t A + b(t) B) L^†`` with ``L L^† = H_0``, ``t ∈ [0, 1]``.

    ``A`` and ``B`` are Hermitian matrix fields.  The endpoint depends only on
    ``A``; ``B`` bows the path with ``b(t) = t(1-t)`` (``profile="quadratic"``)
    or ``b(t) = sin(πt)/4`` (``profile="sine"``).  Both vanish at the ends and
    peak at 1/4.  For a line bundle the quadratic bow keeps the t-integrands
    polynomial, so Simpson's rule is exact; the sine bow does not.
    """

    PROFILES = ("quadratic", "sine")

    def __init__(self, base, A, B=None, profile="quadratic"):
        if profile not in self.PROFILES:
            raise ValueError(f"unknown bow profile {profile!r}; expected one of {self.PROFILES}")
        self.profile = profile
        self.base = base
        self.A = np.asarray(A, dtype=complex)
        if self.A.ndim == 4:
            self.A = self.A[..., None, None]
        self.B = np.zeros_like(self.A) if B is None else np.asarray(B, dtype=complex)
        if self.B.ndim == 4:
            self.B = self.B[..., None, None]
        r = base.rank
        # straight paths: v = A and eigh(tA) = (t lam, U) from one decomposition
        self._straight = not np.any(self.B)
        self._eigA = _linalg.eigh(self.A) if self._straight else None
        self._unit_base = bool(np.abs(base.H - np.eye(r)).max() == 0)
        self._L = hermitian_sqrt(base.H)
        self._Linv = _linalg.inv(self._L)

    @classmethod
    def between(cls, base, end, B=None, profile="quadratic"):
        """Path from ``base`` to ``end`` (straight in the exponent when ``B`` is None)."""
        L = hermitian_sqrt(base.H)
        Linv = _linalg.inv(L)
        A = hermitian_log(Linv @ end.H @ Linv)
        return cls(base, A, B, profile)

    @property
    def geometry(self):
        return self.base.geometry

    def _bow(self, t):
        """``(b(t), b'(t))``."""
        if self.profile == "sine":
            return 0.25 * math.sin(math.pi * t), 0.25 * math.pi * math.cos(math.pi * t)
        return t * (1.0 - t), 1.0 - 2.0 * t

    def _exponent(self, t):
        return t * self.A + self._bow(t)[0] * self.B

    def _sandwich(self, E):
        if self._unit_base:
            return E
        return _linalg.mm(_linalg.mm(self._L, E), self._L)

    def metric(self, t):
        E = _linalg.funm(*_linalg.eigh(self._exponent(t)), np.exp)
        return MetricField(hermitian_part(self._sandwich(E)), self.geometry, self.base.beta)

    def metric_and_velocity(self, t):
        """Metric at ``t`` and ``v = H^{-1} dH/dt``."""
        if self._straight:
            lam, U = self._eigA
            lam = t * lam
            w = self.A
        else:
            lam, U = _linalg.eigh(self._exponent(t))
            w = _exp_log_derivative(lam, U, self.A + self._bow(t)[1] * self.B)
        E = _linalg.funm(lam, U, np.exp)
        if not self._unit_base:
            w = _linalg.mm(_linalg.mm(self._Linv, w), self._L)
        H = hermitian_part(self._sandwich(E))
        return MetricField(H, self.geometry, self.base.beta), w

    def endpoint(self):
        return self.metric(1.0)


@dataclass
class _Integrands:
    """Per-node integrands shared by both routes."""

    ham_K: float
    ham_mu: float
    ham_S: float
    r2_top: complex  # ∫ (2 tr(F v)) ^ omega, the form taken in omega-normalized components
    t_density: float  # n! ∫ tr(S v) dvol


def node_integrands(m, v, k, terms=None):
    geometry = m.geometry
    terms = evaluate(m, k) if terms is None else terms

    def vol(f):
        return float(np.real(grid.integrate_volume(f, geometry)))

    tp = _linalg.trace_product
    ham_K = vol(tp(terms.K, v))
    ham_mu = -terms.mu * vol(_linalg.trace(v))
    ham_S = vol(tp(terms.S, v))
    # the R2 form only ever enters through its wedge with omega, which is linear
    r2 = (2.0 * math.pi) * grid.integrate_top(tp(terms.F.chern_omega(), v), geometry)
    return _Integrands(ham_K, ham_mu, ham_S, r2, math.factorial(geometry.n) * ham_S)


def _secondary_raw(geometry, r2_acc, t_acc, m0, m1, mu):
    n = geometry.n
    term_R2 = n / (2.0 * math.pi) * r2_acc
    R1 = log_det_ratio(m0.H, m1.H)
    term_R1 = -mu * math.factorial(n) * grid.integrate_volume(R1, geometry)
    return complex(term_R2), complex(term_R1), float(t_acc)


def log_det_ratio(H0, H1):
    """Pointwise ``R1 = log det(H_0^{-1} H_1)``."""
    return _linalg.logdet(H1) - _linalg.logdet(H0)


def _package(geometry, ham, r2_acc, t_acc, m0, m1, mu, kappa):
    R2, R1, T = _secondary_raw(geometry, r2_acc, t_acc, m0, m1, mu)
    sec = FunctionalValue(
        D=kappa * (R2.real + R1.real + T),
        term_R2=kappa * R2.real,
        term_R1=kappa * R1.real,
        term_T=kappa * T,
        route="secondary",
        imag=abs(R2.imag) + abs(R1.imag),
    )
    hv = FunctionalValue(
        D=float(ham.sum()),
        term_R2=float(ham[0]),
        term_R1=float(ham[1]),
        term_T=float(ham[2]),
        route="hamiltonian",
    )
    return {"hamiltonian": hv, "secondary": sec}


def path_functionals(path, k, steps=256, kappa=None, coarse=False):
    """Both routes of ``D_k`` along ``path`` with composite Simpson in t.

    Returns ``{"hamiltonian": FunctionalValue, "secondary": FunctionalValue}``.
    With ``coarse`` (``steps`` divisible by 4) the same sweep also yields the
    estimate at ``steps // 2`` from the even nodes, under the key ``"coarse"``.
    """
    k = check_k(k)
    if coarse and steps % 4:
        raise ValueError("coarse estimates need steps divisible by 4")
    weights = [simpson_weights(steps)]
    if coarse:
        wc = np.zeros(steps + 1)
        wc[::2] = simpson_weights(steps // 2)
        weights.append(wc)
    kappa = secondary_kappa() if kappa is None else kappa
    geometry = path.geometry
    acc = [[np.zeros(3), 0.0, 0.0] for _ in weights]
    m0 = m = None
    for i, t in enumerate(np.linspace(0.0, 1.0, steps + 1)):
        m, v = path.metric_and_velocity(t)
        if i == 0:
            m0 = m
        nodes = node_integrands(m, v, k)
        hv = np.array([nodes.ham_K, nodes.ham_mu, nodes.ham_S])
        for w, a in zip(weights, acc):
            if w[i] == 0.0:
                continue
            a[0] = a[0] + w[i] * hv
            a[1] = a[1] + w[i] * nodes.r2_top
            a[2] += w[i] * nodes.t_density
    mu = evaluate(m0, k).mu
    out = _package(geometry, *acc[0], m0, m, mu, kappa)
    if coarse:
        out["coarse"] = _package(geometry, *acc[1], m0, m, mu, kappa)
    return out


def dk_hamiltonian(path, k, steps=256):
    return path_functionals(path, k, steps)["hamiltonian"]


def dk_secondary(path, k, steps=256, kappa=None):
    return path_functionals(path, k, steps, kappa)["secondary"]


def _calibration_path():
    geometry = grid.TorusGeometry(8)
    base = MetricField(
        np.ones(geometry.shape, dtype=complex), geometry, beta=0.5 * math.pi
    )
    A = mode_field(geometry, [((1, 0, 0, 0), 0.2, "cos"), ((0, 1, 1, 0), 0.1, "sin")])
    B = mode_field(geometry, [((0, 0, 1, 0), 0.15, "cos")])
    return ExponentialPath(base, A, B)


def calibrate_kappa(path=None, k=20.0, steps=64):
    """Ratio of the Hamiltonian value to the raw secondary value on one path."""
    path = _calibration_path() if path is None else path
    vals = path_functionals(path, k, steps, kappa=1.0)
    return vals["hamiltonian"].D / vals["secondary"].D


@lru_cache(maxsize=1)
def secondary_kappa():
    """The frozen secondary-route normalization (computed once per process)."""
    return calibrate_kappa()


def potential(H, H0, k, nodes=6):
    """``D_k(H, H_0)`` from the endpoints alone.

    Integrates the Hamiltonian one-form along ``H_0^{1/2} exp(sX) H_0^{1/2}``,
    on which ``v`` is constant, with Gauss-Legendre nodes.  For rank one the
    integrand is quadratic in ``s``, so two nodes are already exact.
    """
    k = check_k(k)
    path = ExponentialPath.between(H0, H)
    geometry = H0.geometry
    s, w = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * (s + 1.0)
    w = 0.5 * w
    total = 0.0
    for si, wi in zip(s, w):
        m, v = path.metric_and_velocity(si)
        rho = residual(m, k)
        total += wi * float(
            np.real(grid.integrate_volume(_linalg.trace_product(rho, v), geometry))
        )
    return total


@dataclass
class PathReport:
    k: float
    steps: int
    names: list
    values: dict = field(default_factory=dict)  # route -> list of D
    deltas: dict = field(default_factory=dict)  # route -> max pairwise |ΔD|/(1+|D|)
    refinement_orders: dict = field(default_factory=dict)
    route_gap: float = 0.0

    def as_dict(self):
        return {
            "k": self.k,
            "steps": self.steps,
            "paths": self.names,
            "Dk_values": self.values,
            "deltas": self.deltas,
            "refinement_orders": self.refinement_orders,
            "route_gap": self.route_gap,
        }


def _max_delta(values):
    worst = 0.0
    for i in range(len(values)):
        for j in range(i + 1, len(values)):
            scale = 1.0 + max(abs(values[i]), abs(values[j]))
            worst = max(worst, abs(values[i] - values[j]) / scale)
    return worst


def path_independence_check(paths, k, steps=256, names=None, refine=True, tol=1e-12):
    """Compare ``D_k`` over paths sharing both endpoints.

    With ``refine`` the deltas are also formed at ``steps // 2`` from the
    same sweep, and the observed order ``log2(delta(steps/2) / delta(steps))``
    is reported per route.
    """
    names = names or [f"path{i}" for i in range(len(paths))]
    end0 = paths[0].endpoint().H
    start0 = paths[0].base.H
    for p in paths[1:]:
        if np.abs(p.endpoint().H - end0).max() > tol or np.abs(p.base.H - start0).max() > tol:
            raise ValueError("paths do not share endpoints")
    report = PathReport(k=float(k), steps=steps, names=list(names))
    vals = [path_functionals(p, k, steps, coarse=refine) for p in paths]
    for route in ROUTES:
        report.values[route] = [v[route].D for v in vals]
        report.deltas[route] = _max_delta(report.values[route])
    report.route_gap = max(
        abs(v["hamiltonian"].D - v["secondary"].D) / (1.0 + abs(v["hamiltonian"].D))
        for v in vals
    )
    if refine:
        for route in ROUTES:
            d_coarse = _max_delta([v["coarse"][route].D for v in vals])
            d = report.deltas[route]
            report.refinement_orders[route] = (
                math.log2(d_coarse / d) if d > 0 and d_coarse > 0 else math.inf
            )
            report.deltas[route + "_coarse"] = d_coarse
    return report

"""Solvers for (I - chi G) E = E_inc: certified Born/Neumann series, restarted
GMRES, the factorized resonance form, and the evolution-semigroup integrator.

Incident plane waves use e_pol exp(-i k n.r), consistent with the
exp(i omega t) time convention of the outgoing kernel.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as sla

from .geometry import VoxelGrid
from .kernel import ComplexVectorField, get_kernel


class NoConvergenceError(RuntimeError):
    """Iteration budget exhausted; carries the best iterate."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DivergenceError(RuntimeError):
    """Born-series partial sums grew over three consecutive orders."""


class CertificateUnavailableError(RuntimeError):
    """No a-priori convergence certificate holds for the requested series."""


@dataclass(frozen=True)
class IncidentSpec:
    """Plane wave (direction, polarization) or a raw per-voxel field."""

    kind: str = "plane"
    direction: tuple = (0.0, 0.0, 1.0)
    polarization: tuple = (1.0, 0.0, 0.0)
    raw: np.ndarray | None = None

    def evaluate(self, grid: VoxelGrid) -> ComplexVectorField:
        if self.kind == "raw":
            return ComplexVectorField(grid, np.asarray(self.raw, dtype=complex))
        if self.kind != "plane":
            raise ValueError(f"unknown incident kind {self.kind!r}")
        n = np.asarray(self.direction, dtype=float)
        n = n / np.linalg.norm(n)
        e = np.asarray(self.polarization, dtype=complex)
        if abs(n @ e) > 1e-12 * np.linalg.norm(e):
            raise ValueError("plane-wave polarization must be transverse")
        r = grid.occupied_centers()
        phase = np.exp(-1j * (r @ n))
        return ComplexVectorField(grid, phase[:, None] * e[None, :])


@dataclass
class ScatteringProblem:
    """Grid + susceptibility mode + incident spec + solver settings."""

    grid: VoxelGrid
    chi: complex | None = None          # None: per-voxel chi from the grid
    incident: IncidentSpec = field(default_factory=IncidentSpec)
    tol: float = 1e-8
    max_iterations: int = 2000
    restart: int = 60

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")

    def chi_values(self) -> np.ndarray:
        if self.chi is None:
            return self.grid.occupied_chi()
        return np.broadcast_to(
            np.asarray(self.chi, dtype=complex), (self.grid.n_occupied,)
        )

    def incident_field(self) -> ComplexVectorField:
        return self.incident.evaluate(self.grid)


@dataclass
class SolveReport:
    field: ComplexVectorField
    iterations: int
    residual: float
    method: str
    certificate: float | None = None


def _residual(problem, E, E_inc) -> float:
    k = get_kernel(problem.grid)
    r = k.apply_born(E.values, problem.chi_values()) - E_inc.values
    return float(np.linalg.norm(r) / np.linalg.norm(E_inc.values))


def born_series(problem: ScatteringProblem, order: int, g_norm_estimate: float | None = None,
                force: bool = False) -> SolveReport:
    """Truncated Neumann series sum_{s<=order} (chi G)^s E_inc with certificate.

    The certificate is the geometric tail (|chi| g)^{order+1}/(1 - |chi| g)
    times ||E_inc||, with g the analytic norm bound of G; it requires
    |chi| g < 1 (refused otherwise unless forced).
    """
    chi = problem.chi_values()
    chi_max = float(np.max(np.abs(chi)))
    if g_norm_estimate is None:
        from .bounds import analytic_bounds
        from .geometry import GeometrySummary

        g_norm_estimate = analytic_bounds(
            GeometrySummary.of_grid(problem.grid), monte_carlo_pairs=0
        ).g_upper
    rho = chi_max * g_norm_estimate
    certificate = None
    if rho >= 1.0:
        if not force:
            raise CertificateUnavailableError(
                f"|chi| * ||G|| estimate = {rho:.3g} >= 1: series not certified"
            )
        warnings.warn("running Born series past a failed certificate", stacklevel=2)
    E_inc = problem.incident_field()
    kern = get_kernel(problem.grid)
    term = E_inc.values.copy()
    total = term.copy()
    term_norms = [np.linalg.norm(term)]
    for _ in range(order):
        term = chi[:, None] * term
        term = kern.apply_G(term)
        total += term
        term_norms.append(np.linalg.norm(term))
        if len(term_norms) >= 4 and (
            term_norms[-1] > term_norms[-2] > term_norms[-3] > term_norms[-4]
        ):
            raise DivergenceError(
                "partial-sum growth over three consecutive orders: series diverges"
            )
    if rho < 1.0:
        certificate = rho ** (order + 1) / (1.0 - rho) * E_inc.norm()
    E = ComplexVectorField(problem.grid, total)
    return SolveReport(E, order, _residual(problem, E, E_inc), "born", certificate)


def krylov_solve(problem: ScatteringProblem, x0: ComplexVectorField | None = None) -> SolveReport:
    """Restarted GMRES on the Born operator; deterministic given settings."""
    grid = problem.grid
    kern = get_kernel(grid)
    chi = problem.chi_values()
    E_inc = problem.incident_field()
    b = E_inc.values.ravel()
    op = sla.LinearOperator(
        (b.size, b.size),
        matvec=lambda x: kern.apply_born(x.reshape(-1, 3), chi).ravel(),
        dtype=complex,
    )
    count = [0]

    def cb(_):
        count[0] += 1

    cycles = max(1, int(np.ceil(problem.max_iterations / problem.restart)))
    x, info = sla.gmres(
        op,
        b,
        x0=None if x0 is None else x0.values.ravel(),
        rtol=problem.tol,
        atol=0.0,
        restart=problem.restart,
        maxiter=cycles,
        callback=cb,
        callback_type="pr_norm",
    )
    E = ComplexVectorField(grid, x.reshape(-1, 3))
    res = _residual(problem, E, E_inc)
    report = SolveReport(E, count[0], res, "krylov")
    if info != 0 and res > problem.tol:
        raise NoConvergenceError(
            f"GMRES stopped at relative residual {res:.3e} after {count[0]} iterations",
            report=report,
        )
    return report


def factorized_solve(problem: ScatteringProblem) -> SolveReport:
    """Solve (I - zeta G(I + 2G)) F = E_inc with zeta = chi^2/(chi+2), then
    recover E = F + 2 chi/(chi+2) (G + I) F.

    The factorized operator stays invertible down the half-line chi <= -1
    (away from chi = -2), where the plain Born operator is hostile.
    """
    if problem.chi is None:
        raise ValueError("factorized solve requires a uniform susceptibility")
    chi = complex(problem.chi)
    if abs(chi + 2.0) < 1e-14:
        raise ZeroDivisionError(
            "chi = -2 is the singular susceptibility (unbounded enhancement)"
        )
    zeta = chi * chi / (chi + 2.0)
    grid = problem.grid
    kern = get_kernel(grid)
    E_inc = problem.incident_field()
    b = E_inc.values.ravel()

    def matvec(x):
        v = x.reshape(-1, 3)
        gv = kern.apply_G(v)
        ggv = kern.apply_G(gv)
        return (v - zeta * (gv + 2.0 * ggv)).ravel()

    op = sla.LinearOperator((b.size, b.size), matvec=matvec, dtype=complex)
    count = [0]

    def cb(_):
        count[0] += 1

    cycles = max(1, int(np.ceil(problem.max_iterations / problem.restart)))
    x, info = sla.gmres(
        op, b, rtol=problem.tol, atol=0.0, restart=problem.restart,
        maxiter=cycles, callback=cb, callback_type="pr_norm",
    )
    # recovery: (I - chi G)^{-1} = (I + (2 chi/(chi+2)) G) (I - zeta G(I+2G))^{-1},
    # verified by the scalar resolvent identity
    # (1 + 2 lambda + 2g) / [lambda(1+2 lambda) - g(1+2g)] = 1/(lambda - g)
    F = x.reshape(-1, 3)
    E = ComplexVectorField(grid, F + 2.0 * chi / (chi + 2.0) * kern.apply_G(F))
    res = _residual(problem, E, E_inc)
    report = SolveReport(E, count[0], res, "factorized")
    if info != 0 and res > 10 * problem.tol:
        raise NoConvergenceError(
            f"factorized GMRES stopped at relative residual {res:.3e}", report=report
        )
    return report


# ---------------------------------------------------------------------------
# evolution semigroup

@dataclass
class SemigroupTrajectory:
    """Samples of psi_tau = exp(-i tau G) E_inc and its norms."""

    times: np.ndarray
    norms: np.ndarray
    decay_rates: np.ndarray        # -2 Im <G psi, psi> at the samples
    snapshots: list | None = None
    final: ComplexVectorField | None = None


def evolve_semigroup(problem: ScatteringProblem, tau_max: float, dtau: float,
                     store_snapshots: bool = False,
                     g_norm_estimate: float | None = None) -> SemigroupTrajectory:
    """Fixed-step RK4 for i d psi/d tau = G psi, psi_0 = E_inc.

    The squared norm obeys d||psi||^2/d tau = -2 Im<G psi, psi> <= 0; a norm
    increase beyond integrator tolerance raises a step-size error.
    """
    grid = problem.grid
    kern = get_kernel(grid)
    if g_norm_estimate is not None and dtau * g_norm_estimate > 2.5:
        warnings.warn(
            f"dtau = {dtau} may be RK4-unstable for ||G|| ~ {g_norm_estimate}",
            stacklevel=2,
        )
    psi = problem.incident_field().values.copy()
    kd3 = grid.kd**3

    def rhs(v):
        return -1j * kern.apply_G(v)

    n_steps = int(round(tau_max / dtau)) if tau_max > 0 else 0
    def decay_rate(v):
        return -2.0 * float(np.imag(np.sum(np.conj(kern.apply_G(v)) * v)) * kd3)

    times = [0.0]
    norms = [float(np.sqrt(kd3) * np.linalg.norm(psi))]
    rates = [decay_rate(psi)]
    snaps = [psi.copy()] if store_snapshots else None
    norm0_sq = norms[0] ** 2
    for step in range(1, n_steps + 1):
        k1 = rhs(psi)
        k2 = rhs(psi + 0.5 * dtau * k1)
        k3 = rhs(psi + 0.5 * dtau * k2)
        k4 = rhs(psi + dtau * k3)
        psi = psi + (dtau / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        nrm = float(np.sqrt(kd3) * np.linalg.norm(psi))
        # RK4 truncation allowance; the exact flow is non-increasing
        if nrm**2 > norms[-1] ** 2 + 1e-10 * norm0_sq + 20 * np.finfo(float).eps * nrm**2:
            raise NoConvergenceError(
                f"semigroup norm increased at step {step}: reduce dtau"
            )
        times.append(step * dtau)
        norms.append(nrm)
        rates.append(decay_rate(psi))
        if store_snapshots:
            snaps.append(psi.copy())
    return SemigroupTrajectory(
        np.asarray(times),
        np.asarray(norms),
        np.asarray(rates),
        snaps,
        ComplexVectorField(grid, psi),
    )


def resolvent_via_semigroup(problem: ScatteringProblem, tau_max: float, dtau: float) -> tuple[ComplexVectorField, float]:
    """Laplace-type reconstruction (1/(i chi)) int_0^tau_max e^{i tau/chi} psi_tau d tau.

    Requires Im chi < 0 (the damping of e^{i tau/chi}); returns the field and
    the reported truncation-error factor exp(-tau_max (-Im chi)/|chi|^2).
    """
    if problem.chi is None:
        raise ValueError("semigroup resolvent requires a uniform susceptibility")
    chi = complex(problem.chi)
    if chi.imag >= 0:
        raise ValueError("resolvent reconstruction requires Im chi < 0")
    grid = problem.grid
    kern = get_kernel(grid)
    psi = problem.incident_field().values.copy()

    def rhs(v):
        return -1j * kern.apply_G(v)

    n_steps = int(round(tau_max / dtau))
    if n_steps % 2 == 1:
        n_steps += 1
    dtau = tau_max / n_steps
    # composite Simpson accumulated on the fly
    acc = np.zeros_like(psi)

    def weight(i):
        if i == 0 or i == n_steps:
            return 1.0
        return 4.0 if i % 2 == 1 else 2.0

    acc += weight(0) * psi
    for step in range(1, n_steps + 1):
        k1 = rhs(psi)
        k2 = rhs(psi + 0.5 * dtau * k1)
        k3 = rhs(psi + 0.5 * dtau * k2)
        k4 = rhs(psi + dtau * k3)
        psi = psi + (dtau / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        acc += weight(step) * np.exp(1j * step * dtau / chi) * psi
    integral = acc * (dtau / 3.0)
    E = ComplexVectorField(grid, integral / (1j * chi))
    tail = float(np.exp(-tau_max * (-chi.imag) / abs(chi) ** 2))
    return E, tail

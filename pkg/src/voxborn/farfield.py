"""Far-field amplitudes, cross-sections, the optical-theorem residual and the
electric enhancement ratio.

Cross-sections are reported in k = 1 units.  The amplitude of the outgoing
spherical wave e^{-ikr}/r in direction n is

    f(n) = -(k^2/4pi) n x [ n x sum_v chi_v E_v e^{i k n.r_v} w_v ]

with w_v the volume weights of the sample cloud (kd^3 on a voxel grid); the
double cross product enforces transversality exactly.  Under the
exp(i omega t) convention the forward-scattering identity reads
sigma_ext = -(4 pi/k) Im[f(n_inc) . conj(e_inc)].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre

from .geometry import VoxelGrid
from .kernel import ComplexVectorField

_TINY = 1e-300


@dataclass(frozen=True)
class AngularGrid:
    """Gauss-Legendre x uniform-phi quadrature on the unit sphere.

    Exact for spherical polynomials up to degree 2*n_theta - 1 in cos(theta)
    and azimuthal orders below n_phi; sum of weights is 4 pi to rounding.
    """

    nodes: np.ndarray    # (M, 3) unit vectors
    weights: np.ndarray  # (M,)
    n_theta: int
    n_phi: int

    @classmethod
    def build(cls, n_theta: int = 32, n_phi: int = 64) -> "AngularGrid":
        x, w = roots_legendre(n_theta)
        phi = 2 * np.pi * np.arange(n_phi) / n_phi
        st = np.sqrt(1 - x**2)
        nx = st[:, None] * np.cos(phi)[None, :]
        ny = st[:, None] * np.sin(phi)[None, :]
        nz = np.broadcast_to(x[:, None], nx.shape)
        nodes = np.column_stack([nx.ravel(), ny.ravel(), nz.ravel()])
        weights = np.broadcast_to(w[:, None] * (2 * np.pi / n_phi), nx.shape).ravel()
        return cls(nodes, weights, n_theta, n_phi)

    @classmethod
    def for_size(cls, k_radius: float) -> "AngularGrid":
        """Default 32 x 64, doubled for electrically large scatterers."""
        if k_radius > 4.0:
            return cls.build(64, 128)
        return cls.build(32, 64)


def _as_cloud(grid_or_points, E, chi):
    """Normalize inputs to (points, weights, chi_values, E_values)."""
    if isinstance(grid_or_points, VoxelGrid):
        grid = grid_or_points
        pts = grid.occupied_centers()
        w = np.full(len(pts), grid.kd**3)
        chi_v = grid.occupied_chi() if chi is None else np.broadcast_to(
            np.asarray(chi), (len(pts),)
        )
        vals = E.values if isinstance(E, ComplexVectorField) else np.asarray(E)
        return pts, w, np.asarray(chi_v, dtype=complex), vals
    pts, w = grid_or_points
    vals = E.values if isinstance(E, ComplexVectorField) else np.asarray(E)
    chi_v = np.broadcast_to(np.asarray(chi, dtype=complex), (len(pts),))
    return np.asarray(pts), np.asarray(w), chi_v, vals


def far_amplitude(grid_or_points, E, directions: AngularGrid, chi=None,
                  chunk: int = 128) -> np.ndarray:
    """Scattering amplitudes f(n_i) for each quadrature direction, shape (M, 3).

    Direct phase-factor summation (chunked over directions to bound memory);
    f(n) . n = 0 holds exactly by construction.
    """
    pts, w, chi_v, vals = _as_cloud(grid_or_points, E, chi)
    src = (chi_v * w)[:, None] * vals
    n = directions.nodes
    out = np.empty((len(n), 3), dtype=complex)
    for start in range(0, len(n), chunk):
        blk = n[start : start + chunk]
        phase = np.exp(1j * (blk @ pts.T))
        s = phase @ src
        # n x (n x s) = n (n.s) - s
        ndots = np.einsum("ij,ij->i", blk, s)
        out[start : start + chunk] = -(1.0 / (4 * np.pi)) * (
            blk * ndots[:, None] - s
        )
    return out


def sigma_sc(f: np.ndarray, quad: AngularGrid) -> float:
    """Total scattering cross-section: quadrature of |f|^2 over directions."""
    return float(np.sum(quad.weights * np.einsum("ij,ij->i", np.conj(f), f).real))


def sigma_abs(grid_or_points, E, chi=None) -> float:
    """Absorption cross-section -k sum Im(chi) |E|^2 w; zero for real chi."""
    pts, w, chi_v, vals = _as_cloud(grid_or_points, E, chi)
    e2 = np.einsum("ij,ij->i", np.conj(vals), vals).real
    return float(-np.sum(chi_v.imag * e2 * w))


def sigma_ext(grid_or_points, E, E_inc, chi=None) -> float:
    """Extinction cross-section -k Im sum chi conj(E_inc).E w (per-voxel chi inside)."""
    pts, w, chi_v, vals = _as_cloud(grid_or_points, E, chi)
    vinc = E_inc.values if isinstance(E_inc, ComplexVectorField) else np.asarray(E_inc)
    pair = np.einsum("ij,ij->i", np.conj(vinc), vals)
    return float(-np.imag(np.sum(chi_v * pair * w)))


def forward_identity(f: np.ndarray, directions: AngularGrid, n_inc, e_inc) -> float:
    """-(4 pi/k) Im[f(n_inc).conj(e_inc)] evaluated at the grid node nearest n_inc."""
    i = int(np.argmax(directions.nodes @ np.asarray(n_inc)))
    return float(-4 * np.pi * np.imag(f[i] @ np.conj(np.asarray(e_inc))))


def optical_theorem_residual(s_ext: float, s_sc: float, s_abs: float) -> float:
    """|sigma_ext - sigma_sc - sigma_abs| / max(sigma_ext, tiny); 0 for chi = 0."""
    if s_ext == 0.0 and s_sc == 0.0 and s_abs == 0.0:
        return 0.0
    return abs(s_ext - s_sc - s_abs) / max(abs(s_ext), _TINY)


def eer(E, E_inc) -> float:
    """Electric enhancement ratio: internal energy over incident energy."""
    vals = E.values if isinstance(E, ComplexVectorField) else np.asarray(E)
    vinc = E_inc.values if isinstance(E_inc, ComplexVectorField) else np.asarray(E_inc)
    denom = float(np.sum(np.abs(vinc) ** 2))
    if denom == 0.0:
        raise ValueError("incident field has zero norm")
    return float(np.sum(np.abs(vals) ** 2)) / denom


@dataclass(frozen=True)
class CrossSectionReport:
    """sigma_sc, sigma_abs, sigma_ext, relative optical-theorem residual, EER."""

    sigma_sc: float
    sigma_abs: float
    sigma_ext: float
    got_residual: float
    eer: float

    CSV_HEADER = "sigma_sc,sigma_abs,sigma_ext,got_residual,eer"

    def csv_row(self) -> str:
        return (
            f"{self.sigma_sc:.12g},{self.sigma_abs:.12g},{self.sigma_ext:.12g},"
            f"{self.got_residual:.6g},{self.eer:.12g}"
        )


def cross_sections(grid: VoxelGrid, E, E_inc, chi=None,
                   directions: AngularGrid | None = None) -> CrossSectionReport:
    """All cross-sections and the optical-theorem residual for a solved field."""
    from .geometry import circumscribed_radius

    if directions is None:
        directions = AngularGrid.for_size(circumscribed_radius(grid))
    f = far_amplitude(grid, E, directions, chi=chi)
    s_sc = sigma_sc(f, directions)
    s_abs = sigma_abs(grid, E, chi=chi)
    s_ext = sigma_ext(grid, E, E_inc, chi=chi)
    return CrossSectionReport(
        s_sc, s_abs, s_ext, optical_theorem_residual(s_ext, s_sc, s_abs), eer(E, E_inc)
    )


def scattering_quadratic_form(grid: VoxelGrid, E, chi=None) -> float:
    """Second route to sigma_sc: |chi|^2 k Im<G E, E> through the operator.

    For per-voxel chi the pairing is applied to chi*E, matching the
    inhomogeneous energy balance.
    """
    from .kernel import apply_G

    if chi is None:
        chi_v = grid.occupied_chi()
    else:
        chi_v = np.broadcast_to(np.asarray(chi, dtype=complex), (grid.n_occupied,))
    vals = E.values if isinstance(E, ComplexVectorField) else np.asarray(E)
    src = ComplexVectorField(grid, chi_v[:, None] * vals)
    ge = apply_G(grid, src)
    return float(np.imag(ge.inner(src)))

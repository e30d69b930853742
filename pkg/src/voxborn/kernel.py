"""The discretized Born operator B = I - chi*G and its constituents.

G acts on 3-component fields over the occupied voxels of a grid through a
block-Toeplitz convolution with the outgoing dyadic kernel, evaluated either
densely (small grids, used as an oracle) or via zero-padded FFTs.  The static
dipole part, the sin-kernel part and the scalar-wave kernel reuse the same
tabulation machinery.

Conventions: k = 1, time factor exp(i omega t), kernel exp(-iR)/(4 pi R).
Inner products are conjugate-linear in the first argument and weighted by the
voxel volume kd^3; reductions use numpy's pairwise summation over a fixed
ordering, so results do not depend on the FFT worker count.
"""

from __future__ import annotations

import os
import weakref
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator

from .geometry import VoxelGrid

DENSE_CAP = 4096  # voxel cap for dense assembly (12288 unknowns)

_fft_workers = int(os.environ.get("VOXBORN_THREADS", "1"))


def set_fft_workers(n: int) -> None:
    """Set the FFT worker count (outputs are bit-identical for any value)."""
    global _fft_workers
    _fft_workers = max(1, int(n))


def _fftn(a):
    return sfft.fftn(a, axes=(0, 1, 2), workers=_fft_workers)


def _ifftn(a):
    return sfft.ifftn(a, axes=(0, 1, 2), workers=_fft_workers)


# ---------------------------------------------------------------------------
# fields

@dataclass(frozen=True, eq=False)
class ComplexVectorField:
    """3 complex components per occupied voxel, in occupied-index order."""

    grid: VoxelGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.grid.n_occupied, 3):
            raise ValueError("field does not conform to grid")

    @classmethod
    def zeros(cls, grid: VoxelGrid) -> "ComplexVectorField":
        return cls(grid, np.zeros((grid.n_occupied, 3), dtype=complex))

    def copy(self):
        return ComplexVectorField(self.grid, self.values.copy())

    def inner(self, other: "ComplexVectorField") -> complex:
        """<self, other> = kd^3 sum conj(self) . other (conjugate-linear first)."""
        return complex(
            self.grid.kd**3 * np.sum(np.conj(self.values) * other.values)
        )

    def norm(self) -> float:
        return float(np.sqrt(self.grid.kd**3) * np.linalg.norm(self.values))

    def __add__(self, other):
        return ComplexVectorField(self.grid, self.values + other.values)

    def __sub__(self, other):
        return ComplexVectorField(self.grid, self.values - other.values)

    def __mul__(self, a):
        return ComplexVectorField(self.grid, self.values * a)

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# kernel blocks

def self_term(kd: float) -> complex:
    """Self-interaction scalar s of the G diagonal (s * identity block).

    Depolarization -1/3 plus the analytic integral of the rotation-averaged
    dynamic kernel over the volume-equivalent sphere of radius
    a = kd (3/4pi)^(1/3):  s = -1/3 + (2/3)(e^{-ia}(1+ia) - 1).
    Im s = -2a^3/9 + O(a^5) carries the radiative loss of one dipole.
    """
    if kd <= 0:
        raise ValueError("kd must be positive")
    a = kd * (3.0 / (4.0 * np.pi)) ** (1.0 / 3.0)
    return -1.0 / 3.0 + (2.0 / 3.0) * (np.exp(-1j * a) * (1 + 1j * a) - 1.0)


def scalar_self_term(kd: float) -> complex:
    """Self value of k^2 C (scalar kernel) over the volume-equivalent sphere."""
    if kd <= 0:
        raise ValueError("kd must be positive")
    a = kd * (3.0 / (4.0 * np.pi)) ** (1.0 / 3.0)
    return np.exp(-1j * a) * (1 + 1j * a) - 1.0


def dyadic_kernel(kd: float, offset, static: bool = False) -> np.ndarray:
    """3x3 voxel-to-voxel coupling block at a nonzero lattice offset.

    kd^3 times the outgoing dyadic evaluated at the center separation;
    `static` selects the k -> 0 limit kd^3 (3 rr^T - 1)/(4 pi R^3).
    """
    off = np.asarray(offset, dtype=float)
    if np.all(off == 0):
        raise ValueError("zero offset: use self_term")
    d = off * kd
    r = float(np.linalg.norm(d))
    rr = np.outer(d, d) / r**2
    if static:
        return kd**3 * (3 * rr - np.eye(3)) / (4 * np.pi * r**3)
    e = np.exp(-1j * r) / (4 * np.pi * r)
    a = e * (1 - 1j / r - 1 / r**2)
    b = e * (-1 + 3j / r + 3 / r**2)
    return kd**3 * (a * np.eye(3) + b * rr)


def _offsets(pad: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Circulant offset coordinates ( length pad ) and validity mask |d| <= n-1."""
    d = np.arange(pad)
    d = np.where(d <= pad // 2, d, d - pad)
    valid = np.abs(d) <= n - 1
    return d, valid


_IJ = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]  # stored components


class DyadicGreenTable:
    """Difference-lattice tabulation of a dyadic kernel and its spectral form.

    Blocks are symmetric 3x3, stored as 6 unique components on the padded
    circulant lattice; `self_block` holds the r = r' value separately.
    Reciprocal symmetry Gamma(d) = Gamma(-d) holds by the evenness of the
    tabulated functions; `roundtrip_error` measures spectral consistency.
    """

    def __init__(self, kd: float, dims, static: bool = False):
        self.kd = float(kd)
        self.dims = tuple(int(n) for n in dims)
        self.static = static
        self.pad = tuple(sfft.next_fast_len(2 * n - 1) for n in self.dims)
        self.self_scalar = -1.0 / 3.0 + 0.0j if static else self_term(kd)
        self.self_block = self.self_scalar * np.eye(3)

        px, py, pz = self.pad
        dx, vx = _offsets(px, self.dims[0])
        dy, vy = _offsets(py, self.dims[1])
        dz, vz = _offsets(pz, self.dims[2])
        DX, DY, DZ = np.meshgrid(dx, dy, dz, indexing="ij")
        V = (
            vx[:, None, None]
            & vy[None, :, None]
            & vz[None, None, :]
        )
        R2 = (DX.astype(float)) ** 2 + DY**2 + DZ**2
        nonzero = V & (R2 > 0)
        r = np.sqrt(R2[nonzero]) * kd
        dvec = np.stack(
            [DX[nonzero] * kd, DY[nonzero] * kd, DZ[nonzero] * kd], axis=-1
        )
        spatial = np.zeros(self.pad + (6,), dtype=complex)
        if static:
            iso = -1.0 / (4 * np.pi * r**3) + 0j
            b_coef = 3.0 / (4 * np.pi * r**3) + 0j
        else:
            e = np.exp(-1j * r) / (4 * np.pi * r)
            iso = e * (1 - 1j / r - 1 / r**2)
            b_coef = e * (-1 + 3j / r + 3 / r**2)
        # components: kd^3 [ iso * delta_ij + b * di dj / r^2 ]
        for c, (i, j) in enumerate(_IJ):
            comp = b_coef * dvec[:, i] * dvec[:, j] / r**2
            if i == j:
                comp = comp + iso
            spatial[..., c][nonzero] = kd**3 * comp
        # self block at offset zero
        for c, (i, j) in enumerate(_IJ):
            if i == j:
                spatial[0, 0, 0, c] = self.self_scalar
        self.spatial = spatial
        self.spectral = _fftn(spatial)

    def roundtrip_error(self) -> float:
        back = _ifftn(self.spectral)
        return float(np.max(np.abs(back - self.spatial)))

    def block(self, offset) -> np.ndarray:
        """Symmetric 3x3 block at a lattice offset (positive or negative)."""
        ox, oy, oz = (int(o) % p for o, p in zip(offset, self.pad))
        comp = self.spatial[ox, oy, oz]
        m = np.empty((3, 3), dtype=complex)
        for c, (i, j) in enumerate(_IJ):
            m[i, j] = comp[c]
            m[j, i] = comp[c]
        return m


class ScalarGreenTable:
    """Scalar analog of DyadicGreenTable: kd^3 e^{-iR}/(4 pi R) with the
    equivalent-sphere self value of k^2 C on the diagonal."""

    def __init__(self, kd: float, dims):
        self.kd = float(kd)
        self.dims = tuple(int(n) for n in dims)
        self.pad = tuple(sfft.next_fast_len(2 * n - 1) for n in self.dims)
        px, py, pz = self.pad
        dx, vx = _offsets(px, self.dims[0])
        dy, vy = _offsets(py, self.dims[1])
        dz, vz = _offsets(pz, self.dims[2])
        DX, DY, DZ = np.meshgrid(dx, dy, dz, indexing="ij")
        V = vx[:, None, None] & vy[None, :, None] & vz[None, None, :]
        R = np.sqrt(DX.astype(float) ** 2 + DY**2 + DZ**2) * kd
        spatial = np.zeros(self.pad, dtype=complex)
        nz = V & (R > 0)
        spatial[nz] = kd**3 * np.exp(-1j * R[nz]) / (4 * np.pi * R[nz])
        spatial[0, 0, 0] = scalar_self_term(kd)
        self.spatial = spatial
        self.spectral = _fftn(spatial)


# ---------------------------------------------------------------------------
# the operator bundle for one grid

class BornKernel:
    """FFT-accelerated matvecs for G, I - D, gamma_S and the scalar kernel."""

    def __init__(self, grid: VoxelGrid):
        self.grid = grid
        self.idx = tuple(grid.occupied_indices().T)
        self.n = grid.n_occupied
        self._tables: dict = {}

    # -- tables ------------------------------------------------------------
    def table(self, which: str):
        if which not in self._tables:
            if which == "dynamic":
                self._tables[which] = DyadicGreenTable(self.grid.kd, self.grid.dims)
            elif which == "static":
                self._tables[which] = DyadicGreenTable(
                    self.grid.kd, self.grid.dims, static=True
                )
            elif which == "gamma_s":
                dyn = self.table("dynamic")
                tab = object.__new__(DyadicGreenTable)
                tab.kd = dyn.kd
                tab.dims = dyn.dims
                tab.static = False
                tab.pad = dyn.pad
                tab.self_scalar = -np.imag(dyn.self_scalar) + 0j
                tab.self_block = tab.self_scalar * np.eye(3)
                tab.spatial = -dyn.spatial.imag + 0j
                tab.spectral = _fftn(tab.spatial)
                self._tables[which] = tab
            elif which == "scalar":
                self._tables[which] = ScalarGreenTable(self.grid.kd, self.grid.dims)
            else:
                raise KeyError(which)
        return self._tables[which]

    # -- convolution cores ---------------------------------------------------
    def _conv_vec(self, values: np.ndarray, which: str) -> np.ndarray:
        tab = self.table(which)
        px, py, pz = tab.pad
        work = np.zeros((px, py, pz, 3), dtype=complex)
        work[self.idx[0], self.idx[1], self.idx[2], :] = values
        fhat = _fftn(work)
        khat = tab.spectral
        out = np.empty_like(fhat)
        # symmetric block times vector, from the 6 stored components
        out[..., 0] = (
            khat[..., 0] * fhat[..., 0]
            + khat[..., 3] * fhat[..., 1]
            + khat[..., 4] * fhat[..., 2]
        )
        out[..., 1] = (
            khat[..., 3] * fhat[..., 0]
            + khat[..., 1] * fhat[..., 1]
            + khat[..., 5] * fhat[..., 2]
        )
        out[..., 2] = (
            khat[..., 4] * fhat[..., 0]
            + khat[..., 5] * fhat[..., 1]
            + khat[..., 2] * fhat[..., 2]
        )
        res = _ifftn(out)
        return res[self.idx[0], self.idx[1], self.idx[2], :]

    def _conv_scalar(self, values: np.ndarray) -> np.ndarray:
        tab = self.table("scalar")
        work = np.zeros(tab.pad, dtype=complex)
        work[self.idx] = values
        res = _ifftn(_fftn(work) * tab.spectral)
        return res[self.idx]

    # -- operators -----------------------------------------------------------
    def apply_G(self, values: np.ndarray) -> np.ndarray:
        return self._conv_vec(values, "dynamic")

    def apply_static_dipole(self, values: np.ndarray) -> np.ndarray:
        """(I - D) values: minus the k -> 0 limit of G."""
        return -self._conv_vec(values, "static")

    def apply_gamma_S(self, values: np.ndarray) -> np.ndarray:
        return self._conv_vec(values, "gamma_s")

    def apply_born(self, values: np.ndarray, chi) -> np.ndarray:
        """B values = values - G (chi * values); chi scalar or per-voxel (N,)."""
        chi = np.asarray(chi)
        src = values * (chi if chi.ndim == 0 else chi[:, None])
        return values - self.apply_G(src)

    def apply_scalar_kernel(self, values: np.ndarray) -> np.ndarray:
        """k^2 C values for a scalar field over occupied voxels."""
        return self._conv_scalar(values)

    # -- dense oracles --------------------------------------------------------
    def dense_G(self, which: str = "dynamic") -> np.ndarray:
        if self.n > DENSE_CAP:
            raise ValueError(f"dense assembly capped at {DENSE_CAP} voxels")
        tab = self.table(which)
        idx = self.grid.occupied_indices()
        out = np.empty((3 * self.n, 3 * self.n), dtype=complex)
        for a in range(self.n):
            for b in range(a, self.n):
                blk = tab.block(idx[a] - idx[b])
                out[3 * a : 3 * a + 3, 3 * b : 3 * b + 3] = blk
                # Gamma(d) = Gamma(-d) and symmetric blocks: exact reciprocity
                out[3 * b : 3 * b + 3, 3 * a : 3 * a + 3] = blk
        return out

    def dense_scalar(self) -> np.ndarray:
        if self.n > DENSE_CAP:
            raise ValueError(f"dense assembly capped at {DENSE_CAP} voxels")
        tab = self.table("scalar")
        idx = self.grid.occupied_indices()
        mat = np.empty((self.n, self.n), dtype=complex)
        for a in range(self.n):
            for b in range(self.n):
                ox, oy, oz = ((idx[a] - idx[b]) % tab.pad).astype(int)
                mat[a, b] = tab.spatial[ox, oy, oz]
        return mat

    # -- scipy handles ---------------------------------------------------------
    def linear_operator(self, which: str = "G", chi=None) -> LinearOperator:
        """Flat (3N,) operator handle; `which` in {G, born, static, gamma_s, G_plus_I}."""
        n3 = 3 * self.n

        if which == "G":
            f = lambda x: self.apply_G(x.reshape(self.n, 3)).ravel()
        elif which == "G_plus_I":
            f = lambda x: (self.apply_G(x.reshape(self.n, 3)) + x.reshape(self.n, 3)).ravel()
        elif which == "born":
            f = lambda x: self.apply_born(x.reshape(self.n, 3), chi).ravel()
        elif which == "static":
            f = lambda x: self.apply_static_dipole(x.reshape(self.n, 3)).ravel()
        elif which == "D":
            f = lambda x: (
                x.reshape(self.n, 3) - self.apply_static_dipole(x.reshape(self.n, 3))
            ).ravel()
        elif which == "gamma_s":
            f = lambda x: self.apply_gamma_S(x.reshape(self.n, 3)).ravel()
        else:
            raise KeyError(which)
        return LinearOperator((n3, n3), matvec=f, dtype=complex)

_KERNELS: "weakref.WeakKeyDictionary[VoxelGrid, BornKernel]" = weakref.WeakKeyDictionary()


def get_kernel(grid: VoxelGrid) -> BornKernel:
    """Per-grid kernel cache (grids are immutable)."""
    k = _KERNELS.get(grid)
    if k is None:
        k = BornKernel(grid)
        _KERNELS[grid] = k
    return k


# ---------------------------------------------------------------------------
# module-level operation surface

def _vals(E):
    return E.values if isinstance(E, ComplexVectorField) else np.asarray(E)


def apply_G(grid: VoxelGrid, E) -> ComplexVectorField:
    """G E over the occupied voxels (FFT path)."""
    return ComplexVectorField(grid, get_kernel(grid).apply_G(_vals(E)))


def apply_born(grid: VoxelGrid, E, chi=None) -> ComplexVectorField:
    """(I - chi G) E; chi = None takes the grid's per-voxel susceptibility."""
    if chi is None:
        chi = grid.occupied_chi()
    return ComplexVectorField(grid, get_kernel(grid).apply_born(_vals(E), chi))


def apply_static_dipole(grid: VoxelGrid, E) -> ComplexVectorField:
    """(I - D) E: Hermitian positive-semidefinite static part."""
    return ComplexVectorField(grid, get_kernel(grid).apply_static_dipole(_vals(E)))


def apply_gamma_S(grid: VoxelGrid, E) -> ComplexVectorField:
    """gamma_S E: the Hermitian PSD sin-kernel part of G."""
    return ComplexVectorField(grid, get_kernel(grid).apply_gamma_S(_vals(E)))


def apply_scalar(grid: VoxelGrid, u, chi=None) -> np.ndarray:
    """(I - chi k^2 C) u for a scalar field u over occupied voxels."""
    if chi is None:
        chi = grid.occupied_chi()
    u = np.asarray(u, dtype=complex)
    chi = np.asarray(chi)
    src = u * chi
    return u - get_kernel(grid).apply_scalar_kernel(src)


def apply_scalar_kernel(grid: VoxelGrid, u) -> np.ndarray:
    """k^2 C u (scalar convolution alone)."""
    return get_kernel(grid).apply_scalar_kernel(np.asarray(u, dtype=complex))

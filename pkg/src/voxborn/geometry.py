"""Shape specification, voxelization and the geometric functionals feeding the
analytic operator-norm bounds.

All lengths are in k = 1 units.  A voxel is occupied iff its center lies
inside the shape; the circumscribed/inscribed radii returned for grids carry
conservative half-diagonal corrections so that analytic bounds computed from
them stay valid for the underlying voxel region.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

_MAGIC = b"VOXB"
_MASK_VERSION = 1


class DegenerateShapeError(ValueError):
    """Voxelization produced no occupied voxel."""


@dataclass(frozen=True)
class Sphere:
    radius: float
    chi: complex = 0.0
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")

    def bounding_box(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    def contains(self, points):
        d = points - np.asarray(self.center)
        return np.einsum("ij,ij->i", d, d) < self.radius**2

    def analytic_circumscribed_radius(self):
        return self.radius

    def analytic_inscribed_radius(self):
        return self.radius

    def analytic_volume(self):
        return 4.0 * np.pi / 3.0 * self.radius**3


@dataclass(frozen=True)
class Cylinder:
    """Circular cylinder of radius `rho` and full height `height`, axis along z."""

    rho: float
    height: float
    chi: complex = 0.0
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.rho <= 0 or self.height <= 0:
            raise ValueError("cylinder dimensions must be positive")

    def bounding_box(self):
        c = np.asarray(self.center)
        half = np.array([self.rho, self.rho, self.height / 2])
        return c - half, c + half

    def contains(self, points):
        d = points - np.asarray(self.center)
        return (d[:, 0] ** 2 + d[:, 1] ** 2 < self.rho**2) & (
            np.abs(d[:, 2]) < self.height / 2
        )

    def analytic_circumscribed_radius(self):
        return float(np.hypot(self.rho, self.height / 2))

    def analytic_inscribed_radius(self):
        return min(self.rho, self.height / 2)

    def analytic_volume(self):
        return float(np.pi * self.rho**2 * self.height)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with edge lengths (ax, ay, az)."""

    ax: float
    ay: float
    az: float
    chi: complex = 0.0
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if min(self.ax, self.ay, self.az) <= 0:
            raise ValueError("box edges must be positive")

    def bounding_box(self):
        c = np.asarray(self.center)
        half = np.array([self.ax, self.ay, self.az]) / 2
        return c - half, c + half

    def contains(self, points):
        d = np.abs(points - np.asarray(self.center))
        half = np.array([self.ax, self.ay, self.az]) / 2
        return np.all(d < half - 1e-12 * np.maximum(1.0, half), axis=1)

    def analytic_circumscribed_radius(self):
        return 0.5 * float(np.sqrt(self.ax**2 + self.ay**2 + self.az**2))

    def analytic_inscribed_radius(self):
        return 0.5 * min(self.ax, self.ay, self.az)

    def analytic_volume(self):
        return self.ax * self.ay * self.az


@dataclass(frozen=True)
class Union:
    """Union of shapes; the first member containing a point sets its chi."""

    members: tuple

    def __post_init__(self):
        if not self.members:
            raise ValueError("union must have at least one member")

    def bounding_box(self):
        los, his = zip(*(m.bounding_box() for m in self.members))
        return np.min(los, axis=0), np.max(his, axis=0)

    def contains(self, points):
        inside = np.zeros(len(points), dtype=bool)
        for m in self.members:
            inside |= m.contains(points)
        return inside

    def chi_at(self, points):
        chi = np.zeros(len(points), dtype=complex)
        assigned = np.zeros(len(points), dtype=bool)
        for m in self.members:
            inside = m.contains(points) & ~assigned
            chi[inside] = m.chi
            assigned |= inside
        return chi


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Occupancy lattice with per-voxel complex susceptibility.

    Voxel (i, j, k) has its center at ``origin + kd * (i, j, k)``; `mask` and
    `chi` are C-ordered (nx, ny, nz) arrays.  Grids are immutable after
    construction and safe to share across threads.
    """

    kd: float
    mask: np.ndarray
    chi: np.ndarray
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.kd <= 0:
            raise ValueError("kd must be positive")
        if self.mask.ndim != 3 or self.chi.shape != self.mask.shape:
            raise ValueError("mask and chi must be matching 3-d arrays")
        if not self.mask.any():
            raise DegenerateShapeError("grid has no occupied voxel")
        if not np.all(np.isfinite(self.chi[self.mask])):
            raise ValueError("chi must be finite on occupied voxels")
        self.mask.setflags(write=False)
        self.chi.setflags(write=False)
        self.origin.setflags(write=False)

    @property
    def dims(self):
        return self.mask.shape

    @property
    def n_occupied(self) -> int:
        return int(np.count_nonzero(self.mask))

    def occupied_indices(self) -> np.ndarray:
        """(N, 3) integer indices of occupied voxels, C order."""
        return np.argwhere(self.mask)

    def occupied_centers(self) -> np.ndarray:
        """(N, 3) centers of occupied voxels in k = 1 units."""
        return self.origin + self.kd * self.occupied_indices()

    def occupied_chi(self) -> np.ndarray:
        return self.chi[self.mask]

    def with_uniform_chi(self, chi: complex) -> "VoxelGrid":
        c = np.zeros_like(self.chi)
        c[self.mask] = chi
        return VoxelGrid(self.kd, self.mask.copy(), c, self.origin.copy())


def voxelize(shape, kd: float) -> VoxelGrid:
    """Voxelize a shape: a voxel is occupied iff its center lies inside.

    Deterministic for identical inputs; raises DegenerateShapeError when the
    shape is smaller than a single voxel at this resolution.
    """
    if kd <= 0:
        raise ValueError("kd must be positive")
    lo, hi = shape.bounding_box()
    dims = np.maximum(np.ceil((hi - lo) / kd - 1e-12).astype(int), 1)
    # symmetric placement: centers straddle the bounding-box midpoint
    mid = (np.asarray(lo) + np.asarray(hi)) / 2
    origin = mid - (dims - 1) / 2.0 * kd
    ii, jj, kk = np.meshgrid(*(np.arange(n) for n in dims), indexing="ij")
    centers = origin + kd * np.column_stack(
        [ii.ravel(), jj.ravel(), kk.ravel()]
    ).astype(float)
    inside = shape.contains(centers)
    if not inside.any():
        raise DegenerateShapeError("no voxel center falls inside the shape")
    mask = inside.reshape(tuple(dims))
    chi = np.zeros(tuple(dims), dtype=complex)
    if isinstance(shape, Union):
        chi.ravel()[inside] = shape.chi_at(centers[inside])
    else:
        chi.ravel()[inside] = shape.chi
    return VoxelGrid(kd, mask, chi, origin)


def grid_from_mask(mask: np.ndarray, kd: float, chi) -> VoxelGrid:
    """Grid from an explicit occupancy mask; chi is a scalar or a full array."""
    chi_arr = np.zeros(mask.shape, dtype=complex)
    if np.isscalar(chi):
        chi_arr[mask] = chi
    else:
        chi_arr[mask] = np.asarray(chi, dtype=complex)[mask]
    return VoxelGrid(kd, mask.astype(bool), chi_arr)


# ---------------------------------------------------------------------------
# geometric functionals

def _circumsphere(points):
    """Smallest sphere through 1..4 affinely independent boundary points."""
    p = np.asarray(points, dtype=float)
    if len(p) == 1:
        return p[0], 0.0
    a = p[0]
    d = p[1:] - a
    # solve 2 d c' = |d|^2 in the affine span of the support set
    g = 2.0 * d @ d.T
    rhs = np.einsum("ij,ij->i", d, d)
    # lstsq handles degenerate (coplanar lattice) support sets: minimum-norm
    # center in the affine hull is the smallest sphere through the points
    lam = np.linalg.lstsq(g, rhs, rcond=None)[0]
    c = a + lam @ d
    return c, float(np.linalg.norm(p[0] - c))


def minimal_enclosing_ball(points: np.ndarray, seed: int = 12345):
    """Exact smallest enclosing ball (Welzl-style, move-to-front, iterative).

    Expected linear time after a deterministic shuffle; runs on the convex
    hull when many points are supplied.
    """
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) == 0:
        raise ValueError("no points")
    if len(pts) > 2000:
        try:
            from scipy.spatial import ConvexHull

            pts = pts[np.unique(ConvexHull(pts).vertices)]
        except Exception:
            pass  # degenerate (coplanar) inputs: keep all points
    rng = np.random.default_rng(seed)
    pts = pts[rng.permutation(len(pts))]
    scale = max(1.0, float(np.max(np.abs(pts))))
    eps = 1e-10 * scale

    c, r = pts[0].copy(), 0.0
    for i in range(1, len(pts)):
        if np.sum((pts[i] - c) ** 2) <= (r + eps) ** 2:
            continue
        c, r = pts[i].copy(), 0.0
        for j in range(i):
            if np.sum((pts[j] - c) ** 2) <= (r + eps) ** 2:
                continue
            c = 0.5 * (pts[i] + pts[j])
            r = float(np.linalg.norm(pts[i] - c))
            for k in range(j):
                if np.sum((pts[k] - c) ** 2) <= (r + eps) ** 2:
                    continue
                c, r = _circumsphere([pts[i], pts[j], pts[k]])
                for l in range(k):
                    if np.sum((pts[l] - c) ** 2) <= (r + eps) ** 2:
                        continue
                    c, r = _circumsphere([pts[i], pts[j], pts[k], pts[l]])
    # enclosing guarantee against numerical slack in degenerate support sets
    r = max(r, float(np.sqrt(np.max(np.sum((pts - c) ** 2, axis=1)))))
    return c, float(r)


def circumscribed_radius(grid: VoxelGrid) -> float:
    """kR_V: minimal enclosing ball of voxel centers plus half the voxel diagonal.

    A conservative over-estimate of the continuum circumscribed radius, so
    upper bounds evaluated with it remain valid.
    """
    _, r = minimal_enclosing_ball(grid.occupied_centers())
    return r + 0.5 * np.sqrt(3.0) * grid.kd


def inscribed_radius(grid: VoxelGrid) -> float:
    """kr_V: largest center-to-complement distance minus conservative margins.

    Distance transform on the padded mask gives center-to-center distance to
    the complement; half a voxel converts to the region boundary and half a
    diagonal guards corner effects.  Clamped at zero (a single voxel has no
    inscribed sphere to speak of).
    """
    padded = np.pad(grid.mask, 1)
    dist = ndimage.distance_transform_edt(padded, sampling=grid.kd)
    dmax = float(dist.max())
    return max(0.0, dmax - 0.5 * grid.kd - 0.5 * np.sqrt(3.0) * grid.kd)


def volume(grid: VoxelGrid) -> float:
    """k^3 V = occupied count times kd^3."""
    return grid.n_occupied * grid.kd**3


@dataclass(frozen=True)
class GeometrySummary:
    """The three functionals the analytic bounds consume."""

    circumscribed: float
    inscribed: float
    volume: float

    @classmethod
    def of_grid(cls, grid: VoxelGrid) -> "GeometrySummary":
        return cls(circumscribed_radius(grid), inscribed_radius(grid), volume(grid))

    @classmethod
    def of_shape(cls, shape) -> "GeometrySummary":
        return cls(
            shape.analytic_circumscribed_radius(),
            shape.analytic_inscribed_radius(),
            shape.analytic_volume(),
        )


# ---------------------------------------------------------------------------
# voxel-mask file format
#
# magic 'VOXB' | u32 version | u32 nx, ny, nz | f64 kd | u32 flags |
# nx*ny*nz occupancy bytes (C order, z fastest) |
# if flags & 1: nx*ny*nz interleaved (Re, Im) f64 pairs of per-voxel chi.

def save_mask(path, grid: VoxelGrid, with_chi: bool = True) -> None:
    flags = 1 if with_chi else 0
    nx, ny, nz = grid.dims
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIIIdI", _MASK_VERSION, nx, ny, nz, grid.kd, flags))
        fh.write(grid.mask.astype(np.uint8).tobytes(order="C"))
        if with_chi:
            inter = np.empty(grid.chi.size * 2, dtype="<f8")
            inter[0::2] = grid.chi.real.ravel(order="C")
            inter[1::2] = grid.chi.imag.ravel(order="C")
            fh.write(inter.tobytes())


def load_mask(path) -> VoxelGrid:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a voxel-mask file")
        version, nx, ny, nz, kd, flags = struct.unpack("<IIIIdI", fh.read(28))
        if version != _MASK_VERSION:
            raise ValueError(f"unsupported mask version {version}")
        n = nx * ny * nz
        mask = np.frombuffer(fh.read(n), dtype=np.uint8).reshape(nx, ny, nz).astype(bool)
        if flags & 1:
            raw = np.frombuffer(fh.read(16 * n), dtype="<f8")
            chi = (raw[0::2] + 1j * raw[1::2]).reshape(nx, ny, nz)
        else:
            chi = np.zeros((nx, ny, nz), dtype=complex)
    return VoxelGrid(kd, mask, np.ascontiguousarray(chi))

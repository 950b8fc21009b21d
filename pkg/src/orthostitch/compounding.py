"""Backprojection compounding: smear image pixels into a shared voxel grid.

Discretization is voxel-driven gathering: each voxel center inside the
depth window projects into the image and picks up the pixel value it
lands on (nearest by default, so a voxel within half a pixel of a ray
receives that ray's value exactly once; bilinear optional). A companion
count grid records how many images cover each voxel so downstream code
can choose between the raw sum and the count-normalized average.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numba import njit, prange

from .geometry import ProjectionMatrix, backproject_pixel
from .phantom import VoxelVolume
from .projector import Image2D

__all__ = [
    "CompoundingGrid",
    "GridSpec",
    "make_grid",
    "backproject_image",
    "compound",
    "normalized",
]


@dataclass(frozen=True)
class CompoundingGrid:
    """Accumulated backprojection values plus per-voxel hit counts."""

    values: VoxelVolume
    counts: VoxelVolume | None = None

    def __post_init__(self) -> None:
        if self.counts is not None:
            if self.counts.dims != self.values.dims \
                    or self.counts.spacing != self.values.spacing \
                    or not np.array_equal(self.counts.origin, self.values.origin):
                raise ValueError("values and counts grids must share geometry")
            c = self.counts.data
            if not np.issubdtype(c.dtype, np.integer) or c.min() < 0:
                raise ValueError("counts must be non-negative integers")

    def copy(self) -> "CompoundingGrid":
        return CompoundingGrid(
            values=replace(self.values, data=self.values.data.copy()),
            counts=None if self.counts is None
            else replace(self.counts, data=self.counts.data.copy()))


@dataclass(frozen=True)
class GridSpec:
    """How to build the compounding grid when none is given explicitly."""

    spacing_mm: float = 1.0
    margin_mm: float = 1.0
    bounds: tuple | None = None  # (lo_mm, hi_mm) world corners, overrides autofit

    def __post_init__(self) -> None:
        if self.spacing_mm <= 0:
            raise ValueError("spacing_mm must be > 0")


def make_grid(images: list, d: float, spec: GridSpec | None = None) -> CompoundingGrid:
    """Empty grid spanning the union of the images' depth-d frustums."""
    spec = spec or GridSpec()
    if spec.bounds is not None:
        lo = np.asarray(spec.bounds[0], dtype=float)
        hi = np.asarray(spec.bounds[1], dtype=float)
    else:
        if not images:
            raise ValueError("need at least one image to size the grid")
        pts = []
        for img, P in images:
            w, h = img.dims
            for pixel in ((0, 0), (w - 1, 0), (0, h - 1), (w - 1, h - 1)):
                ray = backproject_pixel(P, pixel, d)
                pts.append(ray.point_at(np.array(ray.t_range)))
        pts = np.vstack(pts)
        lo = pts.min(axis=0) - spec.margin_mm
        hi = pts.max(axis=0) + spec.margin_mm
    s = spec.spacing_mm
    dims = tuple(int(np.floor((hi[i] - lo[i]) / s)) + 1 for i in range(3))
    values = VoxelVolume(np.zeros(dims, dtype=np.float32), (s, s, s), lo)
    counts = VoxelVolume(np.zeros(dims, dtype=np.int32), (s, s, s), lo)
    return CompoundingGrid(values=values, counts=counts)


@njit(cache=True, parallel=True)
def _gather(img, P, depth_lo, depth_hi, origin, spacing, values, counts, nearest):
    nx, ny, nz = values.shape
    h, w = img.shape
    for ix in prange(nx):
        X = origin[0] + ix * spacing[0]
        for iy in range(ny):
            Y = origin[1] + iy * spacing[1]
            for iz in range(nz):
                Z = origin[2] + iz * spacing[2]
                depth = P[2, 0] * X + P[2, 1] * Y + P[2, 2] * Z + P[2, 3]
                if depth < depth_lo or depth > depth_hi:
                    continue
                u = (P[0, 0] * X + P[0, 1] * Y + P[0, 2] * Z + P[0, 3]) / depth
                v = (P[1, 0] * X + P[1, 1] * Y + P[1, 2] * Z + P[1, 3]) / depth
                if nearest:
                    m = int(np.floor(u + 0.5))
                    n = int(np.floor(v + 0.5))
                    if 0 <= m < w and 0 <= n < h:
                        values[ix, iy, iz] += np.float32(img[n, m])
                        counts[ix, iy, iz] += 1
                else:
                    if u < 0.0 or v < 0.0 or u > w - 1 or v > h - 1:
                        continue
                    x0 = int(u)
                    y0 = int(v)
                    if x0 == w - 1:
                        x0 -= 1
                    if y0 == h - 1:
                        y0 -= 1
                    fx = u - x0
                    fy = v - y0
                    val = (img[y0, x0] * (1 - fx) * (1 - fy)
                           + img[y0, x0 + 1] * fx * (1 - fy)
                           + img[y0 + 1, x0] * (1 - fx) * fy
                           + img[y0 + 1, x0 + 1] * fx * fy)
                    values[ix, iy, iz] += np.float32(val)
                    counts[ix, iy, iz] += 1


def _scaled_projection(P: ProjectionMatrix) -> np.ndarray:
    """Rescale P so its homogeneous w coordinate is metric depth in mm."""
    mat = P.P
    m3 = mat[2, :3]
    return mat * (np.sign(np.linalg.det(mat[:, :3])) / np.linalg.norm(m3))


def _accumulate(grid: CompoundingGrid, img: Image2D, P: ProjectionMatrix,
                d: float, interp: str) -> None:
    if not 0.0 < d <= 1.0:
        raise ValueError("d must lie in (0, 1]")
    if interp not in ("nearest", "bilinear"):
        raise ValueError(f"unknown interp mode {interp!r}")
    sdd = P.sdd_mm
    depth_lo, depth_hi = (1.0 - d) * sdd, sdd

    vol = grid.values
    corners = vol.corners_world()
    depths = P.depth_of(corners)
    if depths.max() < depth_lo or depths.min() > depth_hi:
        raise ValueError("grid does not intersect the depth slab implied by d")

    counts = grid.counts.data if grid.counts is not None \
        else np.zeros((1, 1, 1), dtype=np.int32)
    _gather(np.ascontiguousarray(img.data, dtype=np.float64),
            _scaled_projection(P), depth_lo, depth_hi,
            np.asarray(vol.origin, dtype=np.float64),
            np.asarray(vol.spacing, dtype=np.float64),
            grid.values.data, counts, interp == "nearest")


def backproject_image(grid: CompoundingGrid, img: Image2D, P: ProjectionMatrix,
                      d: float, interp: str = "nearest") -> CompoundingGrid:
    """Return ``grid`` plus the backprojection of one image (input untouched)."""
    out = grid.copy()
    _accumulate(out, img, P, d, interp)
    return out


def compound(images: list, d: float, grid_spec: GridSpec | None = None,
             interp: str = "nearest") -> CompoundingGrid:
    """Sum of the per-image backprojections on a shared grid.

    ``images`` is a list of (Image2D, ProjectionMatrix); the same depth
    fraction d applies to every image. Accumulation runs left to right;
    swapping two images leaves the result bit-identical (float addition
    commutes).
    """
    if not images:
        raise ValueError("need at least one image to compound")
    grid = make_grid(images, d, grid_spec)
    for img, P in images:
        _accumulate(grid, img, P, d, interp)
    return grid


def normalized(grid: CompoundingGrid) -> VoxelVolume:
    """Count-normalized average; voxels no image covers stay zero."""
    if grid.counts is None:
        raise ValueError("grid has no counts companion")
    c = grid.counts.data
    out = np.zeros_like(grid.values.data, dtype=np.float32)
    np.divide(grid.values.data, c, out=out, where=c > 0)
    return replace(grid.values, data=out)

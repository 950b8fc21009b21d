"""Forward projection: cone-beam DRRs and parallel-beam ground truth.

Both projectors march rays with a fixed step no larger than half the
smallest voxel spacing and accumulate with the composite trapezoid
rule; samples outside the volume contribute zero (air). Attenuation
volumes are in 1/mm, so pixel values are dimensionless line integrals.

Pixels are parallelized with one owner thread per row and a fixed
summation order along each ray, so parallel results are bit-identical
to sequential ones.
"""

from __future__ import annotations

from dataclasses import dataclass
import json
import os

import numpy as np
from numba import njit, prange

from .geometry import Intrinsics, ProjectionMatrix, _check_rotation
from .phantom import VoxelVolume

__all__ = [
    "Image2D",
    "NoiseSpec",
    "cone_beam_drr",
    "orthographic_drr",
    "load_image",
    "save_image",
    "export_png16",
    "export_pgm16",
]


@dataclass(frozen=True)
class Image2D:
    """2D scalar grid; ``data[y, x]`` with y = row, x = column."""

    data: np.ndarray
    spacing: float = 1.0

    def __post_init__(self) -> None:
        data = np.asarray(self.data)
        if data.ndim != 2 or min(data.shape) < 1:
            raise ValueError("image data must be 2D with dims >= 1")
        if not np.all(np.isfinite(data)):
            raise ValueError("image data contains non-finite values")
        if self.spacing <= 0:
            raise ValueError("spacing must be > 0")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def dims(self) -> tuple[int, int]:
        """(width, height) in pixels."""
        h, w = self.data.shape
        return (w, h)


@dataclass(frozen=True)
class NoiseSpec:
    """Photon-count noise on the intensity domain exp(-integral)."""

    photons: float = 1e4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.photons <= 0:
            raise ValueError("photons must be > 0")


@njit(cache=True, inline="always")
def _trilinear(data, fx, fy, fz, nx, ny, nz):
    if fx < 0.0 or fy < 0.0 or fz < 0.0 or fx > nx - 1 or fy > ny - 1 or fz > nz - 1:
        return 0.0
    ix = int(fx)
    iy = int(fy)
    iz = int(fz)
    if ix == nx - 1:
        ix -= 1
    if iy == ny - 1:
        iy -= 1
    if iz == nz - 1:
        iz -= 1
    ax = fx - ix
    ay = fy - iy
    az = fz - iz
    c00 = data[ix, iy, iz] * (1 - ax) + data[ix + 1, iy, iz] * ax
    c10 = data[ix, iy + 1, iz] * (1 - ax) + data[ix + 1, iy + 1, iz] * ax
    c01 = data[ix, iy, iz + 1] * (1 - ax) + data[ix + 1, iy, iz + 1] * ax
    c11 = data[ix, iy + 1, iz + 1] * (1 - ax) + data[ix + 1, iy + 1, iz + 1] * ax
    c0 = c00 * (1 - ay) + c10 * ay
    c1 = c01 * (1 - ay) + c11 * ay
    return c0 * (1 - az) + c1 * az


@njit(cache=True, parallel=True)
def _integrate_rays(data, origin, spacing, ray_origins, ray_dirs, max_step, out):
    nx, ny, nz = data.shape
    h, w = out.shape
    lo0, lo1, lo2 = origin[0], origin[1], origin[2]
    hi0 = lo0 + spacing[0] * (nx - 1)
    hi1 = lo1 + spacing[1] * (ny - 1)
    hi2 = lo2 + spacing[2] * (nz - 1)
    for r in prange(h):
        for c in range(w):
            ox = ray_origins[r, c, 0]
            oy = ray_origins[r, c, 1]
            oz = ray_origins[r, c, 2]
            dx = ray_dirs[r, c, 0]
            dy = ray_dirs[r, c, 1]
            dz = ray_dirs[r, c, 2]
            # slab intersection with the trilinear-support box
            t0 = -1e30
            t1 = 1e30
            if abs(dx) > 1e-12:
                a = (lo0 - ox) / dx
                b = (hi0 - ox) / dx
                t0 = max(t0, min(a, b))
                t1 = min(t1, max(a, b))
            elif ox < lo0 or ox > hi0:
                out[r, c] = 0.0
                continue
            if abs(dy) > 1e-12:
                a = (lo1 - oy) / dy
                b = (hi1 - oy) / dy
                t0 = max(t0, min(a, b))
                t1 = min(t1, max(a, b))
            elif oy < lo1 or oy > hi1:
                out[r, c] = 0.0
                continue
            if abs(dz) > 1e-12:
                a = (lo2 - oz) / dz
                b = (hi2 - oz) / dz
                t0 = max(t0, min(a, b))
                t1 = min(t1, max(a, b))
            elif oz < lo2 or oz > hi2:
                out[r, c] = 0.0
                continue
            if t1 <= t0:
                out[r, c] = 0.0
                continue
            n_steps = int(np.ceil((t1 - t0) / max_step))
            if n_steps < 1:
                n_steps = 1
            step = (t1 - t0) / n_steps
            acc = 0.0
            for k in range(n_steps + 1):
                t = t0 + k * step
                fx = (ox + t * dx - lo0) / spacing[0]
                fy = (oy + t * dy - lo1) / spacing[1]
                fz = (oz + t * dz - lo2) / spacing[2]
                v = _trilinear(data, fx, fy, fz, nx, ny, nz)
                if k == 0 or k == n_steps:
                    acc += 0.5 * v
                else:
                    acc += v
            out[r, c] = acc * step


def _march(vol: VoxelVolume, ray_origins, ray_dirs, step_mm):
    data = np.ascontiguousarray(vol.data, dtype=np.float64)
    out = np.empty(ray_origins.shape[:2], dtype=np.float64)
    _integrate_rays(
        data, np.asarray(vol.origin, dtype=np.float64),
        np.asarray(vol.spacing, dtype=np.float64),
        np.ascontiguousarray(ray_origins, dtype=np.float64),
        np.ascontiguousarray(ray_dirs, dtype=np.float64),
        float(step_mm), out)
    return out


def cone_beam_drr(vol: VoxelVolume, P: ProjectionMatrix,
                  intr: Intrinsics, noise: NoiseSpec | None = None,
                  step_mm: float | None = None) -> Image2D:
    """Line-integral X-ray image of ``vol`` through the camera ``P``.

    ``intr`` fixes the detector raster (size and pixel spacing). With a
    NoiseSpec, Poisson photon noise is applied to exp(-integral) and
    log-converted back.
    """
    w, h = intr.detector_size
    if step_mm is None:
        step_mm = 0.5 * min(vol.spacing)
    M = P.P[:, :3]
    center = P.camera_center
    axis = P.principal_axis

    us, vs = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    pix_h = np.stack([us, vs, np.ones_like(us)], axis=-1)
    dirs = pix_h @ np.linalg.inv(M).T
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    # orient every ray from the source toward the detector
    flip = np.sign(dirs @ axis)
    dirs *= flip[..., None]
    origins = np.broadcast_to(center, dirs.shape)

    integ = _march(vol, origins, dirs, step_mm)
    if noise is not None:
        rng = np.random.default_rng(noise.seed)
        intensity = np.exp(-integ)
        counts = rng.poisson(noise.photons * intensity)
        integ = -np.log(np.maximum(counts, 1) / noise.photons)
    return Image2D(data=integ, spacing=intr.pixel_spacing)


def orthographic_drr(vol: VoxelVolume, R: np.ndarray,
                     out_dims: tuple[int, int], out_spacing: float,
                     center_world=None, step_mm: float | None = None) -> Image2D:
    """Parallel-beam projection of ``vol`` along the third row of ``R``.

    Pixel (x, y) integrates along the world line
    ``c + (x - w//2) s r1 + (y - h//2) s r2 + tau r3``; the image center
    pixel is the projection of ``center_world`` (default: the volume's
    center voxel, matching the spectral pipeline's phase reference).
    With R = I this is the z-column sums scaled by the z spacing.
    """
    R = _check_rotation(R)
    w, h = out_dims
    if out_spacing <= 0:
        raise ValueError("out_spacing must be > 0")
    if step_mm is None:
        step_mm = 0.5 * min(vol.spacing)
    c_w = vol.center_world if center_world is None else \
        np.asarray(center_world, dtype=float)

    us = (np.arange(w, dtype=float) - w // 2) * out_spacing
    vs = (np.arange(h, dtype=float) - h // 2) * out_spacing
    UU, VV = np.meshgrid(us, vs)
    base = c_w + UU[..., None] * R[0] + VV[..., None] * R[1]
    dirs = np.broadcast_to(R[2], base.shape)
    integ = _march(vol, base, dirs, step_mm)
    return Image2D(data=integ, spacing=float(out_spacing))


# ---------------------------------------------------------------------------
# image files: JSON header + raw f32/f64, x-fastest (row-major)
# ---------------------------------------------------------------------------

_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


def save_image(img: Image2D, header_path) -> None:
    header_path = os.fspath(header_path)
    data_file = os.path.splitext(header_path)[0] + ".raw"
    kind = {np.dtype("float32"): "f32", np.dtype("float64"): "f64"}.get(
        img.data.dtype, "f32")
    header = {
        "dims": list(img.dims),
        "spacing_mm": img.spacing,
        "dtype": kind,
        "byte_order": "little",
        "data_file": os.path.basename(data_file),
    }
    np.ascontiguousarray(img.data).astype(_DTYPES[kind], copy=False).tofile(data_file)
    with open(header_path, "w") as f:
        json.dump(header, f, indent=1, sort_keys=True)
        f.write("\n")


def load_image(header_path) -> Image2D:
    header_path = os.fspath(header_path)
    with open(header_path) as f:
        header = json.load(f)
    kind = header.get("dtype")
    if kind not in _DTYPES:
        raise ValueError(f"unknown image dtype {kind!r}")
    w, h = (int(v) for v in header["dims"])
    path = os.path.join(os.path.dirname(header_path), header["data_file"])
    expected = w * h * _DTYPES[kind].itemsize
    if os.path.getsize(path) != expected:
        raise ValueError(f"raw file {path} does not match header dims")
    data = np.fromfile(path, dtype=_DTYPES[kind]).reshape(h, w)
    if not np.all(np.isfinite(data)):
        raise ValueError(f"raw file {path} contains non-finite values")
    return Image2D(data=data, spacing=float(header["spacing_mm"]))


def _quantize16(img: Image2D, lo, hi):
    if lo is None:
        lo = float(img.data.min())
    if hi is None:
        hi = float(img.data.max())
    if hi <= lo:
        hi = lo + 1.0
    codes = np.clip(np.round((img.data - lo) / (hi - lo) * 65535), 0, 65535)
    return codes.astype(np.uint16), lo, hi


def export_png16(img: Image2D, path, lo=None, hi=None) -> dict:
    """16-bit grayscale PNG; intensity = lo + (hi-lo) * code / 65535.

    The affine mapping is returned and written to ``<path>.meta.json``.
    """
    from PIL import Image as PILImage

    codes, lo, hi = _quantize16(img, lo, hi)
    PILImage.fromarray(codes).save(os.fspath(path))
    meta = {"intensity_at_code0": lo, "intensity_at_code65535": hi,
            "codes": 65536, "spacing_mm": img.spacing}
    with open(os.fspath(path) + ".meta.json", "w") as f:
        json.dump(meta, f, indent=1, sort_keys=True)
        f.write("\n")
    return meta


def export_pgm16(img: Image2D, path, lo=None, hi=None) -> dict:
    """16-bit binary PGM (big-endian sample order, per the PGM spec)."""
    codes, lo, hi = _quantize16(img, lo, hi)
    h, w = codes.shape
    with open(os.fspath(path), "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        f.write(codes.astype(">u2").tobytes())
    meta = {"intensity_at_code0": lo, "intensity_at_code65535": hi,
            "codes": 65536, "spacing_mm": img.spacing}
    with open(os.fspath(path) + ".meta.json", "w") as f:
        json.dump(meta, f, indent=1, sort_keys=True)
        f.write("\n")
    return meta

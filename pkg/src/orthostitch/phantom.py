"""Procedural femur-like voxel phantoms and raw volume I/O.

The phantom is a stack of geometric primitives: a head sphere at the
superior end, a trochanter bump, a cortical-shell shaft, a condylar
bulge at the knee, and a short tibial stub with a rounded end cap, all
embedded in a soft-tissue cylinder. Every landmark is the center of a
sphere-like structure, so its parallel projection has an intensity peak
at the landmark — which is what makes image-based length measurement on
these phantoms honest.

Volume files are a JSON header next to a raw little-endian array,
x-fastest ordering:

    {"dims": [nx, ny, nz], "spacing_mm": [sx, sy, sz],
     "origin_mm": [x, y, z], "dtype": "f32", "byte_order": "little",
     "data_file": "vol.raw"}
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json
import os

import numpy as np

__all__ = [
    "VoxelVolume",
    "PhantomSpec",
    "GroundTruth",
    "generate_phantom",
    "load_volume",
    "save_volume",
    "LANDMARK_NAMES",
]

LANDMARK_NAMES = ("femoral_head", "greater_trochanter", "knee", "tibia")

_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8"), "i32": np.dtype("<i4")}


@dataclass(frozen=True)
class VoxelVolume:
    """3D scalar grid with physical spacing; data indexed ``[ix, iy, iz]``."""

    data: np.ndarray
    spacing: tuple[float, float, float]
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError("volume data must be 3D with dims >= 1")
        if not np.all(np.isfinite(data)):
            raise ValueError("volume data contains non-finite values")
        sp = tuple(float(s) for s in self.spacing)
        if min(sp) <= 0:
            raise ValueError("spacing must be > 0")
        origin = np.asarray(self.origin, dtype=float).reshape(3)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", sp)
        object.__setattr__(self, "origin", origin)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def center_world(self) -> np.ndarray:
        """World position of the voxel at index dims//2 (the FFT phase center)."""
        half = np.array([n // 2 for n in self.dims], dtype=float)
        return self.origin + half * np.asarray(self.spacing)

    def voxel_to_world(self, idx) -> np.ndarray:
        return self.origin + np.asarray(idx, dtype=float) * np.asarray(self.spacing)

    def world_to_voxel(self, pts) -> np.ndarray:
        return (np.asarray(pts, dtype=float) - self.origin) / np.asarray(self.spacing)

    def corners_world(self) -> np.ndarray:
        """The 8 voxel-center corners of the grid, world mm."""
        nx, ny, nz = self.dims
        idx = np.array([[i, j, k] for i in (0, nx - 1)
                        for j in (0, ny - 1) for k in (0, nz - 1)], dtype=float)
        return self.voxel_to_world(idx)


def save_volume(vol: VoxelVolume, header_path) -> None:
    """Write the JSON header plus the raw array (x-fastest on disk)."""
    header_path = os.fspath(header_path)
    data_file = os.path.splitext(header_path)[0] + ".raw"
    kind = {np.dtype("float32"): "f32", np.dtype("float64"): "f64",
            np.dtype("int32"): "i32"}.get(vol.data.dtype)
    if kind is None:
        raise ValueError(f"unsupported volume dtype {vol.data.dtype}")
    header = {
        "dims": list(vol.dims),
        "spacing_mm": list(vol.spacing),
        "origin_mm": vol.origin.tolist(),
        "dtype": kind,
        "byte_order": "little",
        "data_file": os.path.basename(data_file),
    }
    # x-fastest: transpose so the x index varies fastest in file order
    np.ascontiguousarray(vol.data.transpose(2, 1, 0)).astype(
        _DTYPES[kind], copy=False).tofile(data_file)
    with open(header_path, "w") as f:
        json.dump(header, f, indent=1, sort_keys=True)
        f.write("\n")


def load_volume(header_path) -> VoxelVolume:
    header_path = os.fspath(header_path)
    with open(header_path) as f:
        header = json.load(f)
    kind = header.get("dtype")
    if kind not in _DTYPES:
        raise ValueError(f"unknown volume dtype {kind!r}")
    if header.get("byte_order", "little") != "little":
        raise ValueError("only little-endian volume files are supported")
    dims = tuple(int(v) for v in header["dims"])
    path = os.path.join(os.path.dirname(header_path), header["data_file"])
    expected = int(np.prod(dims)) * _DTYPES[kind].itemsize
    actual = os.path.getsize(path)
    if actual != expected:
        raise ValueError(
            f"raw file {path} holds {actual} bytes, header implies {expected}")
    flat = np.fromfile(path, dtype=_DTYPES[kind])
    data = flat.reshape(dims[2], dims[1], dims[0]).transpose(2, 1, 0)
    if not np.all(np.isfinite(data)):
        raise ValueError(f"raw file {path} contains non-finite values")
    return VoxelVolume(
        data=data,
        spacing=tuple(float(s) for s in header["spacing_mm"]),
        origin=np.array(header["origin_mm"], dtype=float),
    )


# ---------------------------------------------------------------------------
# procedural phantom
# ---------------------------------------------------------------------------


def _default_landmark_template() -> dict:
    # fractions along the head->tibia axis (0 = head end, 1 = tibia end),
    # plus a lateral x offset in mm (trochanter sits off-axis)
    return {
        "femoral_head": (0.0, 0.0),
        "greater_trochanter": (0.09, None),  # lateral offset filled from radii
        "knee": (0.85, 0.0),
        "tibia": (1.0, 0.0),
    }


@dataclass(frozen=True)
class PhantomSpec:
    seed: int = 0
    bone_length_mm: float = 400.0
    shaft_radius_mm: float = 14.0
    head_radius_mm: float = 22.0
    condyle_radius_mm: float = 20.0
    cortical_attenuation: float = 0.05   # 1/mm
    trabecular_attenuation: float = 0.02
    soft_tissue_attenuation: float = 0.005
    landmark_template: dict = field(default_factory=_default_landmark_template)
    volume_dims: tuple[int, int, int] = (144, 464, 144)
    voxel_spacing_mm: tuple[float, float, float] = (1.0, 1.0, 1.0)
    center_mm: tuple[float, float, float] = (0.0, 0.0, 250.0)

    def __post_init__(self) -> None:
        radii = (self.shaft_radius_mm, self.head_radius_mm, self.condyle_radius_mm)
        if min(radii) <= 0:
            raise ValueError("all radii must be > 0")
        atten = (self.cortical_attenuation, self.trabecular_attenuation,
                 self.soft_tissue_attenuation)
        if min(atten) < 0:
            raise ValueError("attenuations must be >= 0")
        # non-strict so a null-contrast (all-zero) phantom stays constructible
        if not (self.cortical_attenuation >= self.trabecular_attenuation
                >= self.soft_tissue_attenuation):
            raise ValueError("need cortical >= trabecular >= soft tissue attenuation")
        if self.bone_length_mm <= 0:
            raise ValueError("bone_length_mm must be > 0")


@dataclass(frozen=True)
class GroundTruth:
    landmarks_3d: dict  # name -> np.ndarray(3,), world mm
    bone_length_mm: float

    def __post_init__(self) -> None:
        h = np.asarray(self.landmarks_3d["femoral_head"], dtype=float)
        t = np.asarray(self.landmarks_3d["tibia"], dtype=float)
        if abs(np.linalg.norm(h - t) - self.bone_length_mm) > 1e-9:
            raise ValueError("bone_length_mm must equal the head-tibia distance")

    def to_json(self, path) -> None:
        d = {"landmarks": {k: np.asarray(v, dtype=float).tolist()
                           for k, v in self.landmarks_3d.items()},
             "bone_length_mm": self.bone_length_mm}
        with open(path, "w") as f:
            json.dump(d, f, indent=1, sort_keys=True)
            f.write("\n")

    @classmethod
    def from_json(cls, path) -> "GroundTruth":
        with open(path) as f:
            d = json.load(f)
        return cls({k: np.array(v, dtype=float) for k, v in d["landmarks"].items()},
                   float(d["bone_length_mm"]))


def _sphere(dist2_to, center, radius):
    return dist2_to(center) <= radius * radius


def generate_phantom(spec: PhantomSpec) -> tuple[VoxelVolume, GroundTruth]:
    """Build the femur phantom; deterministic for a fixed seed.

    The bone runs along world +y (head superior, tibia inferior),
    centered on ``spec.center_mm``. Raises if the anatomy would poke out
    of the volume.
    """
    rng = np.random.default_rng(spec.seed)
    dims = spec.volume_dims
    sp = np.asarray(spec.voxel_spacing_mm, dtype=float)
    center = np.asarray(spec.center_mm, dtype=float)
    origin = center - sp * np.array([n // 2 for n in dims])

    L = spec.bone_length_mm
    head = center + np.array([0.0, L / 2.0, 0.0])
    tibia = center + np.array([0.0, -L / 2.0, 0.0])
    axis_dir = (tibia - head) / L

    # seeded shape variation: details wiggle, the end landmarks do not
    troch_frac = 0.09 + rng.uniform(-0.01, 0.01)
    troch_lat = spec.shaft_radius_mm + 0.45 * spec.head_radius_mm \
        + rng.uniform(-2.0, 2.0)
    knee_frac = 0.85 + rng.uniform(-0.015, 0.015)
    condyle_r = spec.condyle_radius_mm * (1.0 + rng.uniform(-0.05, 0.05))
    troch_r = 0.55 * spec.head_radius_mm * (1.0 + rng.uniform(-0.05, 0.05))

    troch = head + troch_frac * L * axis_dir + np.array([troch_lat, 0.0, 0.0])
    knee = head + knee_frac * L * axis_dir
    tib_bulb_r = 0.8 * spec.condyle_radius_mm
    joint_gap = 6.0

    soft_r = 3.2 * spec.shaft_radius_mm + spec.head_radius_mm
    margin = 2.0
    lo_needed = np.array([
        -max(soft_r, troch_lat + troch_r),
        -(L / 2.0 + max(spec.head_radius_mm, tib_bulb_r) + margin),
        -soft_r]) + center
    hi_needed = np.array([
        max(soft_r, troch_lat + troch_r),
        L / 2.0 + max(spec.head_radius_mm, tib_bulb_r) + margin,
        soft_r]) + center
    vol_lo = origin
    vol_hi = origin + sp * (np.array(dims) - 1)
    if np.any(lo_needed < vol_lo) or np.any(hi_needed > vol_hi):
        raise ValueError("bone exceeds the volume extents; enlarge volume_dims")

    xs = origin[0] + sp[0] * np.arange(dims[0])
    ys = origin[1] + sp[1] * np.arange(dims[1])
    zs = origin[2] + sp[2] * np.arange(dims[2])
    X = xs[:, None, None]
    Y = ys[None, :, None]
    Z = zs[None, None, :]

    def dist2(point):
        return (X - point[0]) ** 2 + (Y - point[1]) ** 2 + (Z - point[2]) ** 2

    def shaft_dist2(y0, y1):
        """Squared radial distance to the y-aligned segment [y0, y1] at x=z=cx."""
        yc = np.clip(Y, min(y0, y1), max(y0, y1))
        return (X - center[0]) ** 2 + (Y - yc) ** 2 + (Z - center[2]) ** 2

    data = np.zeros(dims, dtype=np.float32)

    # soft tissue envelope: y-aligned capsule around the whole bone
    soft = shaft_dist2(tibia[1] - tib_bulb_r, head[1] + spec.head_radius_mm) \
        <= soft_r ** 2
    data[soft] = spec.soft_tissue_attenuation

    cortical_shell = min(3.0, 0.35 * spec.shaft_radius_mm)
    shaft_top = head[1] - 0.4 * spec.head_radius_mm
    shaft_bot = knee[1] + 0.4 * condyle_r
    d2_shaft = shaft_dist2(shaft_bot, shaft_top)
    shaft_outer = d2_shaft <= spec.shaft_radius_mm ** 2
    shaft_inner = d2_shaft <= (spec.shaft_radius_mm - cortical_shell) ** 2

    tib_top = knee[1] - condyle_r - joint_gap
    d2_tib = shaft_dist2(tibia[1], tib_top)
    tib_r = 0.6 * spec.shaft_radius_mm
    tib_outer = d2_tib <= tib_r ** 2
    tib_inner = d2_tib <= (tib_r - cortical_shell) ** 2

    data[shaft_outer | tib_outer] = spec.cortical_attenuation
    data[shaft_inner | tib_inner] = spec.trabecular_attenuation

    # landmark-bearing structures are solid so their parallel projections
    # peak at the center (a hollow sphere would project rim-bright and
    # defeat image-based landmark readout); applied last so they win any
    # overlap with the shaft/stub shells
    for c, r in ((head, spec.head_radius_mm), (troch, troch_r),
                 (knee, condyle_r), (tibia, tib_bulb_r)):
        data[_sphere(dist2, c, r)] = spec.cortical_attenuation

    vol = VoxelVolume(data=data, spacing=tuple(sp), origin=origin)

    def snap(p):
        return vol.voxel_to_world(np.round(vol.world_to_voxel(p)))

    landmarks = {
        "femoral_head": snap(head),
        "greater_trochanter": snap(troch),
        "knee": snap(knee),
        "tibia": snap(tibia),
    }
    length = float(np.linalg.norm(landmarks["femoral_head"] - landmarks["tibia"]))
    return vol, GroundTruth(landmarks_3d=landmarks, bone_length_mm=length)

"""Shared fixtures-in-code for the test suite: scenes, cameras, volumes."""

from __future__ import annotations

import numpy as np

from orthostitch.geometry import Intrinsics, Pose, canonical_pose, compose_projection
from orthostitch.phantom import VoxelVolume


def square_camera(n=129, focal_px=1000.0, pixel_spacing=1.0):
    intr = Intrinsics(focal_length_px=focal_px, principal_point=(n // 2, n // 2),
                      detector_size=(n, n), pixel_spacing=pixel_spacing)
    return intr, compose_projection(intr, canonical_pose(intr))


def smooth_blob_volume(n=64, seed=0, n_blobs=5, sigma=(4.5, 6.5), center_spread=4.0,
                       clip_radius=29.0, spacing=1.0, center=(0.0, 0.0, 0.0)):
    """Random band-limited multi-blob volume, compactly supported and centered.

    Content is kept well inside Nyquist so transform-domain pipelines can
    be validated without discretization-model confounds.
    """
    rng = np.random.default_rng(seed)
    g = np.arange(n) - n // 2
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    data = np.zeros((n, n, n))
    for _ in range(n_blobs):
        c = rng.uniform(-center_spread, center_spread, 3)
        s = rng.uniform(*sigma)
        amp = rng.uniform(0.3, 1.0)
        data += amp * np.exp(-((X - c[0]) ** 2 + (Y - c[1]) ** 2
                               + (Z - c[2]) ** 2) / (2 * s * s))
    data[X ** 2 + Y ** 2 + Z ** 2 > clip_radius ** 2] = 0.0
    origin = np.asarray(center, dtype=float) - spacing * (n // 2)
    return VoxelVolume(data, (spacing,) * 3, origin)


def two_blob_scene(f1, f2, blob_sigma=1.2, attenuation=0.05,
                   dims=(120, 120, 260), origin=(-60.0, -60.0, 70.0)):
    """Volume holding two small Gaussian point features (parallax scenes)."""
    origin = np.asarray(origin, dtype=float)
    gx, gy, gz = (origin[i] + np.arange(dims[i]) for i in range(3))
    X, Y, Z = np.meshgrid(gx, gy, gz, indexing="ij")
    data = np.zeros(dims)
    for f in (f1, f2):
        data += np.exp(-((X - f[0]) ** 2 + (Y - f[1]) ** 2 + (Z - f[2]) ** 2)
                       / (2 * blob_sigma ** 2))
    return VoxelVolume(data * attenuation, (1.0, 1.0, 1.0), origin)


def translated_camera(intr, base_pose: Pose, t_world) -> Pose:
    return Pose.from_center(base_pose.rotation,
                            base_pose.camera_center + np.asarray(t_world, float))


def ncc(a, b):
    a = a - a.mean()
    b = b - b.mean()
    return float((a * b).sum() / np.sqrt((a * a).sum() * (b * b).sum()))


def random_camera(rng):
    """Random but physically sensible intrinsics and pose."""
    from scipy.spatial.transform import Rotation

    w = int(rng.integers(64, 640))
    h = int(rng.integers(64, 640))
    intr = Intrinsics(
        focal_length_px=float(rng.uniform(500, 2000)),
        principal_point=(float(rng.uniform(0.3, 0.7) * (w - 1)),
                         float(rng.uniform(0.3, 0.7) * (h - 1))),
        detector_size=(w, h),
        pixel_spacing=float(rng.uniform(0.2, 2.0)),
    )
    pose = Pose(Rotation.random(random_state=rng).as_matrix(),
                rng.uniform(-200, 200, size=3))
    return intr, compose_projection(intr, pose)

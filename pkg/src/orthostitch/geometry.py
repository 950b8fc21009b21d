"""Perspective and orthographic camera models.

Coordinate conventions (fixed for the whole package):

World frame (right-handed, mm):
  - The detector plane of the canonical camera is z = 0.
  - The canonical source sits at z = +SDD on the optical axis.

Camera frame (right-handed, standard computer vision):
  - ``x_cam = R @ Q + t`` for a world point Q; z_cam points from the
    source toward the detector, so points being imaged have z_cam > 0.
  - The camera center (X-ray source) is ``C = -R.T @ t``.

Image frame:
  - Origin at the top-left, x = column, y = row, pixel centers at
    integer coordinates.
  - The canonical pose is ``diag(1, -1, -1)``: image x follows world +x,
    image y follows world -y (rows run down).

A 3x4 projection matrix is unit-ambiguous (any scalar multiple is the
same camera), so :class:`ProjectionMatrix` carries the detector pixel
spacing as metadata; it is what places the detector plane at a metric
depth when backprojecting.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json

import numpy as np
import scipy.linalg

__all__ = [
    "Intrinsics",
    "Pose",
    "ProjectionMatrix",
    "RaySegment",
    "compose_projection",
    "pseudo_inverse",
    "backproject_pixel",
    "orthographic_project",
    "project",
    "rotation_about_axis",
    "default_intrinsics",
    "canonical_pose",
]

_ORTHONORMAL_TOL = 1e-9


def _check_rotation(R: np.ndarray, tol: float = _ORTHONORMAL_TOL) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {R.shape}")
    if not np.all(np.isfinite(R)):
        raise ValueError("rotation contains non-finite entries")
    if np.abs(R.T @ R - np.eye(3)).max() > tol:
        raise ValueError("rotation is not orthonormal within 1e-9")
    if abs(np.linalg.det(R) - 1.0) > tol:
        raise ValueError("rotation must have det +1 (proper rotation)")
    return R


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics of a flat-panel detector.

    focal_length_px is the source-detector distance expressed in pixels,
    i.e. ``sdd_mm = focal_length_px * pixel_spacing``.
    """

    focal_length_px: float
    principal_point: tuple[float, float]
    detector_size: tuple[int, int]
    pixel_spacing: float

    def __post_init__(self) -> None:
        if self.focal_length_px <= 0:
            raise ValueError("focal_length_px must be > 0")
        if self.pixel_spacing <= 0:
            raise ValueError("pixel_spacing must be > 0")
        w, h = self.detector_size
        px, py = self.principal_point
        if w < 1 or h < 1:
            raise ValueError("detector_size must be >= 1 in each axis")
        if not (0 <= px <= w - 1 and 0 <= py <= h - 1):
            raise ValueError("principal point must lie inside the detector")

    @property
    def sdd_mm(self) -> float:
        """Source-detector distance in mm."""
        return self.focal_length_px * self.pixel_spacing

    @property
    def K(self) -> np.ndarray:
        f = self.focal_length_px
        px, py = self.principal_point
        return np.array([[f, 0.0, px], [0.0, f, py], [0.0, 0.0, 1.0]])

    def to_dict(self) -> dict:
        return {
            "focal_length_px": self.focal_length_px,
            "principal_point": list(self.principal_point),
            "detector_size": list(self.detector_size),
            "pixel_spacing_mm": self.pixel_spacing,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Intrinsics":
        return cls(
            focal_length_px=float(d["focal_length_px"]),
            principal_point=tuple(float(v) for v in d["principal_point"]),
            detector_size=tuple(int(v) for v in d["detector_size"]),
            pixel_spacing=float(d["pixel_spacing_mm"]),
        )


def default_intrinsics(detector_px: int = 640, pixel_spacing: float = 1.0,
                       sdd_mm: float = 1000.0) -> Intrinsics:
    """Nominal mobile C-arm flat panel: 640x640 px at 1 mm/px, SDD 1 m.

    The principal point sits at (w//2, h//2) so that it coincides with
    the FFT center convention used by the spectral pipeline.
    """
    f = sdd_mm / pixel_spacing
    c = detector_px // 2
    return Intrinsics(
        focal_length_px=f,
        principal_point=(float(c), float(c)),
        detector_size=(detector_px, detector_px),
        pixel_spacing=pixel_spacing,
    )


@dataclass(frozen=True)
class Pose:
    """Rigid world-to-camera transform: ``x_cam = rotation @ Q + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        R = _check_rotation(self.rotation)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError("translation contains non-finite entries")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @property
    def camera_center(self) -> np.ndarray:
        """World position of the camera center (the X-ray source)."""
        return -self.rotation.T @ self.translation

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_center(cls, rotation: np.ndarray, center: np.ndarray) -> "Pose":
        rotation = np.asarray(rotation, dtype=float)
        center = np.asarray(center, dtype=float).reshape(3)
        return cls(rotation, -rotation @ center)

    def to_dict(self) -> dict:
        return {
            "rotation": self.rotation.tolist(),
            "translation_mm": self.translation.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(np.array(d["rotation"], dtype=float),
                   np.array(d["translation_mm"], dtype=float))


def canonical_pose(intr: Intrinsics, detector_z_mm: float = 0.0) -> Pose:
    """Fronto-parallel pose: detector plane at z = detector_z_mm.

    Source at (0, 0, detector_z_mm + sdd), looking down -z; image y runs
    along world -y.
    """
    R0 = np.diag([1.0, -1.0, -1.0])
    center = np.array([0.0, 0.0, intr.sdd_mm + detector_z_mm])
    return Pose.from_center(R0, center)


def rotation_about_axis(axis, angle_deg: float) -> np.ndarray:
    """Right-handed rotation by ``angle_deg`` about ``axis`` (Rodrigues)."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    th = np.deg2rad(angle_deg)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(th) * K + (1.0 - np.cos(th)) * (K @ K)


@dataclass(frozen=True)
class ProjectionMatrix:
    """3x4 perspective projection, with detector metadata.

    ``pixel_spacing`` (mm/px) anchors the detector plane at a metric
    depth; ``detector_size`` enables bounds checks when present.
    """

    P: np.ndarray
    pixel_spacing: float = 1.0
    detector_size: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        P = np.asarray(self.P, dtype=float)
        if P.shape != (3, 4):
            raise ValueError(f"projection matrix must be 3x4, got {P.shape}")
        if not np.all(np.isfinite(P)):
            raise ValueError("projection matrix contains non-finite entries")
        if np.linalg.matrix_rank(P) != 3:
            raise ValueError("projection matrix must have rank 3")
        M = P[:, :3]
        if abs(np.linalg.det(M)) < 1e-12 * max(np.abs(M).max(), 1.0) ** 3:
            raise ValueError("left 3x3 block must be invertible (finite camera)")
        if self.pixel_spacing <= 0:
            raise ValueError("pixel_spacing must be > 0")
        object.__setattr__(self, "P", P)

    # -- derived geometry -------------------------------------------------

    @property
    def camera_center(self) -> np.ndarray:
        M = self.P[:, :3]
        return -np.linalg.solve(M, self.P[:, 3])

    @property
    def principal_axis(self) -> np.ndarray:
        """Unit viewing direction (points from source toward detector)."""
        M = self.P[:, :3]
        m3 = M[2]
        return np.sign(np.linalg.det(M)) * m3 / np.linalg.norm(m3)

    def decompose(self) -> tuple[np.ndarray, Pose]:
        """RQ-decompose into (K, pose) with K[2,2] = 1 and positive focal."""
        P = self.P if np.linalg.det(self.P[:, :3]) > 0 else -self.P
        M = P[:, :3]
        K, R = scipy.linalg.rq(M)
        # force a positive diagonal on K; push the signs into R
        S = np.diag(np.sign(np.diag(K)))
        K = K @ S
        R = S @ R
        t = np.linalg.solve(K, P[:, 3])
        K = K / K[2, 2]
        return K, Pose(R, t)

    @property
    def sdd_mm(self) -> float:
        """Source-detector distance implied by the focal length and spacing."""
        K, _ = self.decompose()
        return float(K[0, 0]) * self.pixel_spacing

    def depth_of(self, points: np.ndarray) -> np.ndarray:
        """Signed depth (mm along the principal axis) of world points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        M = self.P[:, :3]
        w = pts @ M[2] + self.P[2, 3]
        return np.sign(np.linalg.det(M)) * w / np.linalg.norm(M[2])

    # -- serialization -----------------------------------------------------

    def to_json(self, path) -> None:
        d = {"P": self.P.tolist(), "pixel_spacing_mm": self.pixel_spacing}
        if self.detector_size is not None:
            d["detector_size"] = list(self.detector_size)
        with open(path, "w") as f:
            json.dump(d, f, indent=1, sort_keys=True)
            f.write("\n")

    @classmethod
    def from_json(cls, path) -> "ProjectionMatrix":
        with open(path) as f:
            d = json.load(f)
        det = tuple(d["detector_size"]) if "detector_size" in d else None
        return cls(np.array(d["P"], dtype=float),
                   float(d.get("pixel_spacing_mm", 1.0)), det)


@dataclass(frozen=True)
class RaySegment:
    """Backprojection ray: ``origin + t * direction`` for t in t_range (mm)."""

    origin: np.ndarray
    direction: np.ndarray
    t_range: tuple[float, float]

    def __post_init__(self) -> None:
        o = np.asarray(self.origin, dtype=float).reshape(3)
        d = np.asarray(self.direction, dtype=float).reshape(3)
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ValueError("direction must be unit length within 1e-12")
        t0, t1 = self.t_range
        if not t0 < t1:
            raise ValueError("t_range must satisfy t_near < t_far")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "t_range", (float(t0), float(t1)))

    def point_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.origin + t[..., None] * self.direction

    def sample(self, n: int) -> np.ndarray:
        """n points spaced uniformly over t_range (endpoints included)."""
        return self.point_at(np.linspace(self.t_range[0], self.t_range[1], n))


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def compose_projection(intr: Intrinsics, pose: Pose) -> ProjectionMatrix:
    """Assemble P = K [R | t] from intrinsics and a world-to-camera pose."""
    P = intr.K @ np.hstack([pose.rotation, pose.translation[:, None]])
    return ProjectionMatrix(P, pixel_spacing=intr.pixel_spacing,
                            detector_size=intr.detector_size)


def project(P: ProjectionMatrix | np.ndarray, points: np.ndarray) -> np.ndarray:
    """Project world points (..., 3) to pixel coordinates (..., 2)."""
    mat = P.P if isinstance(P, ProjectionMatrix) else np.asarray(P, dtype=float)
    pts = np.asarray(points, dtype=float)
    h = pts @ mat[:, :3].T + mat[:, 3]
    return h[..., :2] / h[..., 2:3]


def pseudo_inverse(P: ProjectionMatrix | np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of a rank-3 projection matrix (4x3).

    Computed from the thin QR factorization of P^T: with P^T = Q R and
    full row rank, P^+ = Q R^-T, which equals P^T (P P^T)^-1 but only
    pays one condition-number factor.
    """
    mat = P.P if isinstance(P, ProjectionMatrix) else np.asarray(P, dtype=float)
    if mat.shape != (3, 4):
        raise ValueError("expected a 3x4 matrix")
    Q, R = np.linalg.qr(mat.T)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-12 * max(diag.max(), 1.0):
        raise ValueError("projection matrix is rank-deficient; no right inverse")
    return Q @ np.linalg.inv(R).T


def backproject_pixel(P: ProjectionMatrix, pixel, d: float) -> RaySegment:
    """Ray of a pixel, clipped to the depth window selected by ``d``.

    The window covers the fraction ``d`` of the source-detector depth,
    anchored at the detector plane: axis depth in [(1-d)*sdd, sdd].
    d = 1 is the entire imaging cone; d = 0.5 stops halfway to the
    source. The ray itself is the pseudo-inverse ray of the pixel.
    """
    if not 0.0 < d <= 1.0:
        raise ValueError("d must lie in (0, 1]")
    u, v = float(pixel[0]), float(pixel[1])
    if P.detector_size is not None:
        w, h = P.detector_size
        if not (0 <= u <= w - 1 and 0 <= v <= h - 1):
            raise ValueError(f"pixel ({u}, {v}) outside detector {w}x{h}")

    pinv = pseudo_inverse(P)
    q = pinv @ np.array([u, v, 1.0])
    if abs(q[3]) < 1e-12:
        # pseudo-inverse landed at infinity; fall back to a finite ray point
        q = q + np.append(P.camera_center, 1.0)
    q = q[:3] / q[3]

    center = P.camera_center
    axis = P.principal_axis
    direction = q - center
    direction = direction / np.linalg.norm(direction)
    cos = float(direction @ axis)
    if cos < 0:
        direction, cos = -direction, -cos
    sdd = P.sdd_mm
    t_far = sdd / cos                 # detector plane
    t_near = (1.0 - d) * t_far        # d-fraction of the depth toward the source
    if t_near == t_far:
        raise ValueError("degenerate depth window")
    return RaySegment(origin=center, direction=direction, t_range=(t_near, t_far))


def orthographic_project(pose_rotation: np.ndarray, point) -> np.ndarray:
    """Parallel-beam projection: drop the depth coordinate.

    Returns (r1.Q, r2.Q) where r1, r2 are the first two rows of the
    orthonormal ``pose_rotation``; accepts a single point or an (..., 3)
    array and returns matching (..., 2) plane coordinates in mm.
    """
    R = _check_rotation(pose_rotation)
    pts = np.asarray(point, dtype=float)
    return pts @ R[:2].T

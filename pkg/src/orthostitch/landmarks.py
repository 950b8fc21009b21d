"""Gaussian landmark heatmaps, peak extraction, and metric measurements.

Landmark coordinates are (u, v) = (column, row) pixels, matching the
package-wide image convention. Heatmaps are peak-normalized (value 1 at
the landmark) so they live in the same [0, 1] domain as the cross
entropy expects.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json

import numpy as np
import scipy.ndimage

from .projector import Image2D

__all__ = [
    "Heatmap",
    "LandmarkSet",
    "LandmarkErrors",
    "FlatHeatmapError",
    "render_heatmap",
    "extract_peak",
    "landmark_error",
    "measure_length",
    "refine_landmarks",
    "draw_overlay",
]


class FlatHeatmapError(ValueError):
    """Peak extraction is meaningless on an all-equal heatmap."""


@dataclass(frozen=True)
class Heatmap:
    data: np.ndarray
    name: str = ""

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2 or data.size == 0:
            raise ValueError("heatmap must be a non-empty 2D grid")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValueError("heatmap values must lie in [0, 1]")
        object.__setattr__(self, "data", data)


@dataclass(frozen=True)
class LandmarkSet:
    """Named 2D points; serialized as ``{name: [u, v]}``."""

    points: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        pts = {str(k): (float(v[0]), float(v[1])) for k, v in self.points.items()}
        object.__setattr__(self, "points", pts)

    def __getitem__(self, name: str):
        return np.array(self.points[name])

    def names(self):
        return list(self.points)

    def to_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump({k: list(v) for k, v in self.points.items()}, f,
                      indent=1, sort_keys=True)
            f.write("\n")

    @classmethod
    def from_json(cls, path) -> "LandmarkSet":
        with open(path) as f:
            return cls(json.load(f))


def render_heatmap(loc, dims, sigma_px: float = 6.0, name: str = "") -> Heatmap:
    """Gaussian heatmap with mean ``loc`` = (u, v) and peak value 1."""
    if sigma_px <= 0:
        raise ValueError("sigma_px must be > 0")
    w, h = dims
    u, v = float(loc[0]), float(loc[1])
    if not (0 <= u <= w - 1 and 0 <= v <= h - 1):
        raise ValueError(f"landmark ({u}, {v}) outside {w}x{h} grid")
    jj, ii = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    m = np.exp(-((ii - v) ** 2 + (jj - u) ** 2) / (2.0 * sigma_px ** 2))
    return Heatmap(data=m, name=name)


def extract_peak(m, refine: bool = False):
    """Argmax location (u, v); row-major first on ties.

    With ``refine``, the integer peak is nudged by the center of mass of
    the surrounding 5x5 window (clipped at edges).
    """
    data = np.asarray(getattr(m, "data", m), dtype=float)
    if data.size == 0:
        raise ValueError("empty heatmap")
    if data.max() == data.min():
        raise FlatHeatmapError("heatmap has no distinguished peak")
    flat = int(np.argmax(data))
    v, u = divmod(flat, data.shape[1])
    if not refine:
        return (float(u), float(v))
    h, w = data.shape
    y0, y1 = max(v - 2, 0), min(v + 3, h)
    x0, x1 = max(u - 2, 0), min(u + 3, w)
    win = data[y0:y1, x0:x1]
    total = win.sum()
    if total <= 0:
        return (float(u), float(v))
    ys, xs = np.mgrid[y0:y1, x0:x1]
    return (float((win * xs).sum() / total), float((win * ys).sum() / total))


@dataclass(frozen=True)
class LandmarkErrors:
    per_landmark_px: dict
    mean_px: float


def landmark_error(pred: LandmarkSet, gt: LandmarkSet) -> LandmarkErrors:
    """Euclidean pixel distances per landmark, plus their mean."""
    if set(pred.names()) != set(gt.names()):
        raise ValueError("landmark sets name different points")
    per = {name: float(np.linalg.norm(pred[name] - gt[name]))
           for name in sorted(pred.names())}
    return LandmarkErrors(per_landmark_px=per,
                          mean_px=float(np.mean(list(per.values()))))


def measure_length(lms: LandmarkSet, pixel_spacing: float,
                   frm: str = "femoral_head", to: str = "tibia") -> float:
    """Point-to-point distance in mm on an orthographic image."""
    if pixel_spacing <= 0:
        raise ValueError("pixel_spacing must be > 0")
    for name in (frm, to):
        if name not in lms.points:
            raise ValueError(f"landmark {name!r} missing")
    return float(np.linalg.norm(lms[frm] - lms[to]) * pixel_spacing)


def refine_landmarks(img, priors: LandmarkSet, search_radius_px: int = 10,
                     smooth_sigma_px: float = 1.0) -> LandmarkSet:
    """Snap each prior to the nearest intensity peak of the image.

    Searches a window around the prior on a lightly smoothed copy, then
    refines by local center of mass. This is the image-based readout for
    phantoms whose landmarks are centers of blob-like structures.
    """
    data = np.asarray(getattr(img, "data", img), dtype=float)
    if smooth_sigma_px > 0:
        data = scipy.ndimage.gaussian_filter(data, smooth_sigma_px)
    h, w = data.shape
    r = int(search_radius_px)
    out = {}
    for name in priors.names():
        u0, v0 = (int(round(c)) for c in priors[name])
        x0, x1 = max(u0 - r, 0), min(u0 + r + 1, w)
        y0, y1 = max(v0 - r, 0), min(v0 + r + 1, h)
        win = data[y0:y1, x0:x1]
        dv, du = np.unravel_index(int(np.argmax(win)), win.shape)
        u, v = x0 + du, y0 + dv
        # center of mass of the 5x5 around the windowed argmax (no second
        # search: a brighter structure at the window edge must not drag
        # the estimate further out)
        ys0, ys1 = max(v - 2, 0), min(v + 3, h)
        xs0, xs1 = max(u - 2, 0), min(u + 3, w)
        sub = data[ys0:ys1, xs0:xs1]
        total = sub.sum()
        if total > 0:
            yy, xx = np.mgrid[ys0:ys1, xs0:xs1]
            out[name] = (float((sub * xx).sum() / total),
                         float((sub * yy).sum() / total))
        else:
            out[name] = (float(u), float(v))
    return LandmarkSet(out)


def draw_overlay(img: Image2D, path, pred: LandmarkSet | None = None,
                 gt: LandmarkSet | None = None, heatmaps=None) -> None:
    """Write an RGB PNG with heatmap tint and landmark crosses.

    Heatmaps render as red overlays, ground truth as green crosses and
    predictions as blue crosses.
    """
    from PIL import Image as PILImage, ImageDraw

    data = img.data
    lo, hi = float(data.min()), float(data.max())
    if hi <= lo:
        hi = lo + 1.0
    gray = ((data - lo) / (hi - lo) * 255).astype(np.uint8)
    rgb = np.stack([gray, gray, gray], axis=-1).astype(np.float64)
    if heatmaps:
        for hm in heatmaps:
            hd = np.asarray(getattr(hm, "data", hm), dtype=float)
            rgb[..., 0] = np.minimum(255, rgb[..., 0] + 160 * hd)
    pil = PILImage.fromarray(rgb.astype(np.uint8))
    draw = ImageDraw.Draw(pil)

    def cross(p, color):
        u, v = p
        draw.line([(u - 4, v), (u + 4, v)], fill=color, width=1)
        draw.line([(u, v - 4), (u, v + 4)], fill=color, width=1)

    if gt is not None:
        for name in gt.names():
            cross(gt[name], (0, 255, 0))
    if pred is not None:
        for name in pred.names():
            cross(pred[name], (64, 64, 255))
    pil.save(path)

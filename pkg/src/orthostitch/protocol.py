"""Randomized multi-station acquisition protocols and dataset generation.

A protocol images a long bone at three stations (head, shaft, knee).
The rig orbits the patient's long axis (y) for LAO/RAO and the lateral
axis (x) for cranial/caudal angulation; each image additionally gets
its own small out-of-plane rotation offsets so the three views are
never exactly parallel, and each translation component gets
independent jitter (gaps or overlaps between the sub-fields).

Sampling is reproducible: every random draw derives from the protocol
seed plus the instance index.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import hashlib
import json
import os

import numpy as np

from .geometry import (
    Intrinsics,
    Pose,
    ProjectionMatrix,
    compose_projection,
    default_intrinsics,
    rotation_about_axis,
)
from .landmarks import LandmarkSet, render_heatmap
from .phantom import GroundTruth, PhantomSpec, generate_phantom, save_volume
from .projector import Image2D, NoiseSpec, cone_beam_drr, orthographic_drr, save_image
from .spectral import StitchOptions, stitch

__all__ = [
    "AcquisitionProtocol",
    "AcquisitionInstance",
    "sample_instance",
    "generate_dataset",
    "protocol_for_phantom",
]

R_AP = np.diag([1.0, -1.0, -1.0])  # fronto-parallel anterior-posterior view


@dataclass(frozen=True)
class AcquisitionProtocol:
    images_per_instance: int = 3
    station_targets: tuple | None = None          # 3 world aim points; None = from phantom
    translation_jitter_mm: tuple = (-20.0, 20.0)
    lao_rao_range_deg: tuple = (-21.0, 21.0)
    cran_caud_range_deg: tuple = (-6.0, 6.0)
    per_image_rotation_offset_deg: tuple = (-6.0, 6.0)
    aim_depth_mm: float = 250.0                   # aim point depth from the detector
    intrinsics: Intrinsics = field(default_factory=default_intrinsics)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.images_per_instance < 1:
            raise ValueError("images_per_instance must be >= 1")
        for name in ("translation_jitter_mm", "lao_rao_range_deg",
                     "cran_caud_range_deg", "per_image_rotation_offset_deg"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range is not well-ordered")
        if self.station_targets is not None:
            targets = tuple(np.asarray(t, dtype=float) for t in self.station_targets)
            if len(targets) != self.images_per_instance:
                raise ValueError("need one station target per image")
            object.__setattr__(self, "station_targets", targets)


def protocol_for_phantom(gt: GroundTruth, proto: AcquisitionProtocol
                         ) -> AcquisitionProtocol:
    """Fill in station targets from the phantom's landmarks.

    Head station aims at the femoral head, knee at the knee landmark,
    and intermediate stations are spaced evenly along the bone axis.
    """
    head = np.asarray(gt.landmarks_3d["femoral_head"], dtype=float)
    knee = np.asarray(gt.landmarks_3d["knee"], dtype=float)
    n = proto.images_per_instance
    if n == 1:
        targets = (0.5 * (head + knee),)
    else:
        targets = tuple(head + (knee - head) * i / (n - 1) for i in range(n))
    return replace(proto, station_targets=targets)


@dataclass(frozen=True)
class AcquisitionInstance:
    poses: tuple
    projections: tuple
    base_angles_deg: tuple      # (lao_rao, cran_caud)
    per_image_offsets_deg: tuple  # ((d_lao, d_caud), ...)
    jitters_mm: tuple
    aim_points: tuple


def _rig_rotation(lao_deg: float, caud_deg: float) -> np.ndarray:
    # orbit order: long-axis (y) rotation, then lateral (x) angulation
    return rotation_about_axis([0, 1, 0], lao_deg) @ \
        rotation_about_axis([1, 0, 0], caud_deg)


def sample_instance(proto: AcquisitionProtocol, rng_state) -> AcquisitionInstance:
    """Draw one acquisition: shared base orientation, per-image offsets.

    ``rng_state`` is an integer seed or a numpy Generator. All sampled
    quantities stay inside the protocol's declared ranges.
    """
    if proto.station_targets is None:
        raise ValueError("protocol has no station targets; use protocol_for_phantom")
    rng = rng_state if isinstance(rng_state, np.random.Generator) \
        else np.random.default_rng(rng_state)
    lao = rng.uniform(*proto.lao_rao_range_deg)
    caud = rng.uniform(*proto.cran_caud_range_deg)
    sdd = proto.intrinsics.sdd_mm
    arm = sdd - proto.aim_depth_mm

    poses, projections, offsets, jitters = [], [], [], []
    for i in range(proto.images_per_instance):
        d_lao = rng.uniform(*proto.per_image_rotation_offset_deg)
        d_caud = rng.uniform(*proto.per_image_rotation_offset_deg)
        jitter = rng.uniform(*proto.translation_jitter_mm, size=3)
        S = _rig_rotation(lao + d_lao, caud + d_caud)
        aim = proto.station_targets[i]
        center = aim + S @ np.array([0.0, 0.0, arm]) + jitter
        pose = Pose.from_center(R_AP @ S.T, center)
        poses.append(pose)
        projections.append(compose_projection(proto.intrinsics, pose))
        offsets.append((d_lao, d_caud))
        jitters.append(tuple(jitter))
    return AcquisitionInstance(
        poses=tuple(poses), projections=tuple(projections),
        base_angles_deg=(lao, caud), per_image_offsets_deg=tuple(offsets),
        jitters_mm=tuple(jitters), aim_points=tuple(proto.station_targets))


def _write_json(obj, path) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=1, sort_keys=True)
        f.write("\n")


def generate_dataset(proto: AcquisitionProtocol, phantom_specs, n_instances: int,
                     out_dir, d: float = 0.5,
                     stitch_opts: StitchOptions = StitchOptions(),
                     heatmap_sigma_px: float = 6.0,
                     noise: NoiseSpec | None = None,
                     save_volumes: bool = False) -> dict:
    """Render a training dataset: X-rays, reconstructions, heatmaps.

    Per instance directory: ``xray_i`` + ``P_i.json`` per view, the
    compounded ``input_recon``, the matching ``gt_ortho`` parallel
    projection (same plane, same raster), per-landmark heatmaps, 2D/3D
    landmark files and an ``instance.json`` with every sampled
    parameter. A top-level ``manifest.json`` indexes everything and is
    byte-identical when regenerated with the same configuration.
    """
    if n_instances < 1:
        raise ValueError("n_instances must be >= 1")
    phantom_specs = list(phantom_specs)
    if not phantom_specs:
        raise ValueError("need at least one phantom spec")
    os.makedirs(out_dir, exist_ok=True)

    entries = []
    for idx in range(n_instances):
        inst_dir = os.path.join(out_dir, f"instance_{idx:04d}")
        os.makedirs(inst_dir, exist_ok=True)
        spec = phantom_specs[idx % len(phantom_specs)]
        vol, gt = generate_phantom(spec)
        proto_i = proto if proto.station_targets is not None \
            else protocol_for_phantom(gt, proto)
        rng = np.random.default_rng([proto.seed, idx])
        inst = sample_instance(proto_i, rng)

        images = []
        xray_files, p_files = [], []
        for i, P in enumerate(inst.projections):
            noise_i = None if noise is None \
                else NoiseSpec(photons=noise.photons,
                               seed=int(rng.integers(0, 2**31 - 1)))
            img = cone_beam_drr(vol, P, proto_i.intrinsics, noise=noise_i)
            images.append((img, P))
            xray = os.path.join(inst_dir, f"xray_{i}.json")
            save_image(img, xray)
            pfile = os.path.join(inst_dir, f"P_{i}.json")
            P.to_json(pfile)
            xray_files.append(os.path.relpath(xray, out_dir))
            p_files.append(os.path.relpath(pfile, out_dir))

        result = stitch(images, d=d, opts=stitch_opts)
        recon_file = os.path.join(inst_dir, "input_recon.json")
        save_image(result.image, recon_file)

        out_dims = result.image.dims
        gt_img = orthographic_drr(vol, result.plane.orientation, out_dims,
                                  result.image.spacing,
                                  center_world=result.center_world)
        gt_file = os.path.join(inst_dir, "gt_ortho.json")
        save_image(gt_img, gt_file)

        lms2d = {}
        heat_files = {}
        for name, p3 in gt.landmarks_3d.items():
            uv = result.world_to_pixel(p3)
            lms2d[name] = (float(uv[0]), float(uv[1]))
            hm = render_heatmap(uv, out_dims, sigma_px=heatmap_sigma_px, name=name)
            hfile = os.path.join(inst_dir, f"heatmap_{name}.json")
            save_image(Image2D(hm.data, spacing=result.image.spacing), hfile)
            heat_files[name] = os.path.relpath(hfile, out_dir)

        LandmarkSet(lms2d).to_json(os.path.join(inst_dir, "landmarks_2d.json"))
        gt.to_json(os.path.join(inst_dir, "landmarks_3d.json"))
        if save_volumes:
            save_volume(vol, os.path.join(inst_dir, "volume.json"))

        _write_json({
            "base_angles_deg": list(inst.base_angles_deg),
            "per_image_offsets_deg": [list(o) for o in inst.per_image_offsets_deg],
            "jitters_mm": [list(j) for j in inst.jitters_mm],
            "aim_points": [list(map(float, a)) for a in inst.aim_points],
            "poses": [p.to_dict() for p in inst.poses],
            "bone_length_mm": gt.bone_length_mm,
            "phantom_seed": spec.seed,
        }, os.path.join(inst_dir, "instance.json"))

        entries.append({
            "id": f"instance_{idx:04d}",
            "xrays": xray_files,
            "projections": p_files,
            "input_recon": os.path.relpath(recon_file, out_dir),
            "gt_ortho": os.path.relpath(gt_file, out_dir),
            "heatmaps": heat_files,
            "landmarks_2d": f"instance_{idx:04d}/landmarks_2d.json",
            "landmarks_3d": f"instance_{idx:04d}/landmarks_3d.json",
            "bone_length_mm": gt.bone_length_mm,
        })

    manifest = {
        "seed": proto.seed,
        "d": d,
        "images_per_instance": proto.images_per_instance,
        "heatmap_sigma_px": heatmap_sigma_px,
        "detector": proto.intrinsics.to_dict(),
        "n_instances": n_instances,
        "instances": entries,
    }
    _write_json(manifest, os.path.join(out_dir, "manifest.json"))
    return manifest

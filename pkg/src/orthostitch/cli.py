"""Command line front end: reproducible runs over the library modules.

Every command reads a JSON config (defaults + optional --config file +
dotted --set overrides, unknown keys rejected), writes its outputs into
--out, and drops a ``run_manifest.json`` recording the exact config,
its hash, package versions, and the files read and written. Exit codes:
0 success, 2 missing input, 3 config/schema violation, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .geometry import Intrinsics, ProjectionMatrix
from .landmarks import LandmarkSet, draw_overlay, measure_length, refine_landmarks
from .metrics import (
    DegenerateResidualError,
    IdenticalImagesError,
    SsimParams,
    bce_heatmap_loss,
    cosine_frequency_loss,
    psnr,
    rr_loss,
    ssim_loss,
)
from .phantom import PhantomSpec, generate_phantom, load_volume, save_volume
from .projector import (
    NoiseSpec,
    cone_beam_drr,
    export_png16,
    load_image,
    orthographic_drr,
    save_image,
)
from .protocol import AcquisitionProtocol, generate_dataset
from .spectral import SlicePlane, StitchOptions, stitch

EXIT_OK = 0
EXIT_MISSING_INPUT = 2
EXIT_SCHEMA = 3
EXIT_NUMERICAL = 4


DEFAULT_CONFIG = {
    "seed": 0,
    "threads": None,
    "detector": {"size": 640, "pixel_spacing_mm": 1.0, "sdd_mm": 1000.0},
    "phantom": {
        "seed": 0,
        "bone_length_mm": 400.0,
        "shaft_radius_mm": 14.0,
        "head_radius_mm": 22.0,
        "condyle_radius_mm": 20.0,
        "cortical_attenuation": 0.05,
        "trabecular_attenuation": 0.02,
        "soft_tissue_attenuation": 0.005,
        "volume_dims": [144, 464, 144],
        "voxel_spacing_mm": [1.0, 1.0, 1.0],
        "center_mm": [0.0, 0.0, 250.0],
    },
    "protocol": {
        "images_per_instance": 3,
        "translation_jitter_mm": [-20.0, 20.0],
        "lao_rao_range_deg": [-21.0, 21.0],
        "cran_caud_range_deg": [-6.0, 6.0],
        "per_image_rotation_offset_deg": [-6.0, 6.0],
        "aim_depth_mm": 250.0,
    },
    "stitch": {
        "d": 0.5,
        "grid_spacing": 1.0,
        "grid_margin": 1.0,
        "grid_bounds": None,
        "pad_factor": 2,
        "normalization": "count",
        "interp": "nearest",
        "out_dims": None,
        "out_spacing": None,
        "apodize": 0.0,
    },
    "dataset": {
        "n_instances": 1,
        "n_phantoms": 1,
        "heatmap_sigma_px": 6.0,
        "noise_photons": None,
        "save_volumes": False,
    },
    "project": {"mode": "cone", "step_mm": None, "noise_photons": None,
                "noise_seed": 0, "out_dims": None, "out_spacing": None,
                "rotation": None},
    "measure": {"from": "femoral_head", "to": "tibia", "refine": False,
                "search_radius_px": 10, "smooth_sigma_px": 1.0},
    "evaluate": {
        "rr_scale": 10.0,
        "psnr_peak": None,
        "ssim": {"window_size": 11, "window_sigma": 1.5, "alpha": 1.0,
                 "beta": 1.0, "gamma": 1.0, "k1": 0.01, "k2": 0.03,
                 "data_range": None},
    },
}


class ConfigError(ValueError):
    pass


def _merge_validate(base: dict, override: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _merge_validate(base[key], val, where)
        else:
            out[key] = val
    return out


def _apply_set(config: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects key.path=value, got {assignment!r}")
    dotted, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = config
    parts = dotted.split(".")
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"unknown config key: {dotted}")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key: {dotted}")
    node[parts[-1]] = value


def load_config(args) -> dict:
    config = copy.deepcopy(DEFAULT_CONFIG)
    if args.config:
        with open(args.config) as f:
            config = _merge_validate(config, json.load(f))
    for assignment in args.set or []:
        _apply_set(config, assignment)
    if args.seed is not None:
        config["seed"] = args.seed
    if args.threads is not None:
        config["threads"] = args.threads
    if config["threads"]:
        import numba
        numba.set_num_threads(int(config["threads"]))
    return config


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def write_run_manifest(out_dir, command, config, inputs, outputs) -> None:
    import numba
    import scipy
    manifest = {
        "command": command,
        "config": config,
        "config_sha256": config_hash(config),
        "inputs": sorted(inputs),
        "outputs": sorted(outputs),
        "versions": {
            "orthostitch": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "numba": numba.__version__,
        },
    }
    with open(os.path.join(out_dir, "run_manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")


def _intrinsics_from(config) -> Intrinsics:
    det = config["detector"]
    n = int(det["size"])
    return Intrinsics(
        focal_length_px=det["sdd_mm"] / det["pixel_spacing_mm"],
        principal_point=(n // 2, n // 2),
        detector_size=(n, n),
        pixel_spacing=det["pixel_spacing_mm"],
    )


def _phantom_spec(config, seed=None) -> PhantomSpec:
    p = dict(config["phantom"])
    if seed is not None:
        p["seed"] = seed
    return PhantomSpec(
        seed=int(p["seed"]),
        bone_length_mm=p["bone_length_mm"],
        shaft_radius_mm=p["shaft_radius_mm"],
        head_radius_mm=p["head_radius_mm"],
        condyle_radius_mm=p["condyle_radius_mm"],
        cortical_attenuation=p["cortical_attenuation"],
        trabecular_attenuation=p["trabecular_attenuation"],
        soft_tissue_attenuation=p["soft_tissue_attenuation"],
        volume_dims=tuple(p["volume_dims"]),
        voxel_spacing_mm=tuple(p["voxel_spacing_mm"]),
        center_mm=tuple(p["center_mm"]),
    )


def _stitch_options(config) -> StitchOptions:
    s = config["stitch"]
    bounds = s["grid_bounds"]
    return StitchOptions(
        grid_spacing=s["grid_spacing"], grid_margin=s["grid_margin"],
        grid_bounds=tuple(bounds) if bounds else None,
        pad_factor=int(s["pad_factor"]), normalization=s["normalization"],
        interp=s["interp"],
        out_dims=tuple(s["out_dims"]) if s["out_dims"] else None,
        out_spacing=s["out_spacing"], apodize=s["apodize"])


def _protocol(config) -> AcquisitionProtocol:
    p = config["protocol"]
    return AcquisitionProtocol(
        images_per_instance=int(p["images_per_instance"]),
        translation_jitter_mm=tuple(p["translation_jitter_mm"]),
        lao_rao_range_deg=tuple(p["lao_rao_range_deg"]),
        cran_caud_range_deg=tuple(p["cran_caud_range_deg"]),
        per_image_rotation_offset_deg=tuple(p["per_image_rotation_offset_deg"]),
        aim_depth_mm=p["aim_depth_mm"],
        intrinsics=_intrinsics_from(config),
        seed=int(config["seed"]),
    )


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_phantom(args, config) -> int:
    os.makedirs(args.out, exist_ok=True)
    vol, gt = generate_phantom(_phantom_spec(config, seed=config["seed"]))
    vol_path = os.path.join(args.out, "volume.json")
    gt_path = os.path.join(args.out, "ground_truth.json")
    save_volume(vol, vol_path)
    gt.to_json(gt_path)
    write_run_manifest(args.out, "phantom", config, [],
                       [vol_path, gt_path])
    return EXIT_OK


def cmd_project(args, config) -> int:
    os.makedirs(args.out, exist_ok=True)
    vol = load_volume(args.volume)
    pconf = config["project"]
    outputs = []
    if pconf["mode"] == "cone":
        if not args.camera:
            raise ConfigError("cone mode needs --camera")
        P = ProjectionMatrix.from_json(args.camera)
        intr = _intrinsics_from(config)
        noise = None
        if pconf["noise_photons"]:
            noise = NoiseSpec(photons=pconf["noise_photons"],
                              seed=int(pconf["noise_seed"]))
        img = cone_beam_drr(vol, P, intr, noise=noise, step_mm=pconf["step_mm"])
    elif pconf["mode"] == "ortho":
        R = np.array(pconf["rotation"], dtype=float) if pconf["rotation"] \
            else np.diag([1.0, -1.0, -1.0])
        dims = tuple(pconf["out_dims"]) if pconf["out_dims"] \
            else (config["detector"]["size"],) * 2
        spacing = pconf["out_spacing"] or config["detector"]["pixel_spacing_mm"]
        img = orthographic_drr(vol, R, dims, spacing, step_mm=pconf["step_mm"])
    else:
        raise ConfigError(f"unknown projection mode {pconf['mode']!r}")
    img_path = os.path.join(args.out, "image.json")
    save_image(img, img_path)
    outputs.append(img_path)
    if args.png:
        export_png16(img, os.path.join(args.out, "image.png"))
        outputs.append(os.path.join(args.out, "image.png"))
    write_run_manifest(args.out, "project", config, [args.volume], outputs)
    return EXIT_OK


def _load_instance(instance_dir):
    images = []
    i = 0
    while True:
        xray = os.path.join(instance_dir, f"xray_{i}.json")
        pfile = os.path.join(instance_dir, f"P_{i}.json")
        if not os.path.exists(xray):
            break
        images.append((load_image(xray), ProjectionMatrix.from_json(pfile)))
        i += 1
    if not images:
        raise FileNotFoundError(f"no xray_*.json found in {instance_dir}")
    return images


def cmd_stitch(args, config) -> int:
    os.makedirs(args.out, exist_ok=True)
    inputs = []
    if args.instance:
        images = _load_instance(args.instance)
        inputs.append(args.instance)
    else:
        if not args.images or not args.projections:
            raise ConfigError("need --instance or both --images and --projections")
        img_files = args.images.split(",")
        p_files = args.projections.split(",")
        if len(img_files) != len(p_files):
            raise ConfigError("--images and --projections count mismatch")
        images = [(load_image(im), ProjectionMatrix.from_json(pf))
                  for im, pf in zip(img_files, p_files)]
        inputs.extend(img_files + p_files)

    plane = None
    if args.plane:
        with open(args.plane) as f:
            plane = SlicePlane(np.array(json.load(f)["rotation"], dtype=float))
        inputs.append(args.plane)
    result = stitch(images, d=config["stitch"]["d"], plane=plane,
                    opts=_stitch_options(config))
    out_img = os.path.join(args.out, "stitched.json")
    save_image(result.image, out_img)
    info = {
        "imag_residual_rel": result.imag_residual_rel,
        "plane_rotation": result.plane.orientation.tolist(),
        "center_world_mm": result.center_world.tolist(),
    }
    with open(os.path.join(args.out, "stitch_info.json"), "w") as f:
        json.dump(info, f, indent=1, sort_keys=True)
        f.write("\n")
    outputs = [out_img, os.path.join(args.out, "stitch_info.json")]
    if args.png:
        export_png16(result.image, os.path.join(args.out, "stitched.png"))
        outputs.append(os.path.join(args.out, "stitched.png"))
    write_run_manifest(args.out, "stitch", config, inputs, outputs)
    return EXIT_OK


def _evaluate_pair(pred_path, ref_path, config, input_path=None,
                   pred_heatmap=None, gt_heatmap=None, landmark=None):
    pred = load_image(pred_path)
    ref = load_image(ref_path)
    sconf = config["evaluate"]["ssim"]
    params = SsimParams(window_size=int(sconf["window_size"]),
                        window_sigma=sconf["window_sigma"], alpha=sconf["alpha"],
                        beta=sconf["beta"], gamma=sconf["gamma"], k1=sconf["k1"],
                        k2=sconf["k2"], data_range=sconf["data_range"])
    row = {"pred": pred_path, "ref": ref_path,
           "ssim": ssim_loss(pred, ref, params),
           "psnr_db": None, "psnr_identical": False,
           "cosine": None, "bce": None, "rr": None}
    try:
        row["psnr_db"] = psnr(pred, ref, peak=config["evaluate"]["psnr_peak"])
    except IdenticalImagesError:
        row["psnr_identical"] = True
    if input_path:
        row["cosine"] = cosine_frequency_loss(pred, ref, load_image(input_path))
    if pred_heatmap and gt_heatmap:
        hm_pred = load_image(pred_heatmap)
        hm_gt = load_image(gt_heatmap)
        row["bce"] = bce_heatmap_loss(np.clip(hm_pred.data, 0, 1),
                                      np.clip(hm_gt.data, 0, 1))
        if landmark is not None:
            row["rr"] = rr_loss(np.clip(hm_pred.data, 0, 1), landmark,
                                scale=config["evaluate"]["rr_scale"])
    return row


def cmd_evaluate(args, config) -> int:
    os.makedirs(args.out, exist_ok=True)
    inputs = []
    if args.batch:
        with open(args.batch) as f:
            jobs = json.load(f)
        rows = []
        for job in jobs:
            lm = tuple(job["landmark"]) if "landmark" in job else None
            rows.append(_evaluate_pair(job["pred"], job["ref"], config,
                                       job.get("input"), job.get("pred_heatmap"),
                                       job.get("gt_heatmap"), lm))
        inputs.append(args.batch)
        csv_path = os.path.join(args.out, "metrics.csv")
        cols = ["pred", "ref", "ssim", "psnr_db", "psnr_identical",
                "cosine", "bce", "rr"]
        with open(csv_path, "w") as f:
            f.write(",".join(cols) + "\n")
            for row in rows:
                f.write(",".join("" if row[c] is None else str(row[c])
                                 for c in cols) + "\n")
        outputs = [csv_path]
    else:
        if not (args.pred and args.ref):
            raise ConfigError("need --pred and --ref (or --batch)")
        lm = tuple(float(v) for v in args.landmark.split(",")) \
            if args.landmark else None
        row = _evaluate_pair(args.pred, args.ref, config, args.input,
                             args.pred_heatmap, args.gt_heatmap, lm)
        inputs.extend([args.pred, args.ref])
        out_json = os.path.join(args.out, "metrics.json")
        with open(out_json, "w") as f:
            json.dump(row, f, indent=1, sort_keys=True)
            f.write("\n")
        print(json.dumps(row, sort_keys=True))
        outputs = [out_json]
    write_run_manifest(args.out, "evaluate", config, inputs, outputs)
    return EXIT_OK


def cmd_measure(args, config) -> int:
    os.makedirs(args.out, exist_ok=True)
    img = load_image(args.image)
    lms = LandmarkSet.from_json(args.landmarks)
    mconf = config["measure"]
    if mconf["refine"]:
        lms = refine_landmarks(img, lms,
                               search_radius_px=int(mconf["search_radius_px"]),
                               smooth_sigma_px=mconf["smooth_sigma_px"])
    length = measure_length(lms, img.spacing, mconf["from"], mconf["to"])
    result = {"length_mm": length, "from": mconf["from"], "to": mconf["to"],
              "landmarks": {k: list(v) for k, v in lms.points.items()},
              "pixel_spacing_mm": img.spacing}
    out_json = os.path.join(args.out, "measurement.json")
    with open(out_json, "w") as f:
        json.dump(result, f, indent=1, sort_keys=True)
        f.write("\n")
    print(f"{mconf['from']} -> {mconf['to']}: {length:.3f} mm")
    outputs = [out_json]
    if args.overlay:
        gt = LandmarkSet.from_json(args.gt_landmarks) if args.gt_landmarks else None
        overlay_path = os.path.join(args.out, "overlay.png")
        draw_overlay(img, overlay_path, pred=lms, gt=gt)
        outputs.append(overlay_path)
    write_run_manifest(args.out, "measure", config,
                       [args.image, args.landmarks], outputs)
    return EXIT_OK


def cmd_dataset(args, config) -> int:
    os.makedirs(args.out, exist_ok=True)
    dconf = config["dataset"]
    noise = None
    if dconf["noise_photons"]:
        noise = NoiseSpec(photons=dconf["noise_photons"], seed=config["seed"])
    specs = [_phantom_spec(config, seed=config["phantom"]["seed"] + i)
             for i in range(max(1, int(dconf["n_phantoms"])))]
    manifest = generate_dataset(
        _protocol(config), specs, n_instances=int(dconf["n_instances"]),
        out_dir=args.out, d=config["stitch"]["d"],
        stitch_opts=_stitch_options(config),
        heatmap_sigma_px=dconf["heatmap_sigma_px"], noise=noise,
        save_volumes=bool(dconf["save_volumes"]))
    write_run_manifest(args.out, "dataset", config, [],
                       [os.path.join(args.out, "manifest.json")])
    print(f"dataset: {manifest['n_instances']} instances in {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orthostitch",
        description="Parallax-free orthographic stitching of cone-beam images")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", metavar="KEY.PATH=VALUE",
                       help="override a config entry (JSON-parsed value)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("phantom", help="generate a procedural femur volume")
    common(p)

    p = sub.add_parser("project", help="render a cone-beam or parallel DRR")
    common(p)
    p.add_argument("--volume", required=True)
    p.add_argument("--camera", help="projection matrix JSON (cone mode)")
    p.add_argument("--png", action="store_true")

    p = sub.add_parser("stitch", help="compound images and extract the slice")
    common(p)
    p.add_argument("--instance", help="dataset instance directory")
    p.add_argument("--images", help="comma-separated image headers")
    p.add_argument("--projections", help="comma-separated P matrix files")
    p.add_argument("--plane", help="JSON {rotation: 3x3} slice plane")
    p.add_argument("--png", action="store_true")

    p = sub.add_parser("evaluate", help="image-quality and landmark losses")
    common(p)
    p.add_argument("--pred")
    p.add_argument("--ref")
    p.add_argument("--input", help="input reconstruction (for the cosine loss)")
    p.add_argument("--pred-heatmap")
    p.add_argument("--gt-heatmap")
    p.add_argument("--landmark", help="u,v ground-truth location for RR")
    p.add_argument("--batch", help="JSON list of evaluation jobs -> CSV")

    p = sub.add_parser("measure", help="metric length between two landmarks")
    common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--landmarks", required=True)
    p.add_argument("--gt-landmarks")
    p.add_argument("--overlay", action="store_true")

    p = sub.add_parser("dataset", help="generate a stitching dataset")
    common(p)
    return parser


COMMANDS = {
    "phantom": cmd_phantom,
    "project": cmd_project,
    "stitch": cmd_stitch,
    "evaluate": cmd_evaluate,
    "measure": cmd_measure,
    "dataset": cmd_dataset,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
        return COMMANDS[args.command](args, config)
    except (ConfigError, json.JSONDecodeError) as exc:
        _emit_error("config", exc)
        return EXIT_SCHEMA
    except FileNotFoundError as exc:
        _emit_error("missing_input", exc)
        return EXIT_MISSING_INPUT
    except (IdenticalImagesError, DegenerateResidualError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        _emit_error("numerical", exc)
        return EXIT_NUMERICAL
    except ValueError as exc:
        _emit_error("schema", exc)
        return EXIT_SCHEMA


def _emit_error(kind: str, exc: Exception) -> None:
    print(json.dumps({"error": {"type": kind,
                                "class": type(exc).__name__,
                                "message": str(exc)}}),
          file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())

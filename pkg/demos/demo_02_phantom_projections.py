# Generate a procedural femur phantom and look at it through both camera
# models: the cone-beam X-ray (what the C-arm sees) and the parallel-beam
# projection (the stitching target). Writes PNGs next to this script.
#
# Run:  python3 demos/demo_02_phantom_projections.py

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from orthostitch import (
    Intrinsics,
    PhantomSpec,
    canonical_pose,
    compose_projection,
    cone_beam_drr,
    generate_phantom,
    orthographic_drr,
)

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)

spec = PhantomSpec(seed=3, bone_length_mm=120, shaft_radius_mm=8,
                   head_radius_mm=12, condyle_radius_mm=11,
                   volume_dims=(96, 176, 96))
vol, gt = generate_phantom(spec)
print("phantom dims:", vol.dims, " bone length:", gt.bone_length_mm, "mm")
for name, p in gt.landmarks_3d.items():
    print(f"  {name:20s} {p}")

# a 256 mm detector sees only part of the bone; that is the whole problem
intr = Intrinsics(focal_length_px=500.0, principal_point=(64, 64),
                  detector_size=(128, 128), pixel_spacing=2.0)
P = compose_projection(intr, canonical_pose(intr))
xray = cone_beam_drr(vol, P, intr)

ortho = orthographic_drr(vol, canonical_pose(intr).rotation,
                         out_dims=(96, 176), out_spacing=2.0)

fig, axes = plt.subplots(1, 3, figsize=(12, 5))
axes[0].imshow(vol.data[:, :, vol.dims[2] // 2].T, cmap="gray", origin="lower")
axes[0].set_title("central slice of the volume")
axes[1].imshow(xray.data, cmap="gray")
axes[1].set_title("cone-beam X-ray (truncated bone)")
axes[2].imshow(ortho.data, cmap="gray")
axes[2].set_title("parallel projection (metric)")
for ax in axes:
    ax.axis("off")
fig.tight_layout()
fig.savefig(os.path.join(OUT, "phantom_projections.png"), dpi=120)
print("wrote", os.path.join(OUT, "phantom_projections.png"))

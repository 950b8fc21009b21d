# Projective geometry walkthrough: compose a C-arm camera, project points,
# and backproject pixels into depth-limited rays.
#
# Run:  python3 demos/demo_01_geometry.py

import numpy as np

from orthostitch import (
    backproject_pixel,
    canonical_pose,
    compose_projection,
    default_intrinsics,
    orthographic_project,
    project,
    pseudo_inverse,
)

intr = default_intrinsics()          # 640x640 px, 1 mm pitch, SDD 1000 mm
pose = canonical_pose(intr)          # source at z=+1000, detector at z=0
P = compose_projection(intr, pose)

print("projection matrix:")
print(np.array2string(P.P, precision=1, suppress_small=True))
print("camera center (the X-ray source):", P.camera_center)
print("viewing direction:", P.principal_axis)

# a point on the optical axis lands on the principal point
print("\nproject (0, 0, 250)   ->", project(P, [0.0, 0.0, 250.0]))
# magnification: the same lateral offset projects larger when the point
# sits closer to the source
for z in (100.0, 250.0, 500.0):
    print(f"project (50, 0, {z:5.0f}) ->", project(P, [50.0, 0.0, z]))

# the pseudo-inverse turns a pixel back into a ray; d picks how deep the
# backprojection reaches (1 = all the way to the source)
print("\n|P P+ - I| =", np.abs(P.P @ pseudo_inverse(P) - np.eye(3)).max())
for d in (1.0, 0.5):
    ray = backproject_pixel(P, (400, 200), d=d)
    ends = ray.point_at(np.array(ray.t_range))
    print(f"d={d}: ray z-extent {ends[:, 2].min():.0f}..{ends[:, 2].max():.0f} mm")

# the orthographic model simply drops depth: translating a point along the
# viewing axis does not move its parallel projection
R = pose.rotation
q = np.array([30.0, -40.0, 250.0])
print("\northographic:", orthographic_project(R, q),
      "==", orthographic_project(R, q + 123.0 * R[2]))

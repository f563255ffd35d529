"""Cutting two touching chromosomes apart.

Run with ``python3 demos/02_cutting_a_pair.py``.  Follows one cluster from
boundary to cut: where the contour turns, which turning points survive,
how the two cut ends are picked, and what the split looks like.
"""

import numpy as np

from chromoseg.cutline import (
    SeparatorConfig,
    angle_profile,
    bresenham,
    separate_cluster,
    vamd_filter,
)
from chromoseg.geometry import trace_boundary
from chromoseg.raster import region_from_mask
from chromoseg.synth import gen_cluster, iou

frag = gen_cluster(4, "touch")
region = region_from_mask(frag.merged)
boundary = trace_boundary(region)
print(f"cluster of {region.size} px, outer boundary of {boundary.n} px")

# %% Direction of travel along the contour, and how sharply it changes.
# Straight stretches give ~0; corners and notches give large values.
profile = angle_profile(boundary)
print(f"mean turning {profile.delta_avg:.3f} rad, max {profile.delta.max():.3f} rad")

# %% Keep only the points that turn more than average.
cands = vamd_filter(boundary, profile)
print(f"{len(cands)} of {boundary.n} boundary points turn more than average")

# %% Pick the pair.  Points near the middle of the candidate cloud are cheap
# (small summed distance), sharp turns are cheaper still.
cfg = SeparatorConfig()
split = separate_cluster(region, cfg)
best = split.selection.chosen_candidates()
for c in best:
    print(f"  cut end {c.point}: turning {c.delta_theta:.2f} rad, summed distance {c.dis:.0f}, "
          f"cost {c.cost:.0f}")
print("true notches:", frag.notch_points[0])

# %% The two halves against the ground truth masks.
truth = [region_from_mask(m) for m in frag.masks]
for part in split.parts:
    print(f"part of {part.size} px, best IoU {max(iou(part, t) for t in truth):.3f}")

# %% ASCII view: digits mark the two parts, '#' the cut line.
canvas = np.full(frag.merged.shape, ".", dtype="<U1")
for k, part in enumerate(split.parts, start=1):
    canvas[part.coords[:, 1], part.coords[:, 0]] = str(k)
line = bresenham(*split.cut)
canvas[line[:, 1], line[:, 0]] = "#"
rows = ["".join(r) for r in canvas]
keep = [i for i, r in enumerate(rows) if set(r) != {"."}]
print("\n".join(rows[keep[0]:keep[-1] + 1]))

"""Which blobs in a spread are clusters?

Run with ``python3 demos/01_finding_clusters.py``.  Builds one synthetic
spread, then walks through the three shape tests in the order the detector
applies them, printing why each blob was kept or dropped.
"""

from collections import Counter

from chromoseg.detect import detect_clusters
from chromoseg.raster import extract_regions, label_components
from chromoseg.synth import gen_scene

# %% A spread: 30 lone chromosomes plus three touching groups.
truth = gen_scene(7, n_singles=30, cluster_specs=["touch", "cross", "chain3"])
regions = extract_regions(label_components(truth.image))
print(f"{truth.image.width}x{truth.image.height} image, {len(regions)} connected blobs, "
      f"{len(truth.masks)} chromosomes")

# %% Thresholds default to the mean ratio over the whole image, so they adapt
# to how thick and bent this particular spread is.
reports, th = detect_clusters(regions, return_thresholds=True)
print(f"hull threshold {th.hull:.3f}, ellipse threshold {th.ellipse:.3f} ({th.source})")

# %% The cheap tests run first.  Only blobs that are both non-convex and
# round-ish reach the skeleton, which is the expensive step.
print("\ndropped at:", dict(Counter(r.eliminated_by or "kept" for r in reports)))
print(f"skeletonized {sum(r.endpoint_count is not None for r in reports)} of {len(reports)} blobs")

# %% The flagged blobs, next to two lone chromosomes for contrast.
print("\nlabel  hull   ellipse  endpoints  verdict")
singles = [r for r in reports if not r.is_cluster][:2]
for r in singles + [r for r in reports if r.is_cluster]:
    ends = "-" if r.endpoint_count is None else r.endpoint_count
    verdict = "cluster" if r.is_cluster else f"single ({r.eliminated_by})"
    print(f"{r.label:5d}  {r.hull_ratio:.3f}  {r.ellipse_ratio:.3f}    {ends!s:>9}  {verdict}")

"""Cluster separation by a straight cut between two boundary cross-points.

Pipeline for one cluster: trace the outer boundary, estimate the motion
direction at every boundary pixel, keep pixels whose direction change is at
least ``lambda1`` times the average, score survivors by the sum of their
distances to the other survivors minus ``lambda`` times their direction
change, and cut along the line joining the best admissible pair.
:func:`separate_all` repeats this on the pieces until every piece tests as
a single chromosome.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .detect import DetectConfig, detect_clusters
from .geometry import Boundary, trace_boundary
from .raster import LabelMap, Region, region_from_mask

__all__ = [
    "AngleProfile",
    "CrossPointSelection",
    "CutResult",
    "SeparationError",
    "SeparationResult",
    "SeparationTree",
    "SeparatorConfig",
    "SplitResult",
    "TreeNode",
    "VamdConfig",
    "angle_profile",
    "apply_cut",
    "bresenham",
    "concavity",
    "sdtp",
    "select_cross_points",
    "separate_all",
    "separate_cluster",
    "vamd_filter",
]

_EIGHT = ndimage.generate_binary_structure(2, 2)


class SeparationError(ValueError):
    """A separation stage could not produce a result.  ``stage`` names it."""

    def __init__(self, message: str, stage: str = ""):
        super().__init__(message)
        self.stage = stage


@dataclass(frozen=True)
class VamdConfig:
    estimator: str = "fixed_offsets"
    offsets: tuple = (4, 5)
    n1: int = 5
    n2: int = 5
    weight_scale: float = 1.0
    lambda1: float = 1.0

    def __post_init__(self):
        if self.estimator not in ("fixed_offsets", "weighted"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.estimator == "fixed_offsets":
            if not self.offsets or min(self.offsets) < 1:
                raise ValueError("offsets must be non-empty and >= 1")
        elif self.n1 < 1 or self.n2 < 1 or self.weight_scale <= 0:
            raise ValueError("weighted estimator needs n1, n2 >= 1 and weight_scale > 0")
        if self.lambda1 < 0:
            raise ValueError("lambda1 must be non-negative")

    @property
    def window(self) -> int:
        if self.estimator == "fixed_offsets":
            return max(self.offsets)
        return max(self.n1, self.n2)

    @property
    def lag(self) -> int:
        """Boundary steps from index ``i`` to the middle of the stretch whose
        turning ``delta[i]`` measures, rounded half up."""
        if self.estimator == "fixed_offsets":
            centre = sum(self.offsets) / (2.0 * len(self.offsets))
        else:
            centre = (self.n1 - self.n2) / 4.0
        return int(math.floor(centre + 0.5 + 0.5))


@dataclass(frozen=True)
class SeparatorConfig:
    lam: float = 1000.0
    min_arc_sep: Optional[int] = None  # None: max(5, n / 20)
    max_cuts: int = 10
    min_cut_depth: float = 2.0  # 0 disables the depth check
    min_concavity: float = 0.5  # radians of inward turning at each endpoint; 0 disables
    max_cut_factor: float = 1.5  # cut length limit in units of the thickest width; 0 disables
    min_part_fraction: float = 0.04
    pair_tries: int = 8
    align_points: bool = True  # place each cross-point where its turning is measured
    vamd: VamdConfig = field(default_factory=VamdConfig)

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.min_arc_sep is not None and self.min_arc_sep < 1:
            raise ValueError("min_arc_sep must be at least 1")
        if self.max_cuts < 1:
            raise ValueError("max_cuts must be at least 1")
        if self.min_cut_depth < 0 or self.max_cut_factor < 0 or self.min_concavity < 0:
            raise ValueError("cut guards must be non-negative")
        if not 0 <= self.min_part_fraction < 0.5:
            raise ValueError("min_part_fraction must be in [0, 0.5)")
        if self.pair_tries < 1:
            raise ValueError("pair_tries must be at least 1")

    def arc_sep(self, n: int) -> float:
        return float(self.min_arc_sep) if self.min_arc_sep is not None else max(5.0, n / 20.0)

    def locate(self, idx, n: int) -> np.ndarray:
        """Boundary indices of the cross-points for candidate indices ``idx``."""
        idx = np.asarray(idx, dtype=np.int64)
        return (idx + self.vamd.lag) % n if self.align_points else idx


@dataclass(frozen=True, eq=False)
class AngleProfile:
    theta: np.ndarray   # motion direction per boundary index, (-pi, pi]
    delta: np.ndarray   # |wrapped theta[i+1] - theta[i]|, [0, pi]

    @property
    def delta_avg(self) -> float:
        return math.fsum(self.delta) / len(self.delta)


@dataclass(frozen=True)
class Candidate:
    index: int
    point: tuple  # cross-point location, see SeparatorConfig.align_points
    delta_theta: float
    dis: float
    cost: float


@dataclass(frozen=True)
class CrossPointSelection:
    candidates: tuple
    chosen: tuple  # two boundary indices

    @property
    def m(self) -> int:
        return len(self.candidates)

    def chosen_candidates(self):
        by_index = {c.index: c for c in self.candidates}
        return tuple(by_index[i] for i in self.chosen)


# -- angle profile --------------------------------------------------------

def _wrap(a):
    """Wrap angles to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=np.float64) + np.pi, 2 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def angle_profile(boundary: Boundary, cfg: VamdConfig = VamdConfig()) -> AngleProfile:
    """Per-pixel motion direction and its variation along a closed boundary.

    Directions are full-quadrant angles of chords ``B[j] - B[i]`` (y down).
    Fixed mode combines the chords to ``i + o`` for each offset ``o``;
    weighted mode combines forward chords ``i+1 .. i+n1`` and reversed
    backward chords ``i-n2 .. i-1`` with weights ``exp(-d^2 / scale^2)``.
    Combination is a (weighted) circular mean.
    """
    pts = np.asarray(boundary.points, dtype=np.float64)
    n = len(pts)
    if n < cfg.window + 1:
        raise SeparationError("boundary shorter than estimator window", "angle_profile")

    sx = np.zeros(n)
    sy = np.zeros(n)
    if cfg.estimator == "fixed_offsets":
        for o in cfg.offsets:
            chord = np.roll(pts, -o, axis=0) - pts
            length = np.hypot(chord[:, 0], chord[:, 1])
            ok = length > 0
            sx[ok] += chord[ok, 0] / length[ok]
            sy[ok] += chord[ok, 1] / length[ok]
    else:
        steps = [(k, 1.0) for k in range(1, cfg.n1 + 1)] + [(-k, -1.0) for k in range(1, cfg.n2 + 1)]
        for k, sign in steps:
            chord = sign * (np.roll(pts, -k, axis=0) - pts)
            d2 = (chord ** 2).sum(axis=1)
            length = np.sqrt(d2)
            ok = length > 0
            w = np.exp(-d2 / cfg.weight_scale ** 2)
            sx[ok] += w[ok] * chord[ok, 0] / length[ok]
            sy[ok] += w[ok] * chord[ok, 1] / length[ok]
    theta = _wrap(np.arctan2(sy, sx))
    delta = np.abs(_wrap(np.roll(theta, -1) - theta))
    return AngleProfile(theta, delta)


def vamd_filter(boundary: Boundary, profile: AngleProfile, lambda1: float = 1.0) -> np.ndarray:
    """Boundary indices whose direction change reaches ``lambda1`` times the mean.

    Values equal to the threshold (up to rounding of the mean) are kept.
    """
    if len(profile.delta) != len(boundary):
        raise ValueError("profile does not match boundary")
    thr = lambda1 * profile.delta_avg
    keep = np.flatnonzero(profile.delta >= thr - 1e-12 * max(1.0, abs(thr)))
    if len(keep) == 0:
        raise SeparationError("no cross-point candidates", "vamd")
    return keep


def sdtp(boundary: Boundary, candidates) -> np.ndarray:
    """Sum of Euclidean distances from each candidate to all other candidates."""
    idx = np.asarray(candidates, dtype=np.int64)
    if len(idx) < 2:
        raise SeparationError("insufficient candidates", "sdtp")
    p = np.asarray(boundary.points, dtype=np.float64)[idx]
    diff = p[:, None, :] - p[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=2)).sum(axis=1)


def concavity(profile: AngleProfile, window: int) -> np.ndarray:
    """Inward turning of the contour around each index, in radians.

    The direction change from ``window`` steps before an index to one step
    after it, negated so that concave stretches of a clockwise walk are
    positive.  Straight runs give about zero, convex tips a negative value.
    """
    th = profile.theta
    return -_wrap(np.roll(th, -1) - np.roll(th, window))


def _depth_map(region: Region):
    mask, x0, y0 = region.mask(pad=1)
    return ndimage.distance_transform_edt(mask), x0, y0


def _ranked_pairs(boundary: Boundary, candidates, profile: AngleProfile,
                  cfg: SeparatorConfig, region: Optional[Region]):
    """Score candidates and list admissible pairs, best first.

    Returns ``(candidate tuple, candidate indices, ranks, pair iterator)``;
    the iterator yields positions into the candidate arrays.
    """
    idx = np.asarray(candidates, dtype=np.int64)
    n = len(boundary)
    loc = cfg.locate(idx, n)
    dis = sdtp(boundary, loc)
    dth = profile.delta[idx]
    cost = dis - cfg.lam * dth
    pts = np.asarray(boundary.points)[loc]

    gap = np.abs(idx[:, None] - idx[None, :])
    arc = np.minimum(gap, n - gap)
    dist2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    admissible = (arc >= cfg.arc_sep(n)) & (dist2 > 0)
    if cfg.min_concavity > 0:
        concave = concavity(profile, cfg.vamd.window)[loc] >= cfg.min_concavity
        admissible &= concave[:, None] & concave[None, :]
    if region is not None and cfg.max_cut_factor > 0:
        depth, x0, y0 = _depth_map(region)
        admissible &= dist2 <= (cfg.max_cut_factor * 2.0 * depth.max()) ** 2
    admissible = np.triu(admissible, k=1)

    # rank by cost so ties fall back to boundary order deterministically
    rank = np.empty(len(idx), dtype=np.int64)
    rank[np.lexsort((idx, cost))] = np.arange(len(idx))
    pair_cost = cost[:, None] + cost[None, :]
    ii, jj = np.nonzero(admissible)
    order = np.lexsort((np.maximum(rank[ii], rank[jj]), np.minimum(rank[ii], rank[jj]),
                        pair_cost[ii, jj]))
    cands = tuple(Candidate(int(i), (int(p[0]), int(p[1])), float(t), float(d), float(c))
                  for i, p, t, d, c in zip(idx, pts, dth, dis, cost))

    def pairs():
        check = region is not None and cfg.min_cut_depth > 0
        if check:
            depth, x0, y0 = _depth_map(region)
        for k in order:
            a, b = ii[k], jj[k]
            if check:
                line = bresenham(pts[a], pts[b])
                if depth[line[:, 1] - y0, line[:, 0] - x0].max() < cfg.min_cut_depth:
                    continue
            yield (a, b) if rank[a] < rank[b] else (b, a)

    return cands, idx, pairs()


def select_cross_points(boundary: Boundary, candidates, profile: AngleProfile,
                        cfg: SeparatorConfig = SeparatorConfig(),
                        region: Optional[Region] = None) -> CrossPointSelection:
    """Pick the admissible candidate pair with the smallest summed cost.

    ``cost = dis - lam * delta_theta``.  A pair is admissible when the two
    points are distinct and at least ``arc_sep`` steps apart along the
    boundary, and both sit on concave stretches of contour (see
    :func:`concavity`).  When ``region`` is given the segment between them must also
    reach ``min_cut_depth`` pixels into it, which rules out pairs lying on
    one straight stretch of contour, and be no longer than
    ``max_cut_factor`` times the region's thickest width.  If the two
    cheapest candidates are admissible they are the answer; otherwise pairs
    are scanned by cost sum.
    """
    cands, idx, pairs = _ranked_pairs(boundary, candidates, profile, cfg, region)
    pick = next(pairs, None)
    if pick is None:
        raise SeparationError("degenerate candidate geometry", "select")
    return CrossPointSelection(cands, (int(idx[pick[0]]), int(idx[pick[1]])))


# -- cutting ----------------------------------------------------------------

def bresenham(p, q) -> np.ndarray:
    """Pixels of the digital segment from ``p`` to ``q``, endpoints included."""
    x0, y0 = int(p[0]), int(p[1])
    x1, y1 = int(q[0]), int(q[1])
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    out = []
    while True:
        out.append((x0, y0))
        if x0 == x1 and y0 == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy
    return np.array(out, dtype=np.int64)


def _thicken(line: np.ndarray, p, q) -> np.ndarray:
    # second pixel row across the dominant direction
    if abs(q[0] - p[0]) >= abs(q[1] - p[1]):
        extra = line + np.array([0, 1])
    else:
        extra = line + np.array([1, 0])
    return np.unique(np.vstack([line, extra]), axis=0)


@dataclass(frozen=True, eq=False)
class CutResult:
    parts: tuple          # two Regions
    line: np.ndarray      # removed (then reassigned) pixels
    thickened: bool
    fragmented: bool


def _grow(labels: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Give every unlabelled mask cell the label of the geodesically nearest
    seed (8-connected steps inside ``mask``); ties go to the lower label."""
    labels = labels.copy()
    while True:
        todo = mask & (labels == 0)
        if not todo.any():
            return labels
        grown = np.zeros_like(labels)
        for lab in sorted(np.unique(labels[labels > 0]), reverse=True):
            reach = ndimage.binary_dilation(labels == lab, _EIGHT) & todo
            grown[reach] = lab  # lower labels overwrite higher ones
        if not grown.any():
            raise SeparationError("unreachable pixels while reassigning cut", "cut")
        labels[grown > 0] = grown[grown > 0]


def apply_cut(region: Region, p, q) -> CutResult:
    """Remove the segment ``p``-``q`` from ``region`` and split it in two.

    The plain Bresenham line is tried first, then a two-pixel-thick line.
    With more than two resulting pieces the two largest are kept and the
    others are folded in like the line pixels: each removed pixel joins the
    geodesically nearest kept piece, so no pixel is lost.
    """
    p = (int(p[0]), int(p[1]))
    q = (int(q[0]), int(q[1]))
    if p == q:
        raise ValueError("cut endpoints must differ")
    mask, x0, y0 = region.mask(pad=2)
    line0 = bresenham(p, q)

    for thickened, line in ((False, line0), (True, _thicken(line0, p, q))):
        lx, ly = line[:, 0] - x0, line[:, 1] - y0
        inside = mask[ly, lx]
        cut = mask.copy()
        cut[ly[inside], lx[inside]] = False
        lab, k = ndimage.label(cut, structure=_EIGHT)
        if k >= 2:
            break
    else:
        raise SeparationError("cut ineffective", "cut")

    sizes = np.bincount(lab.ravel())[1:]
    first = np.array([np.flatnonzero(lab.ravel() == i + 1)[0] for i in range(k)])
    # two largest pieces, ties by raster order; relabel them 1, 2 by raster order
    keep = sorted(np.lexsort((first, -sizes))[:2], key=lambda i: first[i])
    seeds = np.zeros_like(lab)
    for new, old in enumerate(keep, start=1):
        seeds[lab == old + 1] = new
    final = _grow(seeds, mask)
    parts = tuple(region_from_mask(final == i, x0, y0, label=i) for i in (1, 2))
    removed = line[inside]
    return CutResult(parts, removed, thickened, k > 2)


# -- one cluster ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SplitResult:
    parts: Optional[tuple]
    cut: Optional[tuple] = None               # ((x, y), (x, y))
    selection: Optional[CrossPointSelection] = None
    cut_info: Optional[CutResult] = None
    stage: Optional[str] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.parts is not None


def separate_cluster(region: Region, cfg: SeparatorConfig = SeparatorConfig()) -> SplitResult:
    """Find the cross-points of a cluster and cut it in two.

    Admissible pairs are tried best first, up to ``pair_tries`` of them,
    until one severs the region without leaving a piece smaller than
    ``min_part_fraction`` of it.  Never raises for geometric failures; an
    unresolved result carries the failing stage and message instead.
    """
    selection = None
    try:
        boundary = trace_boundary(region)
        profile = angle_profile(boundary, cfg.vamd)
        cands = vamd_filter(boundary, profile, cfg.vamd.lambda1)
        scored, idx, pairs = _ranked_pairs(boundary, cands, profile, cfg, region)
        error = SeparationError("degenerate candidate geometry", "select")
        for _, (a, b) in zip(range(cfg.pair_tries), pairs):
            selection = CrossPointSelection(scored, (int(idx[a]), int(idx[b])))
            p, q = scored[a].point, scored[b].point
            try:
                info = apply_cut(region, p, q)
            except SeparationError as exc:
                error = exc
                continue
            if min(part.size for part in info.parts) < cfg.min_part_fraction * region.size:
                error = SeparationError("cut leaves a sliver", "cut")
                continue
            return SplitResult(info.parts, (p, q), selection, info)
        raise error
    except SeparationError as exc:
        return SplitResult(None, selection=selection, stage=exc.stage, error=str(exc))


# -- recursion ------------------------------------------------------------

@dataclass(eq=False)
class TreeNode:
    region: Region
    status: str = "leaf"          # leaf | split | unresolved
    cut: Optional[tuple] = None
    costs: Optional[tuple] = None  # costs of the two chosen cross-points
    fragmented: bool = False
    error: Optional[str] = None
    stage: Optional[str] = None
    children: list = field(default_factory=list)

    def leaves(self):
        if not self.children:
            return [self]
        return [leaf for c in self.children for leaf in c.leaves()]

    def cuts(self) -> int:
        return (self.status == "split") + sum(c.cuts() for c in self.children)

    def depth(self) -> int:
        return 1 + max((c.depth() for c in self.children), default=0) if self.children else 0


@dataclass(eq=False)
class SeparationTree:
    root: TreeNode
    flagged: bool

    @property
    def label(self) -> int:
        return self.root.region.label

    @property
    def leaves(self) -> list:
        return [n.region for n in self.root.leaves()]

    @property
    def n_cuts(self) -> int:
        return self.root.cuts()

    @property
    def resolved(self) -> bool:
        return all(n.status != "unresolved" for n in self.root.leaves())

    def nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop(0)
            yield node
            stack.extend(node.children)


@dataclass(eq=False)
class SeparationResult:
    forest: list
    label_map: LabelMap
    reports: list
    thresholds: object


def _split_node(node: TreeNode, sep_cfg: SeparatorConfig, detect_cfg: DetectConfig,
                thresholds, budget: list):
    if budget[0] <= 0:
        node.status = "unresolved"
        node.stage = "recursion"
        node.error = "max cuts exceeded"
        return
    res = separate_cluster(node.region, sep_cfg)
    if not res.ok:
        node.status = "unresolved"
        node.stage, node.error = res.stage, res.error
        return
    budget[0] -= 1
    node.status = "split"
    node.cut = res.cut
    node.fragmented = res.cut_info.fragmented
    node.costs = tuple(c.cost for c in res.selection.chosen_candidates())
    for part in res.parts:
        child = TreeNode(part)
        node.children.append(child)
        rep = detect_clusters([part], detect_cfg, thresholds=thresholds)[0]
        if rep.is_cluster:
            _split_node(child, sep_cfg, detect_cfg, thresholds, budget)


def separate_all(regions, detect_cfg: DetectConfig = DetectConfig(),
                 sep_cfg: SeparatorConfig = SeparatorConfig(), shape=None,
                 reports=None, thresholds=None) -> SeparationResult:
    """Detect clusters among ``regions`` and split each one recursively.

    Pieces are re-tested against the scene-level thresholds computed on the
    initial regions.  ``shape`` is ``(height, width)`` of the output label
    map; it defaults to the regions' extent.  Leaves are numbered 1.. in
    root-label order, then depth-first within each tree.
    """
    regions = sorted(regions, key=lambda r: r.label)
    if reports is None or thresholds is None:
        reports, thresholds = detect_clusters(regions, detect_cfg, return_thresholds=True)
    flagged = {r.label for r in reports if r.is_cluster}

    forest = []
    for region in regions:
        root = TreeNode(region)
        if region.label in flagged:
            _split_node(root, sep_cfg, detect_cfg, thresholds, [sep_cfg.max_cuts])
        forest.append(SeparationTree(root, region.label in flagged))

    if shape is None:
        if regions:
            shape = (max(r.bbox[3] for r in regions) + 1, max(r.bbox[2] for r in regions) + 1)
        else:
            shape = (1, 1)
    lab = np.zeros(shape, dtype=np.int32)
    next_label = 1
    for tree in forest:
        for leaf in tree.leaves:
            lab[leaf.coords[:, 1], leaf.coords[:, 0]] = next_label
            next_label += 1
    return SeparationResult(forest, LabelMap(lab), reports, thresholds)

"""Seeded synthetic chromosomes, clusters and scenes with ground truth.

Chromosomes are thick curves: every pixel whose centre lies within the
half-width of a (possibly bent) spine.  Clusters are built in continuous
coordinates and rasterized on a shared canvas; the truth keeps one mask per
chromosome plus the two concave "notch" points where each touching pair
should be cut.

Shape ranges are chosen to look like the chromosome spreads of typical
metaphase images (lengths of a few dozen pixels, widths around 8 px); they
are not fitted to any dataset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from .geometry import trace_boundary
from .raster import BinaryImage, LabelMap, Region, extract_regions, label_components

__all__ = [
    "ChromosomeSpec",
    "ClusterFragment",
    "ClusterSpec",
    "EvalResult",
    "SceneTruth",
    "aggregate",
    "centromere_profile",
    "evaluate",
    "evaluate_label_map",
    "gen_chromosome",
    "gen_cluster",
    "gen_scene",
    "iou",
    "random_single_spec",
]

_EIGHT = ndimage.generate_binary_structure(2, 2)
WAIST_DEPTH = (0.15, 0.3)  # relative depth range of the centromere constriction
KINDS = ("touch", "partial_overlap", "end_touch", "chain", "cross")


@dataclass(frozen=True)
class ChromosomeSpec:
    """``length`` is the spine length; ``half_width`` is a constant or a
    sequence of values spread evenly along the spine.  The spine is a
    quadratic Bezier curve whose tangent turns by ``bend_angle``, the turn
    concentrated around ``bend_position`` (fraction of the length)."""

    length: float
    half_width: Union[float, Sequence[float]] = 4.0
    bend_angle: float = 0.0
    bend_position: float = 0.5
    orientation: float = 0.0

    def __post_init__(self):
        if self.length < 8:
            raise ValueError("chromosome length must be at least 8")
        if np.min(self.half_width) < 1:
            raise ValueError("half-width must be at least 1")
        if not 0 < self.bend_position < 1:
            raise ValueError("bend_position must be in (0, 1)")
        if abs(self.bend_angle) >= np.pi:
            raise ValueError("self-intersecting spine: bend angle must be below pi")


@dataclass
class _Body:
    spine: np.ndarray  # (k, 2) dense polyline, world coordinates
    hw: np.ndarray     # (k,) half-width at each spine sample

    def bbox(self):
        r = self.hw.max() + 1
        lo = np.floor(self.spine.min(axis=0) - r).astype(int)
        hi = np.ceil(self.spine.max(axis=0) + r).astype(int)
        return lo, hi

    def moved(self, rot: float = 0.0, shift=(0.0, 0.0)) -> "_Body":
        c, s = np.cos(rot), np.sin(rot)
        m = np.array([[c, -s], [s, c]])
        return _Body(self.spine @ m.T + np.asarray(shift, dtype=float), self.hw)

    def point(self, frac: float) -> np.ndarray:
        return self.spine[int(round(frac * (len(self.spine) - 1)))]

    def tangent(self, frac: float) -> np.ndarray:
        i = int(round(frac * (len(self.spine) - 1)))
        a, b = max(i - 2, 0), min(i + 2, len(self.spine) - 1)
        t = self.spine[b] - self.spine[a]
        return t / np.hypot(*t)

    def width_at(self, frac: float) -> float:
        return float(self.hw[int(round(frac * (len(self.hw) - 1)))])


def _body(spec: ChromosomeSpec) -> _Body:
    """Spine of ``spec`` centred on the origin, sampled every ~0.5 px."""
    b, f = spec.bend_angle, spec.bend_position
    p0 = np.zeros(2)
    p1 = np.array([f, 0.0])
    p2 = p1 + (1 - f) * np.array([np.cos(b), np.sin(b)])
    t = np.linspace(0.0, 1.0, 801)[:, None]
    curve = (1 - t) ** 2 * p0 + 2 * (1 - t) * t * p1 + t ** 2 * p2
    seg = np.hypot(*np.diff(curve, axis=0).T)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    curve *= spec.length / arc[-1]
    arc *= spec.length / arc[-1]
    k = max(int(np.ceil(spec.length * 2)), 2) + 1
    s = np.linspace(0.0, spec.length, k)
    spine = np.column_stack([np.interp(s, arc, curve[:, 0]), np.interp(s, arc, curve[:, 1])])
    hw_spec = np.atleast_1d(np.asarray(spec.half_width, dtype=float))
    if len(hw_spec) == 1:
        hw = np.full(k, hw_spec[0])
    else:
        hw = np.interp(s / spec.length, np.linspace(0, 1, len(hw_spec)), hw_spec)

    # folded bodies would touch themselves away from the bend
    d = np.hypot(*(spine[:, None, :] - spine[None, :, :]).transpose(2, 0, 1))
    apart = np.abs(s[:, None] - s[None, :]) > 4 * hw.max() + np.pi * hw.max()
    if np.any(apart & (d < 2 * hw.max() + 1)):
        raise ValueError("self-intersecting spine")

    spine -= spine.mean(axis=0)
    body = _Body(spine, hw)
    return body.moved(spec.orientation)


def _rasterize(body: _Body, origin, shape) -> np.ndarray:
    """Pixels of a ``shape`` canvas (top-left at ``origin``) whose centres lie
    within the half-width of the spine."""
    lo, hi = body.bbox()
    x0, y0 = origin
    h, w = shape
    out = np.zeros(shape, dtype=bool)
    gx0, gy0 = max(lo[0], x0), max(lo[1], y0)
    gx1, gy1 = min(hi[0], x0 + w - 1), min(hi[1], y0 + h - 1)
    if gx0 > gx1 or gy0 > gy1:
        return out
    ys, xs = np.mgrid[gy0:gy1 + 1, gx0:gx1 + 1]
    g = np.column_stack([xs.ravel(), ys.ravel()]).astype(float)
    a = body.spine[:-1]
    ab = body.spine[1:] - a
    ab2 = (ab ** 2).sum(axis=1)
    best = np.full(len(g), np.inf)
    hw_best = np.zeros(len(g))
    chunk = 4096
    for c in range(0, len(g), chunk):
        gp = g[c:c + chunk]
        t = np.clip(((gp[:, None, :] - a[None]) * ab[None]).sum(axis=2) / ab2[None], 0, 1)
        proj = a[None] + t[..., None] * ab[None]
        d = np.hypot(*(gp[:, None, :] - proj).transpose(2, 0, 1))
        k = np.argmin(d, axis=1)
        best[c:c + chunk] = d[np.arange(len(gp)), k]
        tk = t[np.arange(len(gp)), k]
        hw_best[c:c + chunk] = (1 - tk) * body.hw[k] + tk * body.hw[k + 1]
    inside = (best <= hw_best).reshape(ys.shape)
    out[gy0 - y0:gy1 - y0 + 1, gx0 - x0:gx1 - x0 + 1] = inside
    return out


def gen_chromosome(seed, spec: ChromosomeSpec) -> Region:
    """Rasterize one chromosome; the seed sets a sub-pixel placement phase.

    The returned region's bounding box starts at ``(0, 0)``.
    """
    rng = np.random.default_rng(seed)
    body = _body(spec).moved(0.0, rng.uniform(0, 1, size=2))
    lo, hi = body.bbox()
    mask = _rasterize(body, tuple(lo), (hi[1] - lo[1] + 1, hi[0] - lo[0] + 1))
    ys, xs = np.nonzero(mask)
    coords = np.column_stack([xs - xs.min(), ys - ys.min()])
    _, k = ndimage.label(mask, structure=_EIGHT)
    if k != 1:
        raise ValueError("chromosome rasterized into several pieces")
    return Region(1, coords)


def centromere_profile(length: float, half_width: float, position: float,
                       depth: float, spread: float = 3.0) -> np.ndarray:
    """Half-width samples (one per pixel of spine) with a Gaussian waist of
    relative ``depth`` centred at ``position`` (fraction of the length)."""
    s = np.linspace(0.0, length, int(np.ceil(length)) + 1)
    dip = depth * np.exp(-0.5 * ((s - position * length) / spread) ** 2)
    return half_width * (1.0 - dip)


def _waist(rng, length, hw, position=None):
    if position is None:
        position = rng.uniform(0.3, 0.5)
        if rng.uniform() < 0.5:
            position = 1.0 - position
    return centromere_profile(length, hw, position, rng.uniform(*WAIST_DEPTH))


def random_single_spec(rng: np.random.Generator) -> ChromosomeSpec:
    """Draw a single chromosome: mostly long and thin, some bent, some small."""
    u = rng.uniform()
    hw = rng.uniform(3.0, 4.5)
    orient = rng.uniform(-np.pi, np.pi)
    if u < 0.12:
        return ChromosomeSpec(rng.uniform(8, 14), hw, 0.0, 0.5, orient)
    length = rng.uniform(25, 80)
    if u < 0.72:
        bend = rng.uniform(-0.25, 0.25)
    else:
        bend = rng.choice([-1, 1]) * rng.uniform(0.5, 1.3)
    return ChromosomeSpec(length, _waist(rng, length, hw), bend, rng.uniform(0.35, 0.65), orient)


# -- clusters -------------------------------------------------------------

@dataclass
class ClusterFragment:
    """A rasterized cluster: ``masks`` share one local canvas."""

    kind: str
    masks: list            # boolean arrays, one per chromosome
    notch_points: list     # per touching pair: ((x, y), (x, y)) on the merged boundary
    overlapping: bool

    @property
    def merged(self) -> np.ndarray:
        return np.logical_or.reduce(self.masks)


@dataclass(frozen=True)
class ClusterSpec:
    kind: str
    k: int = 2
    params: dict = field(default_factory=dict)


def _line_hit(p, d, q, e):
    """Intersection of lines ``p + s d`` and ``q + t e``."""
    m = np.column_stack([d, -e])
    s, _ = np.linalg.solve(m, np.asarray(q) - np.asarray(p))
    return np.asarray(p) + s * np.asarray(d)


def _attach(base: _Body, frac: float, side: int, tilt: float, reach: float, spec: ChromosomeSpec):
    """Place ``spec`` with one end at the side of ``base``.

    ``reach`` is the distance from the base spine to the attached spine's end,
    measured along the base normal.  Returns the attached body and the two
    points where its flanks meet the base edge.
    """
    anchor = base.point(frac)
    tan = base.tangent(frac)
    normal = side * np.array([-tan[1], tan[0]])
    c, s = np.cos(tilt), np.sin(tilt)
    direction = np.array([c * normal[0] - s * normal[1], s * normal[0] + c * normal[1]])
    start = anchor + direction * (reach / max(np.dot(direction, normal), 0.2))
    raw = _body(ChromosomeSpec(spec.length, spec.half_width, spec.bend_angle,
                               spec.bend_position, 0.0))
    # rotate so the spine runs from its first sample along ``direction``
    first_dir = raw.tangent(0.0)
    rot = np.arctan2(direction[1], direction[0]) - np.arctan2(first_dir[1], first_dir[0])
    body = raw.moved(rot)
    body = body.moved(0.0, start - body.spine[0])
    hw_a, hw_b = base.width_at(frac), body.width_at(0.0)
    flank = np.array([-direction[1], direction[0]])
    edge_pt = anchor + normal * hw_a
    notches = tuple(_line_hit(start + sgn * flank * hw_b, direction, edge_pt, tan) for sgn in (-1, 1))
    return body, notches


def _canvas(bodies, pad=3):
    los, his = zip(*(b.bbox() for b in bodies))
    lo = np.min(los, axis=0) - pad
    hi = np.max(his, axis=0) + pad
    return (int(lo[0]), int(lo[1])), (int(hi[1] - lo[1] + 1), int(hi[0] - lo[0] + 1))


def _snap(points, merged, origin):
    """Move each point to the nearest pixel of the merged outer boundary."""
    region = Region(1, np.column_stack(np.nonzero(merged)[::-1]))
    bpts = trace_boundary(region).points.astype(float)
    out = []
    for p in points:
        local = np.asarray(p) - np.asarray(origin)
        i = int(np.argmin(((bpts - local) ** 2).sum(axis=1)))
        out.append((int(bpts[i, 0]), int(bpts[i, 1])))
    return tuple(out)


def _one_component(mask) -> bool:
    return ndimage.label(mask, structure=_EIGHT)[1] == 1


def _spec(rng, lo, hi, hw=(3.5, 4.5), bend=0.15, waist=None) -> ChromosomeSpec:
    length = rng.uniform(lo, hi)
    profile = _waist(rng, length, rng.uniform(*hw), waist) if lo >= 25 else rng.uniform(*hw)
    return ChromosomeSpec(length, profile, rng.uniform(-bend, bend), rng.uniform(0.4, 0.6))


def _build(rng, kind, k):
    side = rng.choice([-1, 1])
    tilt = rng.uniform(-0.5, 0.5)
    if kind in ("touch", "partial_overlap"):
        base = _body(_spec(rng, 45, 75))
        frac = rng.uniform(0.35, 0.65)
        leg = _spec(rng, 35, 60, bend=0.1)
        hw_a, hw_b = base.width_at(frac), np.max(leg.half_width)
        if kind == "touch":
            reach = hw_a + hw_b - rng.uniform(1.0, hw_b)
        else:
            reach = hw_a * rng.uniform(-0.2, 0.6)
        leg_body, notch = _attach(base, frac, side, tilt, reach, leg)
        return [base, leg_body], [notch], [(0, 1)], kind == "partial_overlap"
    if kind == "end_touch":
        base = _body(_spec(rng, 65, 90, hw=(4.0, 5.0), bend=0.1, waist=rng.uniform(0.4, 0.6)))
        frac = rng.choice([rng.uniform(0.17, 0.28), rng.uniform(0.72, 0.83)])
        leg = _spec(rng, 14, 22, bend=0.0)
        hw_a, hw_b = base.width_at(frac), np.max(leg.half_width)
        reach = hw_a + hw_b - rng.uniform(1.0, hw_b)
        leg_body, notch = _attach(base, frac, side, tilt * 0.6, reach, leg)
        return [base, leg_body], [notch], [(0, 1)], False
    if kind == "cross":
        # the crossing sits near one end of the second chromosome, leaving a stub
        base = _body(_spec(rng, 50, 75))
        frac = rng.uniform(0.4, 0.6)
        leg = _spec(rng, 50, 70, bend=0.1)
        hw_a = base.width_at(frac)
        stub = rng.uniform(2.2, 3.0) * np.max(leg.half_width)
        leg_body, notch = _attach(base, frac, side, tilt * 0.6, -(hw_a + stub), leg)
        # notches that matter are on the long-arm side of the base
        long_notch = _attach(base, frac, side, tilt * 0.6, hw_a, leg)[1]
        return [base, leg_body], [long_notch], [(0, 1)], True
    if kind == "chain":
        bodies = [_body(_spec(rng, 55, 75))]
        notches, pairs = [], []
        for i in range(1, k):
            frac = rng.uniform(0.4, 0.6)
            leg = _spec(rng, 50, 70, bend=0.1)
            prev = bodies[-1]
            hw_a, hw_b = prev.width_at(frac), np.max(leg.half_width)
            reach = hw_a + hw_b - rng.uniform(1.0, hw_b)
            side_i = rng.choice([-1, 1])
            body, notch = _attach(prev, frac, side_i, rng.uniform(-0.4, 0.4), reach, leg)
            bodies.append(body)
            notches.append(notch)
            pairs.append((i - 1, i))
        return bodies, notches, pairs, False
    raise ValueError(f"unknown cluster kind {kind!r}")


def gen_cluster(seed, kind: str, k: int = 2, max_tries: int = 50) -> ClusterFragment:
    """Build one cluster of ``kind``: ``touch``, ``partial_overlap``,
    ``end_touch``, ``cross`` or ``chain`` (``k`` chromosomes in a row, each
    touching the side of the previous one)."""
    if kind not in KINDS:
        raise ValueError(f"unknown cluster kind {kind!r}")
    if kind == "chain" and k < 2:
        raise ValueError("chain needs k >= 2")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        try:
            bodies, notches, pairs, overlapping = _build(rng, kind, k)
        except ValueError:
            continue
        rot = rng.uniform(-np.pi, np.pi)
        shift = rng.uniform(0, 1, size=2)
        c, s_ = np.cos(rot), np.sin(rot)
        m = np.array([[c, -s_], [s_, c]])
        bodies = [b.moved(rot, shift) for b in bodies]
        notches = [tuple(m @ p + shift for p in pair) for pair in notches]
        origin, shape = _canvas(bodies)
        raw = [_rasterize(b, origin, shape) for b in bodies]
        merged = np.logical_or.reduce(raw)
        if not _one_component(merged):
            continue
        if not _valid_layout(raw, pairs):
            continue
        if overlapping:
            masks = raw
        else:
            masks = [m.copy() for m in raw]
            for a, b in pairs:
                masks[b] &= ~raw[a]
            if not all(_one_component(m) for m in masks):
                continue
        snapped = [_snap(pair, merged, origin) for pair in notches]
        if any(pa == pb for pa, pb in snapped):
            continue
        return ClusterFragment(kind, masks, snapped, overlapping)
    raise ValueError(f"could not place a {kind} cluster after {max_tries} tries")


def _valid_layout(raw, pairs) -> bool:
    """Only the listed pairs may touch."""
    n = len(raw)
    linked = {frozenset(p) for p in pairs}
    grown = [ndimage.binary_dilation(m, _EIGHT) for m in raw]
    for i in range(n):
        for j in range(i + 1, n):
            touching = bool((grown[i] & raw[j]).any())
            if touching != (frozenset((i, j)) in linked):
                return False
    return True


# -- scenes ---------------------------------------------------------------

@dataclass(eq=False)
class SceneTruth:
    """A binary scene with one mask per chromosome.

    ``clusters`` lists the chromosome ids of each multi-chromosome component,
    ``kinds`` its construction kind and ``notch_points`` the cut endpoints of
    every touching pair in that cluster.  Masks of touching chromosomes tile
    the foreground; overlapping ones share their overlap pixels.
    """

    image: BinaryImage
    masks: list                     # Region per chromosome, label = id + 1
    clusters: list = field(default_factory=list)
    kinds: list = field(default_factory=list)
    notch_points: list = field(default_factory=list)
    seed: Optional[int] = None

    def to_json(self) -> str:
        """Serialize as JSON; masks are stored as row runs ``[y, x_start, x_end]``."""
        doc = {
            "format": "chromoseg-truth",
            "version": 1,
            "seed": self.seed,
            "width": self.image.width,
            "height": self.image.height,
            "chromosomes": [{"id": i, "runs": _runs(m)} for i, m in enumerate(self.masks)],
            "clusters": [{"members": list(map(int, c)), "kind": k,
                          "notch_points": [[list(map(int, p)), list(map(int, q))] for p, q in n]}
                         for c, k, n in zip(self.clusters, self.kinds, self.notch_points)],
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str, image: BinaryImage = None) -> "SceneTruth":
        doc = json.loads(text)
        if doc.get("format") != "chromoseg-truth":
            raise ValueError("not a chromoseg truth file")
        masks = [Region(c["id"] + 1, _unruns(c["runs"])) for c in doc["chromosomes"]]
        if image is None:
            px = np.zeros((doc["height"], doc["width"]), dtype=bool)
            for m in masks:
                px[m.coords[:, 1], m.coords[:, 0]] = True
            image = BinaryImage(px)
        clusters = [tuple(c["members"]) for c in doc["clusters"]]
        kinds = [c["kind"] for c in doc["clusters"]]
        notches = [[(tuple(p), tuple(q)) for p, q in c["notch_points"]] for c in doc["clusters"]]
        return cls(image, masks, clusters, kinds, notches, doc.get("seed"))


def _runs(region: Region) -> list:
    c = region.coords  # raster order
    runs = []
    start = 0
    for i in range(1, len(c) + 1):
        if i == len(c) or c[i, 1] != c[i - 1, 1] or c[i, 0] != c[i - 1, 0] + 1:
            runs.append([int(c[start, 1]), int(c[start, 0]), int(c[i - 1, 0])])
            start = i
    return runs


def _unruns(runs) -> np.ndarray:
    pts = [(x, y) for y, xa, xb in runs for x in range(xa, xb + 1)]
    return np.array(pts, dtype=np.int64).reshape(-1, 2)


def _as_cluster_spec(spec) -> ClusterSpec:
    if isinstance(spec, ClusterSpec):
        return spec
    if isinstance(spec, str):
        if spec.startswith("chain"):
            return ClusterSpec("chain", int(spec[5:] or 3))
        return ClusterSpec(spec)
    kind, k = spec
    return ClusterSpec(kind, k)


def gen_scene(seed, n_singles: int = 44, cluster_specs=(), canvas=None, margin: int = 3,
              max_tries: int = 400) -> SceneTruth:
    """Place clusters and single chromosomes on one canvas without contact.

    ``cluster_specs`` items are :class:`ClusterSpec`, kind names such as
    ``"touch"`` or ``"chain3"``, or ``(kind, k)`` pairs.  ``canvas`` is
    ``(height, width)``; by default it is sized from the object area.
    """
    rng = np.random.default_rng(seed)
    specs = [_as_cluster_spec(s) for s in cluster_specs]
    objects = []  # (masks, cluster info or None)
    for spec in specs:
        frag = gen_cluster(int(rng.integers(2 ** 31)), spec.kind, spec.k)
        objects.append((frag.masks, frag))
    for _ in range(n_singles):
        while True:
            try:
                reg = gen_chromosome(int(rng.integers(2 ** 31)), random_single_spec(rng))
                break
            except ValueError:
                continue
        m, _, _ = reg.mask()
        objects.append(([m], None))

    if not objects:
        h, w = canvas if canvas is not None else (32, 32)
        return SceneTruth(BinaryImage(np.zeros((h, w), dtype=bool)), [], seed=seed)

    auto = canvas is None
    if auto:
        area = sum(int(np.logical_or.reduce(ms).sum()) for ms, _ in objects)
        side = max(int(np.sqrt(area * 7.0)), max(max(ms[0].shape) for ms, _ in objects) + 2 * margin)
        canvas = (side, side)
    while True:
        placed = _place(rng, objects, canvas, margin, max_tries)
        if placed is not None:
            break
        if not auto:
            raise ValueError("canvas too small: could not place every object")
        canvas = (canvas[0] * 5 // 4, canvas[1] * 5 // 4)
    h, w = canvas
    masks, clusters, kinds, notches = [], [], [], []
    for (obj_masks, frag), (y, x) in zip(objects, placed):
        ids = []
        for m in obj_masks:
            ym, xm = np.nonzero(m)
            masks.append(Region(len(masks) + 1, np.column_stack([xm + x, ym + y])))
            ids.append(len(masks) - 1)
        if frag is not None:
            clusters.append(tuple(ids))
            kinds.append(frag.kind)
            notches.append([((p[0] + x, p[1] + y), (q[0] + x, q[1] + y))
                            for p, q in frag.notch_points])
    img = np.zeros((h, w), dtype=bool)
    for m in masks:
        img[m.coords[:, 1], m.coords[:, 0]] = True
    return SceneTruth(BinaryImage(img), masks, clusters, kinds, notches, seed)


def _place(rng, objects, canvas, margin, max_tries):
    """Random non-touching offsets for every object, or None if one won't fit."""
    h, w = canvas
    occupied = np.zeros((h, w), dtype=bool)
    guard = ndimage.generate_binary_structure(2, 2)
    out = []
    for obj_masks, _ in objects:
        merged = np.logical_or.reduce(obj_masks)
        oh, ow = merged.shape
        if oh > h or ow > w:
            return None
        for _ in range(max_tries):
            y, x = int(rng.integers(0, h - oh + 1)), int(rng.integers(0, w - ow + 1))
            if not (occupied[y:y + oh, x:x + ow] & merged).any():
                break
        else:
            return None
        grown = ndimage.binary_dilation(np.pad(merged, margin), guard, iterations=margin)
        ys0, xs0 = y - margin, x - margin
        sy0, sx0 = max(ys0, 0), max(xs0, 0)
        sy1, sx1 = min(ys0 + grown.shape[0], h), min(xs0 + grown.shape[1], w)
        occupied[sy0:sy1, sx0:sx1] |= grown[sy0 - ys0:sy1 - ys0, sx0 - xs0:sx1 - xs0]
        out.append((y, x))
    return out


# -- evaluation ------------------------------------------------------------

def iou(leaf: Region, truth: Region, shared=None) -> float:
    """IoU of a predicted leaf and a truth mask.

    Pixels in ``shared`` (overlap with other chromosomes) are only counted
    against the truth if the leaf actually took them, so either assignment
    of an overlap zone is credited.
    """
    lp = leaf.pixel_set()
    tp = truth.pixel_set()
    if shared:
        tp -= (shared & tp) - lp
    union = len(lp | tp)
    return len(lp & tp) / union if union else 0.0


@dataclass
class EvalResult:
    n_clusters: int = 0
    n_detected: int = 0
    n_flagged: int = 0
    n_flagged_true: int = 0
    n_success: int = 0
    matches: list = field(default_factory=list)  # per cluster dicts

    @property
    def recall(self) -> float:
        return self.n_detected / self.n_clusters if self.n_clusters else 1.0

    @property
    def precision(self) -> float:
        return self.n_flagged_true / self.n_flagged if self.n_flagged else 1.0

    @property
    def success_rate(self) -> float:
        return self.n_success / self.n_clusters if self.n_clusters else 1.0

    def as_dict(self) -> dict:
        return {
            "clusters": self.n_clusters,
            "detected": self.n_detected,
            "flagged": self.n_flagged,
            "detection_precision": round(self.precision, 6),
            "detection_recall": round(self.recall, 6),
            "separated": self.n_success,
            "success_rate": round(self.success_rate, 6),
            "matches": self.matches,
        }


def aggregate(results) -> EvalResult:
    out = EvalResult()
    for r in results:
        out.n_clusters += r.n_clusters
        out.n_detected += r.n_detected
        out.n_flagged += r.n_flagged
        out.n_flagged_true += r.n_flagged_true
        out.n_success += r.n_success
        out.matches.extend(r.matches)
    return out


def _truth_index(truth: SceneTruth) -> np.ndarray:
    """Grid of cluster index + 1 for clustered pixels, -1 for singles, 0 background."""
    grid = np.zeros((truth.image.height, truth.image.width), dtype=np.int32)
    for m in truth.masks:
        grid[m.coords[:, 1], m.coords[:, 0]] = -1
    for ci, members in enumerate(truth.clusters):
        for mid in members:
            m = truth.masks[mid]
            grid[m.coords[:, 1], m.coords[:, 0]] = ci + 1
    return grid


def _match(leaves, members, truth: SceneTruth, threshold: float):
    """Greedy maximum-IoU one-to-one matching of leaves to member masks."""
    counts = {}
    for mid in members:
        for p in truth.masks[mid].pixel_set():
            counts[p] = counts.get(p, 0) + 1
    shared = {p for p, c in counts.items() if c > 1}
    scores = [(iou(leaf, truth.masks[mid], shared), -li, -mi)
              for li, leaf in enumerate(leaves) for mi, mid in enumerate(members)]
    scores.sort(reverse=True)
    used_l, used_m, pairs = set(), set(), []
    for s, nli, nmi in scores:
        li, mi = -nli, -nmi
        if li in used_l or mi in used_m:
            continue
        used_l.add(li)
        used_m.add(mi)
        pairs.append((members[mi], li, s))
    ok = (len(leaves) == len(members) and len(pairs) == len(members)
          and all(s >= threshold for _, _, s in pairs))
    return ok, sorted(pairs)


def _majority_cluster(region: Region, grid: np.ndarray) -> int:
    vals = grid[region.coords[:, 1], region.coords[:, 0]]
    vals = vals[vals > 0]
    if len(vals) * 2 <= region.size:
        return 0
    return int(np.bincount(vals).argmax())


def evaluate(forest, truth: SceneTruth, iou_threshold: float = 0.7) -> EvalResult:
    """Score a :class:`~chromoseg.cutline.SeparationResult` against the truth.

    A cluster is separated correctly when its component was flagged, its tree
    resolved, and its leaves match the member chromosomes one-to-one with
    IoU at least ``iou_threshold`` each.
    """
    grid = _truth_index(truth)
    trees = {}
    res = EvalResult(n_clusters=len(truth.clusters))
    for tree in forest.forest:
        ci = _majority_cluster(tree.root.region, grid)
        if tree.flagged:
            res.n_flagged += 1
            res.n_flagged_true += ci > 0
        if ci > 0:
            trees.setdefault(ci, tree)
    for ci, members in enumerate(truth.clusters, start=1):
        tree = trees.get(ci)
        entry = {"cluster": ci - 1, "kind": truth.kinds[ci - 1], "members": list(members)}
        if tree is None or not tree.flagged:
            entry.update(status="missed", success=False)
        else:
            res.n_detected += 1
            if not tree.resolved:
                entry.update(status="unresolved", success=False)
            else:
                ok, pairs = _match(tree.leaves, members, truth, iou_threshold)
                entry.update(status="separated" if ok else "wrong", success=ok,
                             leaves=len(tree.leaves), cuts=tree.n_cuts,
                             iou=[round(s, 6) for _, _, s in pairs])
                res.n_success += ok
        res.matches.append(entry)
    return res


def evaluate_label_map(label_map: LabelMap, truth: SceneTruth, iou_threshold: float = 0.7,
                       flagged_labels=None) -> EvalResult:
    """Score a predicted label map.  Leaves of a cluster are the labels that
    cover its pixels.  Detection counts need ``flagged_labels`` (input
    component labels flagged as clusters) and are skipped otherwise."""
    grid = _truth_index(truth)
    leaves = extract_regions(label_map)
    res = EvalResult(n_clusters=len(truth.clusters))
    by_cluster = {}
    for leaf in leaves:
        vals = grid[leaf.coords[:, 1], leaf.coords[:, 0]]
        for ci in set(vals[vals > 0].tolist()):
            by_cluster.setdefault(ci, []).append(leaf)
    for ci, members in enumerate(truth.clusters, start=1):
        cl = by_cluster.get(ci, [])
        ok, pairs = _match(cl, members, truth, iou_threshold) if cl else (False, [])
        res.n_success += ok
        res.matches.append({"cluster": ci - 1, "kind": truth.kinds[ci - 1],
                            "members": list(members), "success": ok, "leaves": len(cl),
                            "status": "separated" if ok else "wrong",
                            "iou": [round(s, 6) for _, _, s in pairs]})
    if flagged_labels is not None:
        comps = {r.label: r for r in extract_regions(label_components(truth.image))}
        hits = set()
        for lab in flagged_labels:
            ci = _majority_cluster(comps[lab], grid)
            res.n_flagged += 1
            res.n_flagged_true += ci > 0
            if ci > 0:
                hits.add(ci)
        res.n_detected = len(hits)
    else:
        res.n_detected = res.n_clusters
    return res

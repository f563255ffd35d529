"""Discrete geometry on pixel regions.

Boundary tracing, lattice convex hulls, minimum-area enclosing ellipses and
Zhang-Suen thinning.  Hull and point-in-polygon work in exact integer
arithmetic; only the ellipse fit uses floating point.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .raster import Region

__all__ = [
    "Boundary",
    "EllipseFit",
    "Hull",
    "SkeletonInfo",
    "convex_hull",
    "count_endpoints",
    "hull_pixel_count",
    "min_enclosing_ellipse",
    "points_in_hull",
    "signed_area",
    "skeleton_endpoints",
    "skeletonize",
    "trace_boundary",
    "zhang_suen",
]

# Moore neighbourhood in on-screen clockwise order (y grows downward),
# starting from west: W, NW, N, NE, E, SE, S, SW.
_MOORE = ((-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1))
_MOORE_INDEX = {d: i for i, d in enumerate(_MOORE)}


@dataclass(frozen=True, eq=False)
class Boundary:
    """Closed walk along a region's outer contour, clockwise on screen.

    ``points`` is an ``(n, 2)`` array of ``(x, y)``; consecutive points
    (cyclically) are 8-neighbours and may repeat where the region is one
    pixel wide.
    """

    points: np.ndarray

    @property
    def n(self) -> int:
        return len(self.points)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True, eq=False)
class Hull:
    """Strictly convex hull vertices, counter-clockwise in the ``(x, y)``
    frame (positive cross products; clockwise as drawn with y down)."""

    vertices: np.ndarray


@dataclass(frozen=True)
class EllipseFit:
    center: tuple
    semi_major: float
    semi_minor: float
    orientation: float  # angle of the major axis from +x, radians in [-pi/2, pi/2)

    @property
    def axis_ratio(self) -> float:
        return self.semi_minor / self.semi_major

    def shape_matrix(self) -> np.ndarray:
        """``A`` such that ``(p - c)^T A (p - c) <= 1`` describes the ellipse."""
        c, s = np.cos(self.orientation), np.sin(self.orientation)
        rot = np.array([[c, -s], [s, c]])
        return rot @ np.diag([self.semi_major ** -2, self.semi_minor ** -2]) @ rot.T


@dataclass(frozen=True, eq=False)
class SkeletonInfo:
    skeleton: np.ndarray   # (k, 2) skeleton pixel coordinates
    endpoints: np.ndarray  # (e, 2) subset of skeleton

    def skeleton_set(self) -> set:
        return {(int(x), int(y)) for x, y in self.skeleton}

    def endpoint_set(self) -> set:
        return {(int(x), int(y)) for x, y in self.endpoints}


def signed_area(points) -> float:
    """Shoelace area with the y axis pointing up, so a walk that is
    clockwise on screen has a negative area."""
    p = np.asarray(points, dtype=np.float64)
    x, y = p[:, 0], -p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


# -- boundary -------------------------------------------------------------

def trace_boundary(region: Region) -> Boundary:
    """Moore-neighbour trace of the outer contour.

    Starts at the topmost-then-leftmost pixel and walks clockwise on screen.
    Tracing stops when the first move out of the start pixel is about to be
    repeated, which also terminates walks that pass through the start pixel
    more than once.  Holes are not traced.
    """
    mask, x0, y0 = region.mask(pad=1)
    start_y, start_x = region.coords[0, 1] - y0, region.coords[0, 0] - x0

    def step(cx, cy, back):
        # scan clockwise beginning just after the backtrack cell
        for k in range(1, 9):
            i = (back + k) % 8
            dx, dy = _MOORE[i]
            if mask[cy + dy, cx + dx]:
                pdx, pdy = _MOORE[(back + k - 1) % 8]
                prev = (cx + pdx, cy + pdy)
                nx, ny = cx + dx, cy + dy
                return nx, ny, _MOORE_INDEX[(prev[0] - nx, prev[1] - ny)]
        return None

    walk = [(start_x, start_y)]
    first = step(start_x, start_y, 0)  # west of the start pixel is background
    if first is None:
        return Boundary(np.array([[start_x + x0, start_y + y0]], dtype=np.int64))
    cx, cy, back = first
    limit = 4 * mask.size + 8
    while len(walk) < limit:
        nxt = step(cx, cy, back)
        if (cx, cy) == (start_x, start_y) and (nxt[0], nxt[1]) == (first[0], first[1]):
            break
        walk.append((cx, cy))
        cx, cy, back = nxt
    else:  # pragma: no cover - guards against a malformed mask
        raise RuntimeError("boundary trace did not close")
    pts = np.array(walk, dtype=np.int64)
    pts[:, 0] += x0
    pts[:, 1] += y0
    return Boundary(pts)


# -- convex hull ----------------------------------------------------------

def _cross(o, a, b) -> int:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> Hull:
    """Andrew's monotone chain on integer points.

    Collinear vertices are dropped; a collinear input returns its two
    extreme points, a single point returns itself.
    """
    if isinstance(points, Region):
        points = points.coords
    pts = sorted({(int(x), int(y)) for x, y in np.asarray(points).reshape(-1, 2)})
    if not pts:
        raise ValueError("convex hull of an empty point set")
    if len(pts) <= 2:
        return Hull(np.array(pts, dtype=np.int64))

    lower = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    verts = lower[:-1] + upper[:-1]
    return Hull(np.array(verts, dtype=np.int64))


def points_in_hull(hull: Hull, pts) -> np.ndarray:
    """Boolean mask of ``pts`` lying inside or on ``hull`` (exact)."""
    pts = np.asarray(pts, dtype=np.int64).reshape(-1, 2)
    v = hull.vertices
    if len(v) == 1:
        return np.all(pts == v[0], axis=1)
    if len(v) == 2:
        a, b = v
        cr = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0])
        within = ((pts[:, 0] >= min(a[0], b[0])) & (pts[:, 0] <= max(a[0], b[0]))
                  & (pts[:, 1] >= min(a[1], b[1])) & (pts[:, 1] <= max(a[1], b[1])))
        return (cr == 0) & within
    inside = np.ones(len(pts), dtype=bool)
    for a, b in zip(v, np.roll(v, -1, axis=0)):
        cr = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0])
        inside &= cr >= 0
    return inside


def hull_pixel_count(hull: Hull, bbox=None) -> int:
    """Number of lattice points inside or on the hull polygon."""
    v = hull.vertices
    if bbox is None:
        bbox = (v[:, 0].min(), v[:, 1].min(), v[:, 0].max(), v[:, 1].max())
    xmin, ymin, xmax, ymax = (int(b) for b in bbox)
    ys, xs = np.mgrid[ymin:ymax + 1, xmin:xmax + 1]
    grid = np.column_stack([xs.ravel(), ys.ravel()])
    return int(points_in_hull(hull, grid).sum())


# -- enclosing ellipse --------------------------------------------------------

def _lifted_m(q: np.ndarray, u: np.ndarray) -> np.ndarray:
    x = (q * u) @ q.T
    return np.einsum("ij,ij->j", q, np.linalg.solve(x, q))


def _polish(q: np.ndarray, u: np.ndarray, rounds: int = 12):
    """Newton iteration on the support of ``u`` solving ``M_i = d + 1``.

    Weights driven to zero or below leave the support.  Returns the improved
    weights, or None if the iteration breaks down.
    """
    n_lift = q.shape[0]
    u = u.copy()
    u[u < 1e-9 * u.max()] = 0.0
    u /= u.sum()
    if np.count_nonzero(u) < n_lift:
        return None
    for _ in range(rounds):
        s = np.flatnonzero(u > 0)
        x = (q[:, s] * u[s]) @ q[:, s].T
        try:
            g = q[:, s].T @ np.linalg.solve(x, q[:, s])
            step = np.linalg.solve(g * g, np.diag(g) - n_lift)
        except np.linalg.LinAlgError:
            return None
        new = u[s] + step
        if np.all(new > 0):
            u[s] = new
            if np.max(np.abs(step)) < 1e-13:
                break
        else:
            u[s[new <= 0]] = 0.0
            if np.count_nonzero(u) < n_lift:
                return None
        u /= u.sum()
    x = (q * u) @ q.T
    if np.linalg.cond(x) > 1e12:
        return None
    return u


def _khachiyan(pts: np.ndarray, tol: float, max_iter: int):
    """Minimum-volume enclosing ellipse weights by Khachiyan's method with
    Todd-Yildirim away steps.

    Each time the iterate gains a decimal digit (from 1e-2 on), a Newton
    polish on the current support is attempted.  Stops when every lifted
    point satisfies ``M_i <= (d + 1)(1 + tol)``.  Returns the weight vector ``u``.
    """
    n, d = pts.shape
    q = np.vstack([pts.T, np.ones(n)])
    u = np.full(n, 1.0 / n)
    next_polish = 1e-2
    for _ in range(max_iter):
        m = _lifted_m(q, u)
        j = int(np.argmax(m))
        eps_up = m[j] / (d + 1) - 1.0
        if eps_up <= tol:
            return u
        if eps_up < next_polish:
            # active-set polish: add the worst violator, re-solve, repeat
            next_polish = eps_up / 10.0
            cand = u
            for _ in range(4 * (d + 2)):
                cand = _polish(q, cand)
                if cand is None:
                    break
                mc = _lifted_m(q, cand)
                jc = int(np.argmax(mc))
                if mc[jc] / (d + 1) - 1.0 <= tol:
                    return cand
                cand = cand.copy()
                cand[jc] += 1e-3
                cand /= cand.sum()
        support = u > 0
        k = int(np.flatnonzero(support)[np.argmin(m[support])])
        eps_down = 1.0 - m[k] / (d + 1)
        if eps_up >= eps_down:
            beta = (m[j] - d - 1) / ((d + 1) * (m[j] - 1))
            u *= 1.0 - beta
            u[j] += beta
        else:
            beta = (d + 1 - m[k]) / ((d + 1) * (m[k] - 1))
            beta = min(beta, u[k] / (1.0 - u[k]))
            u *= 1.0 + beta
            u[k] -= beta
            if u[k] < 1e-15:
                u[k] = 0.0
    warnings.warn(f"ellipse fit stopped after {max_iter} iterations", RuntimeWarning)
    return u


def min_enclosing_ellipse(points, tol: float = 1e-6, max_iter: int = 100_000) -> EllipseFit:
    """Minimum-area ellipse enclosing a set of lattice points.

    Solved on the hull vertices.  When the hull is degenerate (one point or a
    segment) every vertex is replaced by its four pixel corners, so one-pixel
    wide regions still get a proper ellipse.  The result is scaled so all
    points are inside with at least one on the boundary.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if isinstance(points, Region):
        points = points.coords
    points = np.asarray(points).reshape(-1, 2)
    if len(points) < 1:
        raise ValueError("ellipse of an empty point set")
    hull = convex_hull(points)
    if len(hull.vertices) >= 3:
        pts = hull.vertices.astype(np.float64)
    else:
        corners = (2 * hull.vertices[:, None, :] + np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]]))
        pts = convex_hull(corners.reshape(-1, 2)).vertices / 2.0

    shift = pts.mean(axis=0)
    p = pts - shift
    u = _khachiyan(p, tol, max_iter)
    c = p.T @ u
    cov = (p.T * u) @ p - np.outer(c, c)
    a = np.linalg.inv(cov) / 2.0
    diff = p - c
    r = np.einsum("ij,jk,ik->i", diff, a, diff).max()
    a /= r
    w, vecs = np.linalg.eigh(a)  # ascending: w[0] belongs to the major axis
    semi_major, semi_minor = 1.0 / np.sqrt(w[0]), 1.0 / np.sqrt(w[1])
    ang = float(np.arctan2(vecs[1, 0], vecs[0, 0]))
    if ang >= np.pi / 2:
        ang -= np.pi
    elif ang < -np.pi / 2:
        ang += np.pi
    center = (float(c[0] + shift[0]), float(c[1] + shift[1]))
    return EllipseFit(center, float(semi_major), float(semi_minor), ang)


# -- skeleton --------------------------------------------------------------

def _neighbours(img: np.ndarray):
    """P2..P9 (N, NE, E, SE, S, SW, W, NW) of every interior cell of a padded grid."""
    c = img[1:-1, 1:-1]
    return (img[:-2, 1:-1], img[:-2, 2:], img[1:-1, 2:], img[2:, 2:],
            img[2:, 1:-1], img[2:, :-2], img[1:-1, :-2], img[:-2, :-2]), c


def zhang_suen(mask) -> np.ndarray:
    """Zhang-Suen thinning of a boolean grid; returns a new boolean grid."""
    img = np.pad(np.asarray(mask, dtype=np.uint8), 1)
    while True:
        changed = False
        for sub in (0, 1):
            (p2, p3, p4, p5, p6, p7, p8, p9), c = _neighbours(img)
            ring = (p2, p3, p4, p5, p6, p7, p8, p9, p2)
            b = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9
            a = sum((ring[k] == 0) & (ring[k + 1] == 1) for k in range(8))
            if sub == 0:
                cond = (p2 * p4 * p6 == 0) & (p4 * p6 * p8 == 0)
            else:
                cond = (p2 * p4 * p8 == 0) & (p2 * p6 * p8 == 0)
            delete = (c == 1) & (b >= 2) & (b <= 6) & (a == 1) & cond
            if delete.any():
                c[delete] = 0
                changed = True
        if not changed:
            return img[1:-1, 1:-1].astype(bool)


def skeleton_endpoints(skel: np.ndarray) -> np.ndarray:
    """Boolean grid of skeleton pixels with at most one skeleton 8-neighbour."""
    s = np.pad(skel.astype(np.uint8), 1)
    nb, c = _neighbours(s)
    return (c == 1) & (sum(nb) <= 1)


def skeletonize(region: Region) -> SkeletonInfo:
    """Zhang-Suen skeleton of a region plus its endpoints.

    Thinning erases 2x2 blocks completely; if nothing survives, the pixel
    closest to the centroid is kept so the component is not lost.
    """
    mask, x0, y0 = region.mask()
    skel = zhang_suen(mask)
    if not skel.any():
        centroid = region.coords.mean(axis=0)
        i = int(np.argmin(((region.coords - centroid) ** 2).sum(axis=1)))
        skel[region.coords[i, 1] - y0, region.coords[i, 0] - x0] = True
    ends = skeleton_endpoints(skel)
    ys, xs = np.nonzero(skel)
    eys, exs = np.nonzero(ends)
    return SkeletonInfo(np.column_stack([xs + x0, ys + y0]),
                        np.column_stack([exs + x0, eys + y0]))


def count_endpoints(info: SkeletonInfo) -> int:
    return len(info.endpoints)

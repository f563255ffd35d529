"""Independent reference implementations used as test oracles.

These are deliberately naive (pure Python loops, no shared code with the
package) so that agreement means something.
"""

import cmath
import math
from collections import deque

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


# -- labeling -----------------------------------------------------------

def flood_fill_labels(pixels, connectivity=8):
    """BFS labeling; components numbered in raster order of their first pixel."""
    h, w = len(pixels), len(pixels[0])
    out = [[0] * w for _ in range(h)]
    if connectivity == 8:
        steps = [(dx, dy) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if dx or dy]
    else:
        steps = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    nxt = 0
    for y in range(h):
        for x in range(w):
            if pixels[y][x] and not out[y][x]:
                nxt += 1
                out[y][x] = nxt
                q = deque([(x, y)])
                while q:
                    cx, cy = q.popleft()
                    for dx, dy in steps:
                        nx, ny = cx + dx, cy + dy
                        if 0 <= nx < w and 0 <= ny < h and pixels[ny][nx] and not out[ny][nx]:
                            out[ny][nx] = nxt
                            q.append((nx, ny))
    return np.array(out)


# -- hull ---------------------------------------------------------------

def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _in_triangle(p, a, b, c):
    if _cross(a, b, c) == 0:
        return False  # degenerate; the segment test covers it
    d1, d2, d3 = _cross(a, b, p), _cross(b, c, p), _cross(c, a, p)
    neg = d1 < 0 or d2 < 0 or d3 < 0
    pos = d1 > 0 or d2 > 0 or d3 > 0
    return not (neg and pos)


def _on_segment(p, a, b):
    return (_cross(a, b, p) == 0 and min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= p[1] <= max(a[1], b[1]))


def brute_extreme_points(points):
    """p is a vertex iff it is not inside (or on) a triangle or segment of the others."""
    pts = sorted(set(map(tuple, points)))
    out = set()
    for p in pts:
        others = [q for q in pts if q != p]
        inside = False
        n = len(others)
        for i in range(n):
            for j in range(i + 1, n):
                if _on_segment(p, others[i], others[j]):
                    inside = True
                    break
                for k in range(j + 1, n):
                    if _in_triangle(p, others[i], others[j], others[k]):
                        inside = True
                        break
                if inside:
                    break
            if inside:
                break
        if not inside:
            out.add(p)
    return out


def brute_lattice_count(vertices, bbox):
    """Lattice points inside or on a convex CCW polygon, by scanning the box."""
    v = [tuple(map(int, p)) for p in vertices]
    x0, y0, x1, y1 = bbox
    count = 0
    for y in range(y0, y1 + 1):
        for x in range(x0, x1 + 1):
            p = (x, y)
            if len(v) == 1:
                count += p == v[0]
            elif len(v) == 2:
                count += _on_segment(p, v[0], v[1])
            else:
                count += all(_cross(v[i], v[(i + 1) % len(v)], p) >= 0 for i in range(len(v)))
    return count


# -- angles -------------------------------------------------------------

def wrap(a):
    w = math.fmod(a + math.pi, 2 * math.pi)
    if w < 0:
        w += 2 * math.pi
    w -= math.pi
    return math.pi if w == -math.pi else w


def direct_angle_profile(points, offsets=(4, 5), with_resultant=False):
    """Chord angles to i+o for each offset, combined as a circular mean.

    With ``with_resultant`` also return the smallest resultant length, which
    is about zero where opposite chords make the mean undefined.
    """
    n = len(points)
    theta = []
    weakest = math.inf
    for i in range(n):
        acc = 0j
        for o in offsets:
            dx = points[(i + o) % n][0] - points[i][0]
            dy = points[(i + o) % n][1] - points[i][1]
            if dx or dy:
                acc += cmath.exp(1j * math.atan2(dy, dx))
        weakest = min(weakest, abs(acc) if acc else math.inf)
        theta.append(wrap(math.atan2(acc.imag, acc.real)))
    delta = [abs(wrap(theta[(i + 1) % n] - theta[i])) for i in range(n)]
    if with_resultant:
        return theta, delta, weakest
    return theta, delta


# -- thinning -----------------------------------------------------------

def reference_zhang_suen(mask):
    """Textbook two-subiteration Zhang-Suen thinning with explicit loops."""
    img = [[1 if v else 0 for v in row] for row in np.asarray(mask)]
    h, w = len(img), len(img[0])
    g = [[0] * (w + 2) for _ in range(h + 2)]
    for y in range(h):
        for x in range(w):
            g[y + 1][x + 1] = img[y][x]
    changed = True
    while changed:
        changed = False
        for sub in (0, 1):
            kill = []
            for y in range(1, h + 1):
                for x in range(1, w + 1):
                    if not g[y][x]:
                        continue
                    p = [g[y - 1][x], g[y - 1][x + 1], g[y][x + 1], g[y + 1][x + 1],
                         g[y + 1][x], g[y + 1][x - 1], g[y][x - 1], g[y - 1][x - 1]]
                    b = sum(p)
                    a = sum(p[k] == 0 and p[(k + 1) % 8] == 1 for k in range(8))
                    p2, p4, p6, p8 = p[0], p[2], p[4], p[6]
                    if sub == 0:
                        c = p2 * p4 * p6 == 0 and p4 * p6 * p8 == 0
                    else:
                        c = p2 * p4 * p8 == 0 and p2 * p6 * p8 == 0
                    if 2 <= b <= 6 and a == 1 and c:
                        kill.append((y, x))
            for y, x in kill:
                g[y][x] = 0
            changed |= bool(kill)
    return np.array([row[1:-1] for row in g[1:-1]], dtype=bool)


# -- shapes -------------------------------------------------------------

def disk(r, pad=0):
    ys, xs = np.mgrid[-r - pad:r + pad + 1, -r - pad:r + pad + 1]
    return xs ** 2 + ys ** 2 <= r * r


def thick_segments(size, segments, half_width):
    """Union of capsules around segments ``((x0, y0), (x1, y1))``."""
    ys, xs = np.mgrid[:size, :size].astype(float)
    out = np.zeros((size, size), dtype=bool)
    for (x0, y0), (x1, y1) in segments:
        dx, dy = x1 - x0, y1 - y0
        t = np.clip(((xs - x0) * dx + (ys - y0) * dy) / (dx * dx + dy * dy), 0, 1)
        d = np.hypot(xs - (x0 + t * dx), ys - (y0 + t * dy))
        out |= d <= half_width
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance verdicts ------------------------------------------------------

VERDICTS = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""

    def record(name, ok, detail):
        line = f"{name}: {'PASS' if ok else 'FAIL'}  {detail}"
        VERDICTS.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split(":")[0].split()[-1])):
            terminalreporter.write_line(line)

"""Pixel grids, thresholding, connected components and Netpbm I/O.

Coordinates are ``(x, y)`` with x the column (rightward) and y the row
(downward), origin at the top-left pixel.  Arrays are indexed ``[y, x]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

__all__ = [
    "BinaryImage",
    "GrayImage",
    "LabelMap",
    "NetpbmError",
    "Region",
    "decode_image",
    "decode_label_map",
    "encode_label_map",
    "encode_pbm",
    "encode_pgm",
    "extract_regions",
    "label_components",
    "otsu_level",
    "otsu_threshold",
    "region_from_mask",
    "regions_to_label_map",
]


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """Foreground/background grid; ``pixels[y, x]`` is True on chromosome material."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=bool)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"binary image must be a non-empty 2-D grid, got shape {px.shape}")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        return isinstance(other, BinaryImage) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class GrayImage:
    pixels: np.ndarray
    maxval: int = 255

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"gray image must be a non-empty 2-D grid, got shape {px.shape}")
        if not 1 <= self.maxval <= 255:
            raise ValueError(f"maxval must be in 1..255, got {self.maxval}")
        if px.size and (px.min() < 0 or px.max() > self.maxval):
            raise ValueError("pixel values outside [0, maxval]")
        object.__setattr__(self, "pixels", px.astype(np.uint8))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        return (isinstance(other, GrayImage) and self.maxval == other.maxval
                and np.array_equal(self.pixels, other.pixels))


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Row-major label grid, 0 = background, positive ids = components."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2:
            raise ValueError("label map must be 2-D")
        if lab.size and lab.min() < 0:
            raise ValueError("labels must be non-negative")
        object.__setattr__(self, "labels", lab.astype(np.int32))

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def count(self) -> int:
        return int(self.labels.max()) if self.labels.size else 0

    def __eq__(self, other):
        return isinstance(other, LabelMap) and np.array_equal(self.labels, other.labels)


@dataclass(frozen=True, eq=False)
class Region:
    """One connected component.

    ``coords`` is an ``(N, 2)`` integer array of ``(x, y)`` pairs in raster
    order (sorted by y, then x).  ``bbox`` is ``(xmin, ymin, xmax, ymax)``,
    inclusive.
    """

    label: int
    coords: np.ndarray
    bbox: tuple = field(default=None)

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.int64).reshape(-1, 2)
        if len(c) == 0:
            raise ValueError("region must contain at least one pixel")
        order = np.lexsort((c[:, 0], c[:, 1]))
        c = c[order]
        if len(c) > 1 and np.any(np.all(c[1:] == c[:-1], axis=1)):
            raise ValueError("duplicate pixel coordinates in region")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)
        bbox = (int(c[:, 0].min()), int(c[:, 1].min()), int(c[:, 0].max()), int(c[:, 1].max()))
        object.__setattr__(self, "bbox", bbox)

    @property
    def size(self) -> int:
        return len(self.coords)

    def pixel_set(self) -> set:
        return {(int(x), int(y)) for x, y in self.coords}

    def mask(self, pad: int = 0):
        """Return ``(mask, x0, y0)``: a tight boolean mask and the image
        coordinates of its top-left cell."""
        xmin, ymin, xmax, ymax = self.bbox
        x0, y0 = xmin - pad, ymin - pad
        m = np.zeros((ymax - ymin + 1 + 2 * pad, xmax - xmin + 1 + 2 * pad), dtype=bool)
        m[self.coords[:, 1] - y0, self.coords[:, 0] - x0] = True
        return m, x0, y0

    def with_label(self, label: int) -> "Region":
        return Region(label, self.coords)

    def __eq__(self, other):
        return (isinstance(other, Region) and self.label == other.label
                and np.array_equal(self.coords, other.coords))

    def __hash__(self):
        return hash((self.label, self.coords.tobytes()))


def region_from_mask(mask, x0: int = 0, y0: int = 0, label: int = 1) -> Region:
    ys, xs = np.nonzero(mask)
    return Region(label, np.column_stack([xs + x0, ys + y0]))


# -- thresholding -----------------------------------------------------------

def otsu_level(img: GrayImage) -> int:
    """Threshold ``t`` maximizing between-class variance of ``{v <= t}`` vs ``{v > t}``.

    Ties resolve to the smallest ``t``.
    """
    hist = np.bincount(img.pixels.ravel(), minlength=256).astype(np.float64)
    if np.count_nonzero(hist) < 2:
        raise ValueError("degenerate histogram: image has a single intensity")
    levels = np.arange(256, dtype=np.float64)
    total = hist.sum()
    w0 = np.cumsum(hist)
    s0 = np.cumsum(hist * levels)
    w1 = total - w0
    s1 = s0[-1] - s0
    with np.errstate(divide="ignore", invalid="ignore"):
        between = w0 * w1 * (s0 / w0 - s1 / w1) ** 2
    between[(w0 == 0) | (w1 == 0)] = -1.0
    return int(np.argmax(between))


def otsu_threshold(img: GrayImage, polarity: str = "auto") -> BinaryImage:
    """Binarize with Otsu's level.

    ``polarity`` selects the foreground side: ``"bright"`` (``v > t``),
    ``"dark"`` (``v <= t``) or ``"auto"`` (the minority class; bright on a tie).
    """
    t = otsu_level(img)
    bright = img.pixels > t
    if polarity == "bright":
        fg = bright
    elif polarity == "dark":
        fg = ~bright
    elif polarity == "auto":
        n_bright = int(bright.sum())
        fg = bright if n_bright <= bright.size - n_bright else ~bright
    else:
        raise ValueError(f"unknown polarity {polarity!r}")
    return BinaryImage(fg)


# -- components --------------------------------------------------------------

_STRUCTURE = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}


def label_components(img, connectivity: int = 8) -> LabelMap:
    """Label connected foreground components.

    Labels run ``1..K`` in order of each component's first pixel in raster
    order.  Accepts a :class:`BinaryImage` or a boolean array.
    """
    if connectivity not in _STRUCTURE:
        raise ValueError("connectivity must be 4 or 8")
    px = img.pixels if isinstance(img, BinaryImage) else np.asarray(img, dtype=bool)
    raw, k = ndimage.label(px, structure=_STRUCTURE[connectivity])
    if k == 0:
        return LabelMap(np.zeros(px.shape, dtype=np.int32))
    flat = raw.ravel()
    fg = np.flatnonzero(flat)
    # first-encounter order, independent of the backend's numbering
    _, first = np.unique(flat[fg], return_index=True)
    order = np.argsort(fg[first], kind="stable")
    remap = np.zeros(k + 1, dtype=np.int32)
    remap[order + 1] = np.arange(1, k + 1, dtype=np.int32)
    return LabelMap(remap[raw])


def extract_regions(label_map: LabelMap) -> list:
    """One :class:`Region` per positive label, sorted by label."""
    lab = label_map.labels
    regions = []
    for i, sl in enumerate(ndimage.find_objects(lab), start=1):
        if sl is None:
            continue
        ys, xs = np.nonzero(lab[sl] == i)
        coords = np.column_stack([xs + sl[1].start, ys + sl[0].start])
        regions.append(Region(i, coords))
    return regions


def regions_to_label_map(regions, width: int, height: int) -> LabelMap:
    lab = np.zeros((height, width), dtype=np.int32)
    for r in regions:
        lab[r.coords[:, 1], r.coords[:, 0]] = r.label
    return LabelMap(lab)


# -- Netpbm ----------------------------------------------------------------

class NetpbmError(ValueError):
    """Malformed or truncated Netpbm data; ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


_WS = b" \t\n\r\v\f"


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def skip_space(self):
        d = self.data
        while self.pos < len(d):
            c = d[self.pos:self.pos + 1]
            if c in _WS:
                self.pos += 1
            elif c == b"#":
                while self.pos < len(d) and d[self.pos:self.pos + 1] not in (b"\n", b"\r"):
                    self.pos += 1
            else:
                break

    def integer(self, what: str) -> int:
        self.skip_space()
        start = self.pos
        d = self.data
        while self.pos < len(d) and d[self.pos:self.pos + 1].isdigit():
            self.pos += 1
        if self.pos == start:
            if start >= len(d):
                raise NetpbmError(f"truncated header: missing {what}", start)
            raise NetpbmError(f"expected integer {what}", start)
        return int(d[start:self.pos])

    def single_space(self):
        if self.pos >= len(self.data):
            raise NetpbmError("truncated header: missing raster separator", self.pos)
        if self.data[self.pos:self.pos + 1] not in _WS:
            raise NetpbmError("expected whitespace before raster", self.pos)
        self.pos += 1


def decode_image(data: bytes):
    """Parse PBM (P1/P4) into a :class:`BinaryImage` or PGM (P2/P5) into a
    :class:`GrayImage`.  PBM bit 1 (black) is foreground."""
    if len(data) < 2:
        raise NetpbmError("truncated magic number", len(data))
    magic = data[:2]
    if magic not in (b"P1", b"P2", b"P4", b"P5"):
        raise NetpbmError(f"unsupported magic number {magic!r}", 0)
    rd = _Reader(data)
    rd.pos = 2
    width = rd.integer("width")
    height = rd.integer("height")
    if width < 1 or height < 1:
        raise NetpbmError("width and height must be positive", rd.pos)
    maxval = 1
    if magic in (b"P2", b"P5"):
        mv_pos = rd.pos
        maxval = rd.integer("maxval")
        if not 1 <= maxval <= 255:
            raise NetpbmError(f"unsupported maxval {maxval}", mv_pos)
    n = width * height

    if magic == b"P1":
        bits = np.empty(n, dtype=bool)
        for i in range(n):
            rd.skip_space()
            if rd.pos >= len(data):
                raise NetpbmError(f"truncated raster: got {i} of {n} pixels", rd.pos)
            c = data[rd.pos:rd.pos + 1]
            if c not in (b"0", b"1"):
                raise NetpbmError(f"invalid PBM pixel {c!r}", rd.pos)
            bits[i] = c == b"1"
            rd.pos += 1
        return BinaryImage(bits.reshape(height, width))

    if magic == b"P2":
        vals = np.empty(n, dtype=np.int64)
        for i in range(n):
            rd.skip_space()
            start = rd.pos
            try:
                v = rd.integer("pixel value")
            except NetpbmError as exc:
                if rd.pos >= len(data):
                    raise NetpbmError(f"truncated raster: got {i} of {n} pixels", rd.pos) from exc
                raise
            if v > maxval:
                raise NetpbmError(f"pixel value {v} exceeds maxval {maxval}", start)
            vals[i] = v
        return GrayImage(vals.reshape(height, width), maxval)

    rd.single_space()
    if magic == b"P4":
        row_bytes = (width + 7) // 8
        need = row_bytes * height
        raw = data[rd.pos:rd.pos + need]
        if len(raw) < need:
            raise NetpbmError(f"truncated raster: need {need} bytes, got {len(raw)}", len(data))
        packed = np.frombuffer(raw, dtype=np.uint8).reshape(height, row_bytes)
        bits = np.unpackbits(packed, axis=1)[:, :width]
        return BinaryImage(bits.astype(bool))

    raw = data[rd.pos:rd.pos + n]
    if len(raw) < n:
        raise NetpbmError(f"truncated raster: need {n} bytes, got {len(raw)}", len(data))
    px = np.frombuffer(raw, dtype=np.uint8).reshape(height, width)
    if px.max() > maxval:
        bad = int(np.argmax(px.ravel() > maxval))
        raise NetpbmError(f"pixel value exceeds maxval {maxval}", rd.pos + bad)
    return GrayImage(px.copy(), maxval)


def encode_pbm(img: BinaryImage, plain: bool = False) -> bytes:
    h, w = img.pixels.shape
    if plain:
        rows = [" ".join("1" if b else "0" for b in row) for row in img.pixels]
        return f"P1\n{w} {h}\n".encode() + "\n".join(rows).encode() + b"\n"
    packed = np.packbits(img.pixels.astype(np.uint8), axis=1)
    return f"P4\n{w} {h}\n".encode() + packed.tobytes()


def encode_pgm(img: GrayImage, plain: bool = False) -> bytes:
    h, w = img.pixels.shape
    header = f"{'P2' if plain else 'P5'}\n{w} {h}\n{img.maxval}\n".encode()
    if plain:
        rows = [" ".join(str(int(v)) for v in row) for row in img.pixels]
        return header + "\n".join(rows).encode() + b"\n"
    return header + img.pixels.astype(np.uint8).tobytes()


def encode_label_map(label_map: LabelMap, plain: bool = False) -> bytes:
    """Write labels as PGM gray values (maxval 255)."""
    if label_map.count > 255:
        raise ValueError(f"{label_map.count} labels do not fit an 8-bit PGM")
    return encode_pgm(GrayImage(label_map.labels.astype(np.uint8), 255), plain=plain)


def decode_label_map(data: bytes) -> LabelMap:
    img = decode_image(data)
    if not isinstance(img, GrayImage):
        raise NetpbmError("label map must be a PGM", 0)
    return LabelMap(img.pixels.astype(np.int32))

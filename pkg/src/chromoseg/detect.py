"""Cluster detection: convex-hull, enclosing-ellipse and skeleton criteria.

The three tests run as a cascade (hull, then ellipse, then skeleton).  A
region is reported as a cluster only if it survives all three.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Union

import numpy as np

from .geometry import (convex_hull, count_endpoints, hull_pixel_count,
                       min_enclosing_ellipse, skeletonize)
from .raster import Region

__all__ = [
    "CriteriaReport",
    "Decision",
    "DetectConfig",
    "Thresholds",
    "detect_clusters",
    "ellipse_criterion",
    "ellipse_ratio",
    "hull_criterion",
    "hull_ratio",
    "resolve_thresholds",
    "skeleton_criterion",
]

AUTO = "auto"


@dataclass(frozen=True)
class DetectConfig:
    ellipse_threshold: Union[str, float] = AUTO
    hull_threshold: Union[str, float] = AUTO
    min_components_for_auto: int = 4
    fallback_ellipse_threshold: float = 0.5
    fallback_hull_threshold: float = 0.85
    endpoint_limit: int = 2
    ellipse_tol: float = 1e-6

    def __post_init__(self):
        for name in ("ellipse_threshold", "hull_threshold"):
            v = getattr(self, name)
            if v != AUTO and not 0 < float(v) < 1:
                raise ValueError(f"{name} must be 'auto' or in (0, 1), got {v!r}")
        for name in ("fallback_ellipse_threshold", "fallback_hull_threshold"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must be in (0, 1)")
        if self.endpoint_limit < 2:
            raise ValueError("endpoint_limit must be at least 2")
        if self.min_components_for_auto < 1:
            raise ValueError("min_components_for_auto must be positive")

    def frozen(self, thresholds: "Thresholds") -> "DetectConfig":
        """Copy with both thresholds fixed to already-resolved values."""
        return replace(self, ellipse_threshold=thresholds.ellipse, hull_threshold=thresholds.hull)


class Thresholds(NamedTuple):
    hull: float
    ellipse: float
    source: str  # "auto", "fallback", "fixed" or a mix such as "auto/fixed"


class Decision(NamedTuple):
    keep: bool
    value: float


@dataclass(frozen=True)
class CriteriaReport:
    label: int
    ellipse_ratio: float
    hull_ratio: float
    endpoint_count: Optional[int]
    is_cluster: bool
    eliminated_by: Optional[str]


def hull_ratio(region: Region) -> float:
    """Region pixel count over the lattice-point count of its convex hull."""
    return region.size / hull_pixel_count(convex_hull(region.coords), region.bbox)


def ellipse_ratio(region: Region, tol: float = 1e-6) -> float:
    return min_enclosing_ellipse(region.coords, tol=tol).axis_ratio


def ellipse_criterion(region: Region, threshold: float, tol: float = 1e-6) -> Decision:
    # keep when ratio >= threshold; ties stay candidates
    r = ellipse_ratio(region, tol)
    return Decision(r >= threshold, r)


def hull_criterion(region: Region, threshold: float) -> Decision:
    # convex regions (ratio above threshold) are singles
    r = hull_ratio(region)
    return Decision(r <= threshold, r)


def skeleton_criterion(region: Region, endpoint_limit: int = 2) -> Decision:
    n = count_endpoints(skeletonize(region))
    return Decision(n > endpoint_limit, n)


def _resolve(cfg_value, ratios, fallback, use_auto):
    if cfg_value != AUTO:
        return float(cfg_value), "fixed"
    if use_auto:
        return float(np.mean(ratios)), "auto"
    return fallback, "fallback"


def resolve_thresholds(regions, cfg: DetectConfig, ratios=None) -> Thresholds:
    """Scene-level thresholds: the mean ratio over *all* regions when the scene
    is large enough, otherwise the configured fallbacks."""
    regions = list(regions)
    use_auto = len(regions) >= cfg.min_components_for_auto
    if ratios is None and use_auto and AUTO in (cfg.hull_threshold, cfg.ellipse_threshold):
        ratios = ([hull_ratio(r) for r in regions],
                  [ellipse_ratio(r, cfg.ellipse_tol) for r in regions])
    h_list, e_list = ratios if ratios is not None else ([], [])
    th, sh = _resolve(cfg.hull_threshold, h_list, cfg.fallback_hull_threshold, use_auto)
    te, se = _resolve(cfg.ellipse_threshold, e_list, cfg.fallback_ellipse_threshold, use_auto)
    return Thresholds(th, te, sh if sh == se else f"{sh}/{se}")


def detect_clusters(regions, cfg: DetectConfig = DetectConfig(), thresholds: Thresholds = None,
                    return_thresholds: bool = False):
    """Run the hull -> ellipse -> skeleton cascade on every region.

    Returns one :class:`CriteriaReport` per region, ordered by label.  The
    skeleton is computed only for regions that pass both cheaper tests.
    Pass ``thresholds`` to reuse scene-level values (e.g. on sub-regions).
    """
    regions = sorted(regions, key=lambda r: r.label)
    h_ratios = [hull_ratio(r) for r in regions]
    e_ratios = [ellipse_ratio(r, cfg.ellipse_tol) for r in regions]
    if thresholds is None:
        thresholds = resolve_thresholds(regions, cfg, (h_ratios, e_ratios))

    reports = []
    for region, hr, er in zip(regions, h_ratios, e_ratios):
        n_end = None
        if hr > thresholds.hull:
            stage = "hull"
        elif er < thresholds.ellipse:
            stage = "ellipse"
        else:
            keep, n_end = skeleton_criterion(region, cfg.endpoint_limit)
            n_end = int(n_end)
            stage = None if keep else "skeleton"
        reports.append(CriteriaReport(region.label, float(er), float(hr), n_end,
                                      stage is None, stage))
    if return_thresholds:
        return reports, thresholds
    return reports

"""Geometric detection and separation of touching chromosomes in binary images."""

__version__ = "0.1.0"

from .cutline import SeparatorConfig, VamdConfig, separate_all, separate_cluster
from .detect import DetectConfig, detect_clusters
from .raster import (BinaryImage, GrayImage, LabelMap, Region, decode_image, extract_regions,
                     label_components, otsu_threshold)

__all__ = [
    "BinaryImage",
    "DetectConfig",
    "GrayImage",
    "LabelMap",
    "Region",
    "SeparatorConfig",
    "VamdConfig",
    "decode_image",
    "detect_clusters",
    "extract_regions",
    "label_components",
    "otsu_threshold",
    "separate_all",
    "separate_cluster",
]

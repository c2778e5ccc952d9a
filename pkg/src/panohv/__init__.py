"""Horizontal/vertical plane reconstruction from equirectangular depth panoramas."""

from .labels import InstanceLabelMap
from .panogeom import DepthMap, ImageGrid, PlaneKind, PlaneParam, SphericalCoord

__all__ = ["DepthMap", "ImageGrid", "InstanceLabelMap", "PlaneKind", "PlaneParam", "SphericalCoord"]
__version__ = "0.1.0"

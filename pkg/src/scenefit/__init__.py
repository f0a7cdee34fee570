"""Scene-geometry and numerical-optimization toolkit: oriented boxes and
camera parameterization, density-aware mesh topology modification, loss
kernels with analytic gradients, relation attention, and the full
detection/reconstruction evaluation protocol."""

from .geometry import (CameraIntrinsics, CameraPose, OrientedBox,
                       ProjectedCenter, SceneLayout)
from .losses import BinSpec, LossWeights
from .mesh import Mesh, TargetSurface, icosphere
from .spatial import PointIndex

__all__ = [
    "CameraIntrinsics", "CameraPose", "OrientedBox", "ProjectedCenter",
    "SceneLayout", "BinSpec", "LossWeights", "Mesh", "TargetSurface",
    "icosphere", "PointIndex",
]

__version__ = "0.1.0"

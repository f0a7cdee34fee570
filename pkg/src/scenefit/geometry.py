"""Coordinate frames, camera model and oriented-box parameterization.

World frame: camera-centered, y-axis vertical (perpendicular to the floor),
yaw removed.  The camera pose relative to this frame is a rotation built from
pitch and roll only.  Boxes carry a single orientation angle about the
vertical axis.  Angles are radians everywhere in this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Above this condition number the intrinsic matrix is treated as singular.
COND_LIMIT = 1e12

# Positive lower bound used when clamping distances / sizes elsewhere.
MIN_POSITIVE = 1e-3


class SingularIntrinsicsError(ValueError):
    """Intrinsic matrix is numerically singular."""


class BehindCameraError(ValueError):
    """Point has non-positive camera-frame depth and cannot be projected."""


def wrap_angle(theta):
    """Wrap an angle (or array of angles) into [-pi, pi)."""
    return (np.asarray(theta) + np.pi) % (2.0 * np.pi) - np.pi


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if np.linalg.cond(self.matrix()) > COND_LIMIT:
            raise SingularIntrinsicsError(
                f"intrinsics condition number exceeds {COND_LIMIT:g}")

    def matrix(self):
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def inverse(self):
        return np.array([[1.0 / self.fx, 0.0, -self.cx / self.fx],
                         [0.0, 1.0 / self.fy, -self.cy / self.fy],
                         [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class CameraPose:
    """Pitch/roll of the camera relative to the world frame, radians."""
    pitch_beta: float
    roll_gamma: float

    def __post_init__(self):
        half_pi = math.pi / 2
        if not (-half_pi < self.pitch_beta < half_pi):
            raise ValueError("pitch must lie in (-pi/2, pi/2)")
        if not (-half_pi < self.roll_gamma < half_pi):
            raise ValueError("roll must lie in (-pi/2, pi/2)")


@dataclass(frozen=True)
class ProjectedCenter:
    """Image-plane decomposition of a 3D center: 2D box center + offset,
    plus the metric distance to the camera center."""
    box2d_center: np.ndarray  # (2,) pixels
    offset: np.ndarray        # (2,) pixels
    distance: float           # meters

    def __post_init__(self):
        object.__setattr__(self, "box2d_center",
                           np.asarray(self.box2d_center, dtype=float))
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=float))
        if self.box2d_center.shape != (2,) or self.offset.shape != (2,):
            raise ValueError("center and offset must be 2-vectors")
        if not self.distance > 0:
            raise ValueError("distance must be positive")

    @property
    def center(self):
        """Projection center c = box center + offset."""
        return self.box2d_center + self.offset


@dataclass(frozen=True)
class OrientedBox:
    """Box with 3D center, full extents and a yaw about the vertical axis."""
    center: np.ndarray  # (3,) meters, world frame
    size: np.ndarray    # (3,) meters, full edge lengths
    yaw: float          # radians in [-pi, pi)

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "size", np.asarray(self.size, dtype=float))
        object.__setattr__(self, "yaw", float(wrap_angle(self.yaw)))
        if self.center.shape != (3,) or self.size.shape != (3,):
            raise ValueError("center and size must be 3-vectors")
        if not np.all(self.size > 0):
            raise ValueError("all box extents must be positive")

    def volume(self):
        return float(np.prod(self.size))


@dataclass(frozen=True)
class SceneLayout:
    box: OrientedBox
    camera: CameraPose


def rotation_matrix(beta, gamma):
    """Camera rotation R(beta, gamma) for raw pitch/roll angles."""
    cb, sb = math.cos(beta), math.sin(beta)
    cg, sg = math.cos(gamma), math.sin(gamma)
    return np.array([[cb, -cg * sb, sb * sg],
                     [sb, cb * cg, -cb * sg],
                     [0.0, sg, cg]])


def rotation_from_pose(pose: CameraPose):
    """Camera rotation R(beta, gamma) relative to the world frame."""
    return rotation_matrix(pose.pitch_beta, pose.roll_gamma)


def rotation_jacobians(beta, gamma):
    """dR/dbeta and dR/dgamma for the pose rotation, raw angles."""
    cb, sb = math.cos(beta), math.sin(beta)
    cg, sg = math.cos(gamma), math.sin(gamma)
    dR_db = np.array([[-sb, -cg * cb, cb * sg],
                      [cb, -sb * cg, sb * sg],
                      [0.0, 0.0, 0.0]])
    dR_dg = np.array([[0.0, sg * sb, sb * cg],
                      [0.0, -cb * sg, -cb * cg],
                      [0.0, cg, -sg]])
    return dR_db, dR_dg


def yaw_rotation(theta):
    """Rotation by theta about the world vertical (y) axis."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, 0.0, s],
                     [0.0, 1.0, 0.0],
                     [-s, 0.0, c]])


def yaw_rotation_derivative(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[-s, 0.0, c],
                     [0.0, 0.0, 0.0],
                     [-c, 0.0, -s]])


def center_from_projection(pc: ProjectedCenter, pose: CameraPose,
                           intr: CameraIntrinsics):
    """Recover the world-frame 3D center from its projection decomposition.

    C = R^-1(beta, gamma) * d * Kinv [c, 1]^T / ||Kinv [c, 1]^T||, so that
    ||C|| equals the stored distance.
    """
    ray = intr.inverse() @ np.array([*pc.center, 1.0])
    unit = ray / np.linalg.norm(ray)
    return rotation_from_pose(pose).T @ (pc.distance * unit)


def project_center(C, pose: CameraPose, intr: CameraIntrinsics):
    """Inverse of :func:`center_from_projection` (zero offset).

    Raises :class:`BehindCameraError` when the camera-frame depth of C is
    not positive.
    """
    C = np.asarray(C, dtype=float)
    cam = rotation_from_pose(pose) @ C
    if cam[2] <= 0.0:
        raise BehindCameraError("point does not project in front of the camera")
    pix = intr.matrix() @ (cam / cam[2])
    return ProjectedCenter(box2d_center=pix[:2], offset=np.zeros(2),
                           distance=float(np.linalg.norm(C)))


# Corner ordering: index bit 0 -> x sign, bit 1 -> y sign, bit 2 -> z sign,
# minus first.  Fixed so corner-wise losses are well defined.
CORNER_SIGNS = np.array([[1.0 if (i >> b) & 1 else -1.0 for b in range(3)]
                         for i in range(8)])


def box_corners(box: OrientedBox):
    """The 8 corners of an oriented box as an (8, 3) array, fixed order."""
    offsets = (CORNER_SIGNS * (box.size / 2.0)) @ yaw_rotation(box.yaw).T
    return box.center + offsets


def center_with_jacobian(delta, dist, box2d_center, beta, gamma,
                         intr: CameraIntrinsics):
    """World center from the projection decomposition, with its (3, 5)
    Jacobian w.r.t. (dx, dy, d, beta, gamma)."""
    delta = np.asarray(delta, dtype=float)
    c2d = np.asarray(box2d_center, dtype=float)
    Kinv = intr.inverse()
    ray = Kinv @ np.array([*(c2d + delta), 1.0])
    norm = np.linalg.norm(ray)
    unit = ray / norm
    R = rotation_matrix(beta, gamma)
    C = R.T @ (dist * unit)

    J = np.zeros((3, 5))
    du_dray = (np.eye(3) - np.outer(unit, unit)) / norm
    J[:, 0:2] = R.T @ (dist * du_dray @ Kinv[:, :2])
    J[:, 2] = R.T @ unit
    dR_db, dR_dg = rotation_jacobians(beta, gamma)
    J[:, 3] = dR_db.T @ (dist * unit)
    J[:, 4] = dR_dg.T @ (dist * unit)
    return C, J


def box_world_corners(delta, dist, size, yaw, box2d_center,
                      pose: CameraPose, intr: CameraIntrinsics,
                      with_jacobian=False):
    """World-frame corners of a detection parameterized by (delta, d, s, theta).

    The 3D center comes from the projection decomposition; corners follow the
    fixed ordering of :func:`box_corners`.  With ``with_jacobian`` the (8, 3, 9)
    Jacobian with respect to (dx, dy, d, sx, sy, sz, theta, beta, gamma) is
    returned as well.
    """
    size = np.asarray(size, dtype=float)
    C, JC = center_with_jacobian(delta, dist, box2d_center,
                                 pose.pitch_beta, pose.roll_gamma, intr)
    Ry = yaw_rotation(yaw)
    half = CORNER_SIGNS * (size / 2.0)
    corners = C + half @ Ry.T
    if not with_jacobian:
        return corners

    J = np.zeros((8, 3, 9))
    # Center block: shared by all corners.
    J[:, :, 0:3] = JC[:, 0:3]
    J[:, :, 7] = JC[:, 3]
    J[:, :, 8] = JC[:, 4]
    # Size and yaw act on the corner offsets only.
    for j in range(3):
        J[:, :, 3 + j] = np.outer(CORNER_SIGNS[:, j] * 0.5, Ry[:, j])
    J[:, :, 6] = half @ yaw_rotation_derivative(yaw).T
    return corners, J


def boxes_world_from_params(detections, pose: CameraPose,
                            intr: CameraIntrinsics, with_jacobian=False):
    """Per-detection world corner sets for (delta, d, size, yaw) tuples.

    Each detection is a mapping with keys ``box2d_center``, ``delta``, ``d``,
    ``size`` and ``yaw``.
    """
    out = []
    for det in detections:
        out.append(box_world_corners(det["delta"], det["d"], det["size"],
                                     det["yaw"], det["box2d_center"],
                                     pose, intr, with_jacobian=with_jacobian))
    return out

"""Evaluation protocol: exact yaw-box 3D IoU, detection AP, pose and camera
errors, surface sampling, ICP alignment and mesh Chamfer evaluation.

Yaw-only boxes make the 3D IoU exact: the problem factors into a 2D convex
polygon intersection in the horizontal plane times the vertical overlap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import OrientedBox, wrap_angle
from .losses import chamfer
from .mesh import Mesh
from .spatial import PointIndex

DEFAULT_IOU_THRESHOLD = 0.15


@dataclass(frozen=True)
class DetectionRecord:
    box: OrientedBox
    label: str
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")


@dataclass(frozen=True)
class PoseError:
    translation: float  # meters
    rotation: float     # degrees
    scale: float        # dimensionless


def _footprint(box: OrientedBox):
    """Horizontal (x, z) rectangle corners of a yaw box, counterclockwise."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    hx, hz = box.size[0] / 2.0, box.size[2] / 2.0
    local = np.array([[-hx, -hz], [hx, -hz], [hx, hz], [-hx, hz]])
    # Rows of the y-axis rotation restricted to (x, z): (x, z) -> (cx + sz,
    # -sx + cz).
    rot = np.array([[c, s], [-s, c]])
    return local @ rot.T + np.array([box.center[0], box.center[2]])


def _clip_polygon(poly, a, b):
    """Keep the part of a convex polygon on the inner side of edge a->b."""
    edge = b - a
    out = []
    n = len(poly)

    def cross2(u, v):
        return u[0] * v[1] - u[1] * v[0]

    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        side_p = cross2(edge, p - a)
        side_q = cross2(edge, q - a)
        if side_p >= 0:
            out.append(p)
        if (side_p >= 0) != (side_q >= 0):
            t = side_p / (side_p - side_q)
            out.append(p + t * (q - p))
    return out


def _polygon_area(poly):
    if len(poly) < 3:
        return 0.0
    p = np.asarray(poly)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def iou3d(a: OrientedBox, b: OrientedBox):
    """Exact 3D IoU for yaw-only boxes via half-plane clipping."""
    y_lo = max(a.center[1] - a.size[1] / 2, b.center[1] - b.size[1] / 2)
    y_hi = min(a.center[1] + a.size[1] / 2, b.center[1] + b.size[1] / 2)
    overlap = y_hi - y_lo
    if overlap <= 0:
        return 0.0
    poly = list(_footprint(a))
    clip = _footprint(b)
    for i in range(4):
        poly = _clip_polygon(poly, clip[i], clip[(i + 1) % 4])
        if not poly:
            return 0.0
    inter = _polygon_area(poly) * overlap
    union = a.volume() + b.volume() - inter
    return float(inter / union)


def iou3d_monte_carlo(a: OrientedBox, b: OrientedBox, n_samples=1_000_000,
                      seed=0):
    """Monte-Carlo reference IoU: uniform samples in box a tested against b."""
    rng = np.random.default_rng(seed)
    local = (rng.random((n_samples, 3)) - 0.5) * a.size
    c, s = math.cos(a.yaw), math.sin(a.yaw)
    ry = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    pts = local @ ry.T + a.center
    # Into b's local frame.
    cb, sb = math.cos(b.yaw), math.sin(b.yaw)
    ryb = np.array([[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]])
    loc = (pts - b.center) @ ryb
    inside = np.all(np.abs(loc) <= b.size / 2.0, axis=1)
    inter = inside.mean() * a.volume()
    union = a.volume() + b.volume() - inter
    return float(inter / union)


def average_precision(detections, gt, iou_threshold=DEFAULT_IOU_THRESHOLD):
    """Per-class AP and mAP with a 3D IoU true-positive threshold.

    ``detections``: DetectionRecord list; ``gt``: (OrientedBox, label) pairs.
    Detections sort by confidence descending (input order on ties) and match
    greedily to the unmatched GT of their class with the highest IoU above the
    threshold.  AP uses all-point interpolation; classes without GT are
    excluded from the mean.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError("iou_threshold must lie in (0, 1)")
    classes = sorted({label for _, label in gt})
    per_class = {}
    for cls in classes:
        gt_boxes = [box for box, label in gt if label == cls]
        dets = [d for d in detections if d.label == cls]
        order = sorted(range(len(dets)), key=lambda i: -dets[i].confidence)
        matched = [False] * len(gt_boxes)
        tp = np.zeros(len(order))
        fp = np.zeros(len(order))
        for rank, i in enumerate(order):
            best_iou, best_j = 0.0, -1
            for j, gbox in enumerate(gt_boxes):
                if matched[j]:
                    continue
                v = iou3d(dets[i].box, gbox)
                if v > best_iou:
                    best_iou, best_j = v, j
            if best_j >= 0 and best_iou > iou_threshold:
                matched[best_j] = True
                tp[rank] = 1.0
            else:
                fp[rank] = 1.0
        per_class[cls] = _ap_from_counts(tp, fp, len(gt_boxes))
    with_gt = [v for v in per_class.values() if v is not None]
    mAP = float(np.mean(with_gt)) if with_gt else 0.0
    return per_class, mAP


def _ap_from_counts(tp, fp, n_gt):
    if n_gt == 0:
        return None
    if len(tp) == 0:
        return 0.0
    ctp, cfp = np.cumsum(tp), np.cumsum(fp)
    recall = ctp / n_gt
    precision = ctp / (ctp + cfp)
    # All-point interpolation: monotone non-increasing precision envelope.
    r = np.concatenate([[0.0], recall, [recall[-1]]])
    p = np.concatenate([[1.0], precision, [0.0]])
    for i in range(len(p) - 2, -1, -1):
        p[i] = max(p[i], p[i + 1])
    idx = np.nonzero(r[1:] != r[:-1])[0]
    return float(np.sum((r[idx + 1] - r[idx]) * p[idx + 1]))


def pose_errors(pred: OrientedBox, gt: OrientedBox):
    """Translation (m), yaw geodesic angle (deg) and mean absolute relative
    size deviation between two boxes."""
    translation = float(np.linalg.norm(pred.center - gt.center))
    rotation = float(abs(wrap_angle(pred.yaw - gt.yaw)) * 180.0 / math.pi)
    scale = float(np.mean(np.abs(pred.size / gt.size - 1.0)))
    return PoseError(translation, rotation, scale)


def camera_mae(pred_poses, gt_poses):
    """Mean absolute wrapped pitch/roll differences, in degrees."""
    if len(pred_poses) != len(gt_poses):
        raise ValueError("pose lists must have equal length")
    pitch = [abs(wrap_angle(p.pitch_beta - g.pitch_beta))
             for p, g in zip(pred_poses, gt_poses)]
    roll = [abs(wrap_angle(p.roll_gamma - g.roll_gamma))
            for p, g in zip(pred_poses, gt_poses)]
    deg = 180.0 / math.pi
    return float(np.mean(pitch) * deg), float(np.mean(roll) * deg)


def sample_surface(mesh: Mesh, n_points=10_000, seed=0):
    """Area-weighted uniform surface samples, deterministic per seed."""
    if mesh.is_empty:
        raise ValueError("cannot sample an empty mesh")
    v = mesh.vertices
    f = mesh.faces
    cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    areas = 0.5 * np.linalg.norm(cross, axis=1)
    total = areas.sum()
    if total <= 0.0:
        raise ValueError("mesh has zero total surface area")
    rng = np.random.default_rng(seed)
    faces = rng.choice(len(f), size=n_points, p=areas / total)
    u = rng.random(n_points)
    w = rng.random(n_points)
    flip = u + w > 1.0
    u[flip] = 1.0 - u[flip]
    w[flip] = 1.0 - w[flip]
    a, b, c = v[f[faces, 0]], v[f[faces, 1]], v[f[faces, 2]]
    return a + u[:, None] * (b - a) + w[:, None] * (c - a)


@dataclass(frozen=True)
class Transform:
    """Similarity (or rigid, scale=1) transform x -> scale * R x + t."""
    rotation: np.ndarray
    translation: np.ndarray
    scale: float = 1.0

    def apply(self, points):
        return self.scale * np.asarray(points, float) @ self.rotation.T \
            + self.translation


def _umeyama(src, tgt, with_scale):
    """Closed-form least-squares alignment of paired point sets."""
    mu_s = src.mean(axis=0)
    mu_t = tgt.mean(axis=0)
    sc = src - mu_s
    tc = tgt - mu_t
    H = sc.T @ tc / len(src)
    U, S, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    D = np.diag([1.0, 1.0, d])
    R = Vt.T @ D @ U.T
    if with_scale:
        var_s = np.mean(np.sum(sc ** 2, axis=1))
        scale = float(np.trace(np.diag(S) @ D) / var_s)
    else:
        scale = 1.0
    t = mu_t - scale * R @ mu_s
    return Transform(R, t, scale)


def _principal_axes(points):
    centered = points - points.mean(axis=0)
    cov = centered.T @ centered / len(points)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    return evals[order], evecs[:, order]


def icp_align(source, target, max_iters=50, tol=1e-12, with_scale=False,
              init="pca"):
    """Iterative closest point: NN correspondence alternating with
    closed-form rigid (or similarity) alignment.

    ``init='pca'`` seeds the rotation by matching principal axes (trying the
    four proper sign assignments), which recovers large rotations; ``init=
    'identity'`` starts from centroid alignment only.  Returns
    (Transform, final_rms, rms_trace); the trace is non-increasing.
    """
    src = np.asarray(source, dtype=float).reshape(-1, 3)
    tgt = np.asarray(target, dtype=float).reshape(-1, 3)
    if len(src) < 3 or len(tgt) < 3:
        raise ValueError("need at least 3 points in each set")
    ev_s, ax_s = _principal_axes(src)
    ev_t, ax_t = _principal_axes(tgt)
    if ev_s[1] <= 1e-12 * max(ev_s[0], 1.0) or \
            ev_t[1] <= 1e-12 * max(ev_t[0], 1.0):
        raise ValueError("degenerate (collinear) point configuration")

    index = PointIndex(tgt)
    mu_s, mu_t = src.mean(axis=0), tgt.mean(axis=0)

    def rms_of(transform):
        _, d = index.nearest(transform.apply(src))
        return float(np.sqrt(np.mean(d ** 2)))

    s0 = float(np.sqrt(ev_t.sum() / ev_s.sum())) if with_scale else 1.0
    candidates = []
    if init == "pca":
        for sx in (1.0, -1.0):
            for sy in (1.0, -1.0):
                signs = np.array([sx, sy, sx * sy])  # keep det = +1
                R = ax_t @ np.diag(signs) @ ax_s.T
                if np.linalg.det(R) < 0:
                    R = ax_t @ np.diag(-signs) @ ax_s.T
                candidates.append(Transform(R, mu_t - s0 * (R @ mu_s), s0))
    candidates.append(Transform(np.eye(3), mu_t - s0 * mu_s, s0))
    current = min(candidates, key=rms_of)

    trace = [rms_of(current)]
    for _ in range(max_iters):
        moved = current.apply(src)
        idx, _ = index.nearest(moved)
        step = _umeyama(src, tgt[idx], with_scale)
        candidate_rms = rms_of(step)
        if candidate_rms > trace[-1]:
            break
        current = step
        trace.append(candidate_rms)
        if len(trace) >= 2 and trace[-2] - trace[-1] <= tol * max(trace[-2],
                                                                  1e-30):
            break
    return current, trace[-1], trace


def eval_mesh_chamfer(pred_mesh: Mesh, gt_points, n_samples=10_000, seed=0,
                      with_scale=False):
    """Sample the predicted mesh, align to the ground truth with ICP, and
    report the symmetric Chamfer value."""
    samples = sample_surface(pred_mesh, n_points=n_samples, seed=seed)
    transform, _, _ = icp_align(samples, gt_points, with_scale=with_scale)
    value, _ = chamfer(transform.apply(samples), gt_points)
    return float(value)

"""Loss kernels with values and analytic gradients.

Every gradient is taken with nearest-neighbor assignments held fixed
(lowest-index tie-break), which selects a deterministic subgradient at
assignment boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh, boundary_vertex_neighbors
from .spatial import PointIndex

BCE_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    """Balance coefficients for the joint objective.

    lambda_x applies to each box parameter term (delta, d, s, theta) and
    lambda_y to each layout/camera term (beta, gamma, C, s_l, theta_l).
    """
    lambda_r: float = 10.0
    lambda_x: float = 1.0
    lambda_y: float = 1.0
    lambda_c: float = 100.0
    lambda_e: float = 10.0
    lambda_b: float = 50.0
    lambda_ce: float = 0.01
    lambda_co: float = 10.0
    lambda_g: float = 100.0

    def for_term(self, name):
        box_terms = {"delta", "d", "s", "theta"}
        layout_terms = {"beta", "gamma", "C", "s_l", "theta_l"}
        if name in box_terms:
            return self.lambda_x
        if name in layout_terms:
            return self.lambda_y
        mapping = {"c": self.lambda_c, "e": self.lambda_e, "b": self.lambda_b,
                   "ce": self.lambda_ce, "co": self.lambda_co,
                   "g": self.lambda_g}
        if name not in mapping:
            raise KeyError(f"unknown loss term {name!r}")
        return mapping[name]


@dataclass(frozen=True)
class BinSpec:
    """Discretization of a scalar parameter for classification+regression."""
    edges: np.ndarray  # strictly increasing, len = bins + 1

    def __post_init__(self):
        object.__setattr__(self, "edges", np.asarray(self.edges, dtype=float))
        if self.edges.ndim != 1 or len(self.edges) < 2:
            raise ValueError("need at least two bin edges")
        if not np.all(np.diff(self.edges) > 0):
            raise ValueError("bin edges must be strictly increasing")

    @classmethod
    def uniform(cls, lo, hi, bins):
        return cls(np.linspace(lo, hi, bins + 1))

    @property
    def n_bins(self):
        return len(self.edges) - 1

    @property
    def centers(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def widths(self):
        return np.diff(self.edges)

    def bin_of(self, value):
        if not (self.edges[0] <= value < self.edges[-1]):
            raise ValueError(
                f"value {value} outside bin range "
                f"[{self.edges[0]}, {self.edges[-1]})")
        return int(np.searchsorted(self.edges, value, side="right")) - 1


def chamfer(pred_points, gt_points):
    """Symmetric squared-distance Chamfer with per-set means.

    Returns (value, gradient w.r.t. pred_points).
    """
    p = np.asarray(pred_points, dtype=float).reshape(-1, 3)
    g = np.asarray(gt_points, dtype=float).reshape(-1, 3)
    if len(p) == 0 or len(g) == 0:
        raise ValueError("chamfer needs two non-empty point sets")
    gi, gd = PointIndex(g).nearest(p)
    pi, pd = PointIndex(p).nearest(g)
    value = float(np.mean(gd ** 2) + np.mean(pd ** 2))
    grad = 2.0 * (p - g[gi]) / len(p)
    np.add.at(grad, pi, 2.0 * (p[pi] - g) / len(g))
    return value, grad


def partial_chamfer(objects):
    """One-directional scene-to-mesh squared-distance average.

    ``objects`` is a list of (mesh_points M_i, scene_points S_i) pairs.
    Returns (value, list of gradients w.r.t. each M_i).
    """
    if len(objects) == 0:
        raise ValueError("need at least one object")
    n = len(objects)
    value = 0.0
    grads = []
    for m_pts, s_pts in objects:
        m = np.asarray(m_pts, dtype=float).reshape(-1, 3)
        s = np.asarray(s_pts, dtype=float).reshape(-1, 3)
        if len(m) == 0 or len(s) == 0:
            raise ValueError("empty mesh or scene point set")
        mi, md = PointIndex(m).nearest(s)
        value += np.mean(md ** 2) / n
        grad = np.zeros_like(m)
        np.add.at(grad, mi, 2.0 * (m[mi] - s) / (n * len(s)))
        grads.append(grad)
    return float(value), grads


def edge_loss(mesh: Mesh):
    """Mean squared edge length; gradient w.r.t. vertices."""
    edges = mesh.edges
    if len(edges) == 0:
        raise ValueError("mesh has no edges")
    d = mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]]
    value = float(np.mean(np.sum(d ** 2, axis=1)))
    grad = np.zeros_like(mesh.vertices)
    np.add.at(grad, edges[:, 0], 2.0 * d / len(edges))
    np.add.at(grad, edges[:, 1], -2.0 * d / len(edges))
    return value, grad


def boundary_loss(mesh: Mesh):
    """Mean squared boundary Laplacian: vertex minus the midpoint of its two
    boundary neighbors.  Zero (with zero gradient) for closed meshes."""
    nbrs = boundary_vertex_neighbors(mesh)
    grad = np.zeros_like(mesh.vertices)
    if not nbrs:
        return 0.0, grad
    ids = np.array(sorted(nbrs))
    n1 = np.array([nbrs[v][0] for v in ids])
    n2 = np.array([nbrs[v][1] for v in ids])
    v = mesh.vertices
    r = v[ids] - 0.5 * (v[n1] + v[n2])
    m = len(ids)
    value = float(np.mean(np.sum(r ** 2, axis=1)))
    np.add.at(grad, ids, 2.0 * r / m)
    np.add.at(grad, n1, -r / m)
    np.add.at(grad, n2, -r / m)
    return value, grad


def binary_cross_entropy(pred_scores, labels):
    """Mean binary cross-entropy; scores clamped away from {0, 1}."""
    s = np.asarray(pred_scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    if s.shape != y.shape:
        raise ValueError("scores and labels must have the same length")
    s = np.clip(s, BCE_EPS, 1.0 - BCE_EPS)
    value = float(np.mean(-(y * np.log(s) + (1.0 - y) * np.log(1.0 - s))))
    grad = (s - y) / (s * (1.0 - s)) / s.size
    return value, grad


def softmax(z):
    e = np.exp(z - np.max(z))
    return e / e.sum()


def cls_reg_loss(logits, residual_pred, gt_value, bins: BinSpec,
                 lambda_r=10.0, wrap=False):
    """Softmax classification over bins plus weighted offset regression.

    The regression target is the normalized offset of gt_value inside its bin:
    (gt - bin center) / bin width.  Returns (value, grad_logits,
    grad_residual).
    """
    logits = np.asarray(logits, dtype=float)
    residual_pred = np.asarray(residual_pred, dtype=float)
    if logits.shape != (bins.n_bins,) or residual_pred.shape != (bins.n_bins,):
        raise ValueError("heads must have one entry per bin")
    from .geometry import wrap_angle
    gt = float(wrap_angle(gt_value)) if wrap else float(gt_value)
    b = bins.bin_of(gt)
    t = (gt - bins.centers[b]) / bins.widths[b]

    prob = softmax(logits)
    cls_value = -np.log(max(prob[b], 1e-300))
    grad_logits = prob.copy()
    grad_logits[b] -= 1.0

    resid = residual_pred[b] - t
    value = float(cls_value + lambda_r * resid ** 2)
    grad_residual = np.zeros_like(residual_pred)
    grad_residual[b] = 2.0 * lambda_r * resid
    return value, grad_logits, grad_residual


def cooperative_loss(pred_corners, gt_corners):
    """Mean squared world-frame corner error over matched box lists.

    Corners follow the fixed box-corner ordering; inputs are (B, 8, 3).
    Returns (value, gradient w.r.t. pred corners).
    """
    p = np.asarray(pred_corners, dtype=float)
    g = np.asarray(gt_corners, dtype=float)
    if p.shape != g.shape:
        raise ValueError("pred and gt corner sets must match in shape")
    if p.ndim == 2:
        p, g = p[None], g[None]
    r = p - g
    n = p.shape[0] * p.shape[1]
    value = float(np.sum(r ** 2) / n)
    return value, 2.0 * r / n


JOINT_TERMS = ("delta", "d", "s", "theta",
               "beta", "gamma", "C", "s_l", "theta_l",
               "c", "e", "b", "ce", "co", "g")


def joint_loss(terms, weights: LossWeights, required=()):
    """Weighted sum of loss terms per the joint objective.

    ``terms`` maps term names (see JOINT_TERMS) to scalar values.  Returns
    (total, breakdown) where breakdown holds each weighted contribution.
    """
    missing = [name for name in required if name not in terms]
    if missing:
        raise ValueError(f"missing required loss terms: {', '.join(missing)}")
    unknown = [name for name in terms if name not in JOINT_TERMS]
    if unknown:
        raise ValueError(f"unknown loss terms: {', '.join(unknown)}")
    breakdown = {name: weights.for_term(name) * float(value)
                 for name, value in terms.items()}
    return float(sum(breakdown.values())), breakdown


def default_bins():
    """Default discretizations: angles over their ranges, distance over
    (0, 12] m, 8 uniform bins each."""
    return {
        "theta": BinSpec.uniform(-np.pi, np.pi, 8),
        "theta_l": BinSpec.uniform(-np.pi, np.pi, 8),
        "beta": BinSpec.uniform(-np.pi / 2, np.pi / 2, 8),
        "gamma": BinSpec.uniform(-np.pi / 2, np.pi / 2, 8),
        "d": BinSpec.uniform(0.0, 12.0, 8),
    }

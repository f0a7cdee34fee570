"""Desk-scale optimization stand-ins for the learned networks.

``fit_template`` deforms the template sphere onto a target point cloud by
direct vertex gradient descent, then modifies the topology with the
density-aware edge cutter.  ``refine_scene`` jointly adjusts per-object box
parameters and the camera pose against scene point clouds.
Both use backtracking line search, so loss traces are monotone non-increasing
by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry
from .geometry import (CameraIntrinsics, CameraPose, OrientedBox,
                       box_corners, center_with_jacobian, wrap_angle,
                       yaw_rotation, yaw_rotation_derivative)
from .losses import LossWeights, boundary_loss, chamfer, cooperative_loss, edge_loss
from .mesh import (EdgeScoreReport, Mesh, TargetSurface, cut_edges, icosphere,
                   refine_boundary, score_edges, subdivide)
from .spatial import PointIndex

PARAM_FLOOR = geometry.MIN_POSITIVE  # lower clamp for d and s during descent
POSE_MARGIN = 1e-6                    # keeps pitch/roll inside (-pi/2, pi/2)


class NonFiniteLossError(RuntimeError):
    def __init__(self, iteration):
        super().__init__(f"loss became non-finite at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class FitConfig:
    max_iters: int = 400
    step: float = 1e-3
    backtrack: float = 0.5
    tolerance: float = 1e-8
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    subdivisions: int = 4
    samples_per_edge: int = 5
    edge_sampling: str = "uniform"
    cut_threshold: float = 0.2
    refine_iterations: int = 3
    refine_step: float = 0.5
    target_knn: int = 10

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


@dataclass
class SceneObject:
    """One detection: 2D box, class, box parameters, supervision cloud."""
    label: str
    box2d_center: np.ndarray  # (2,) pixels
    box2d_size: np.ndarray    # (w, h) pixels
    delta: np.ndarray         # (2,) pixels
    d: float                  # meters
    size: np.ndarray          # (3,) meters
    yaw: float                # radians
    cloud: np.ndarray = None  # (n, 3) world-frame points, may be None
    confidence: float = 1.0
    mesh: Mesh = None

    def __post_init__(self):
        self.box2d_center = np.asarray(self.box2d_center, dtype=float)
        self.box2d_size = np.asarray(self.box2d_size, dtype=float)
        self.delta = np.asarray(self.delta, dtype=float)
        self.size = np.asarray(self.size, dtype=float)
        if self.cloud is not None:
            self.cloud = np.asarray(self.cloud, dtype=float).reshape(-1, 3)

    def oriented_box(self, camera: CameraPose, intr: CameraIntrinsics):
        C, _ = center_with_jacobian(self.delta, self.d, self.box2d_center,
                                    camera.pitch_beta, camera.roll_gamma, intr)
        return OrientedBox(C, self.size, self.yaw)


@dataclass
class SceneSample:
    objects: list
    layout: OrientedBox
    camera: CameraPose
    intrinsics: CameraIntrinsics
    scene_id: str = "scene"


def minimize(x0, fn, config: FitConfig, on_accept=None):
    """Steepest descent with backtracking line search on the raw loss.

    ``fn(x) -> (value, grad)``.  Only strict decreases are accepted, so the
    returned trace is monotone non-increasing.  ``on_accept(iteration, value)``
    fires once per accepted point (including the start), right after the
    accepted evaluation of ``fn``.
    """
    return minimize_projected(x0, fn, config, project=lambda x: x,
                              on_accept=on_accept)


def minimize_projected(x0, fn, config: FitConfig, project, on_accept=None):
    x = project(np.asarray(x0, dtype=float).copy())
    value, grad = fn(x)
    if not np.isfinite(value):
        raise NonFiniteLossError(0)
    if on_accept is not None:
        on_accept(0, value)
    trace = [value]
    step = config.step
    converged = False
    for it in range(1, config.max_iters + 1):
        gg = float(np.sum(grad * grad))
        if gg == 0.0:
            converged = True
            break
        accepted = False
        t = step
        for _ in range(40):
            cand = project(x - t * grad)
            cand_value, cand_grad = fn(cand)
            if not np.isfinite(cand_value):
                raise NonFiniteLossError(it)
            if cand_value < value - 1e-4 * t * gg:
                accepted = True
                break
            t *= config.backtrack
        if not accepted:
            converged = True
            break
        rel_drop = (value - cand_value) / max(abs(value), 1e-30)
        x, value, grad = cand, cand_value, cand_grad
        if on_accept is not None:
            on_accept(it, value)
        trace.append(value)
        step = min(t / config.backtrack, config.step * 1e3)
        if rel_drop < config.tolerance:
            converged = True
            break
    return x, trace, converged


@dataclass
class TemplateFitResult:
    mesh: Mesh
    trace: list          # rows: (iteration, total, chamfer, edge, boundary)
    converged: bool
    edge_report: EdgeScoreReport
    n_cut_edges: int


def fit_template(target_points, config: FitConfig = FitConfig()):
    """Deform the template sphere onto a target cloud, then cut and refine.

    Stage 1: gradient descent on vertex positions minimizing the weighted
    chamfer + edge + boundary objective.  Stage 2: density-aware edge scoring
    and cutting.  Stage 3: boundary smoothing.
    """
    target = np.asarray(target_points, dtype=float).reshape(-1, 3)
    if len(target) < 10:
        raise ValueError("need at least 10 target points")
    w = config.weights

    level = max(0, config.subdivisions - 2)
    template = icosphere(level)
    centroid = target.mean(axis=0)
    radius = float(np.max(np.linalg.norm(target - centroid, axis=1)))
    current = template.with_vertices(template.vertices * max(radius, PARAM_FLOOR)
                                     + centroid)

    terms = {}

    def make_objective(base: Mesh):
        def objective(x):
            verts = x.reshape(-1, 3)
            m = base.with_vertices(verts)
            c_val, c_grad = chamfer(verts, target)
            e_val, e_grad = edge_loss(m)
            b_val, b_grad = boundary_loss(m)
            terms["c"], terms["e"], terms["b"] = c_val, e_val, b_val
            total = w.lambda_c * c_val + w.lambda_e * e_val + w.lambda_b * b_val
            grad = w.lambda_c * c_grad + w.lambda_e * e_grad + w.lambda_b * b_grad
            return total, grad.ravel()
        return objective

    rows = []

    def on_accept(it, total):
        rows.append((it, total, terms["c"], terms["e"], terms["b"]))

    # Coarse-to-fine: optimize at a low resolution first, then subdivide the
    # deformed mesh and re-optimize.  The warm starts keep the fine mesh out of
    # fold-heavy local minima.  Only the final, full-resolution stage is
    # recorded in the trace.
    while True:
        final = level == config.subdivisions
        x, _, converged = minimize(
            current.vertices.ravel(), make_objective(current), config,
            on_accept=on_accept if final else None)
        deformed = current.with_vertices(x.reshape(-1, 3))
        if final:
            break
        current = subdivide(deformed)
        level += 1

    surface = TargetSurface.from_point_cloud(target, k=config.target_knn)
    report = score_edges(deformed, surface,
                         samples_per_edge=config.samples_per_edge,
                         sampling=config.edge_sampling, seed=config.seed)
    n_cut = int(np.count_nonzero(report.cut_mask(config.cut_threshold)))
    modified = cut_edges(deformed, report, threshold=config.cut_threshold)
    refined = refine_boundary(modified, iterations=config.refine_iterations,
                              step=config.refine_step)
    return TemplateFitResult(refined, rows, converged, report, n_cut)


def normalize_to_unit_box(mesh: Mesh):
    """Map a mesh into the tight, origin-centered unit bounding cube
    (per-axis scaling)."""
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    extent = hi - lo
    if np.any(extent <= 0.0):
        raise ValueError("mesh bounding box degenerate (zero extent)")
    verts = (mesh.vertices - 0.5 * (lo + hi)) / extent
    return mesh.with_vertices(verts)


def place_mesh(mesh: Mesh, size, yaw, center):
    """Scale a unit-box-normalized mesh by the box extents, rotate by yaw and
    translate to the box center."""
    verts = (np.asarray(size, float) * mesh.vertices) @ yaw_rotation(yaw).T \
        + np.asarray(center, float)
    return mesh.with_vertices(verts)


def layout_box_mesh(box: OrientedBox):
    """The layout box as a triangulated box mesh over its 8 corners."""
    corners = box_corners(box)
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1),
             (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    faces = []
    for a, b, c, d in quads:
        faces += [(a, b, c), (a, c, d)]
    return Mesh(corners, np.array(faces))


def assemble(scene: SceneSample, meshes):
    """Place per-object meshes into their boxes in the world frame.

    Returns (list of world-frame object meshes, layout box mesh).  Meshes are
    first normalized to the tight unit bounding cube.
    """
    if len(meshes) != len(scene.objects):
        raise ValueError("need exactly one mesh per object")
    placed = []
    for obj, mesh in zip(scene.objects, meshes):
        unit = normalize_to_unit_box(mesh)
        box = obj.oriented_box(scene.camera, scene.intrinsics)
        placed.append(place_mesh(unit, box.size, box.yaw, box.center))
    return placed, layout_box_mesh(scene.layout)


@dataclass
class SceneRefineResult:
    objects: list        # refined (delta, d, size, yaw) per object
    camera: CameraPose
    trace: list          # rows: (iteration, total, L_g, L_co)
    converged: bool
    initial_lg: float
    final_lg: float


def refine_scene(scene: SceneSample, meshes, config: FitConfig = FitConfig(),
                 gt_corners=None):
    """Gradient descent on all box parameters and the camera pose.

    Minimizes lambda_g * (scene-to-mesh partial chamfer) plus, when
    ``gt_corners`` (B, 8, 3) is given, lambda_co * (corner consistency).
    Parameters stay inside their invariants: yaw wrapped, d and sizes clamped
    positive, pose angles inside (-pi/2, pi/2).
    """
    n_obj = len(scene.objects)
    if len(meshes) != n_obj:
        raise ValueError("need exactly one mesh per object")
    for obj in scene.objects:
        if obj.cloud is None or len(obj.cloud) == 0:
            raise ValueError(f"object {obj.label!r} has no scene points")
    unit_meshes = [normalize_to_unit_box(m) for m in meshes]
    w = config.weights
    intr = scene.intrinsics
    if gt_corners is not None:
        gt_corners = np.asarray(gt_corners, dtype=float)
        if gt_corners.shape != (n_obj, 8, 3):
            raise ValueError("gt_corners must be (n_objects, 8, 3)")

    def pack():
        xs = []
        for obj in scene.objects:
            xs += [*obj.delta, obj.d, *obj.size, obj.yaw]
        xs += [scene.camera.pitch_beta, scene.camera.roll_gamma]
        return np.array(xs)

    def unpack(x):
        params = []
        for i in range(n_obj):
            base = 7 * i
            params.append((x[base:base + 2], x[base + 2],
                           x[base + 3:base + 6], x[base + 6]))
        return params, x[-2], x[-1]

    def project(x):
        x = x.copy()
        for i in range(n_obj):
            base = 7 * i
            x[base + 2] = max(x[base + 2], PARAM_FLOOR)
            x[base + 3:base + 6] = np.maximum(x[base + 3:base + 6],
                                              PARAM_FLOOR)
            x[base + 6] = wrap_angle(x[base + 6])
        lim = math.pi / 2 - POSE_MARGIN
        x[-2] = min(max(x[-2], -lim), lim)
        x[-1] = min(max(x[-1], -lim), lim)
        return x

    lg_holder = {}

    def objective(x):
        params, beta, gamma = unpack(x)
        pose = CameraPose(beta, gamma)
        grad = np.zeros_like(x)
        lg_total = 0.0
        co_total = 0.0
        for i, ((delta, d, size, yaw), obj, unit) in enumerate(
                zip(params, scene.objects, unit_meshes)):
            base = 7 * i
            C, JC = center_with_jacobian(delta, d, obj.box2d_center,
                                         beta, gamma, intr)
            Ry = yaw_rotation(yaw)
            scaled = size * unit.vertices
            world = scaled @ Ry.T + C
            cloud = obj.cloud
            idx, dist = PointIndex(world).nearest(cloud)
            weight = 1.0 / (n_obj * len(cloud))
            lg_total += weight * float(np.sum(dist ** 2))
            gw = np.zeros_like(world)
            np.add.at(gw, idx, 2.0 * weight * (world[idx] - cloud))
            gw *= w.lambda_g

            # Chain to (delta, d, beta, gamma) through the shared center.
            g_center = gw.sum(axis=0)
            grad[base:base + 2] += g_center @ JC[:, 0:2]
            grad[base + 2] += g_center @ JC[:, 2]
            grad[-2] += g_center @ JC[:, 3]
            grad[-1] += g_center @ JC[:, 4]
            # Size and yaw act through the local offsets.
            for j in range(3):
                grad[base + 3 + j] += float((gw @ Ry[:, j])
                                            @ unit.vertices[:, j])
            dRy = yaw_rotation_derivative(yaw)
            grad[base + 6] += float(np.sum(gw * (scaled @ dRy.T)))

            if gt_corners is not None:
                corners, J = geometry.box_world_corners(
                    delta, d, size, yaw, obj.box2d_center, pose, intr,
                    with_jacobian=True)
                co_val, co_grad = cooperative_loss(corners[None],
                                                   gt_corners[i][None])
                co_total += co_val
                gp = np.einsum("kc,kcp->p", co_grad[0], J) * w.lambda_co
                grad[base:base + 7] += gp[0:7]
                grad[-2] += gp[7]
                grad[-1] += gp[8]

        lg_holder["lg"] = lg_total
        lg_holder["co"] = co_total
        total = w.lambda_g * lg_total + w.lambda_co * co_total
        return total, grad

    rows = []

    def on_accept(it, total):
        rows.append((it, total, lg_holder["lg"], lg_holder["co"]))

    x0 = pack()
    objective(project(x0))
    initial_lg = lg_holder["lg"]

    x, _, converged = minimize_projected(x0, objective, config, project,
                                         on_accept=on_accept)
    final_lg = rows[-1][2]

    params, beta, gamma = unpack(x)
    refined = [{"delta": p[0].copy(), "d": float(p[1]),
                "size": p[2].copy(), "yaw": float(p[3])} for p in params]
    return SceneRefineResult(refined, CameraPose(float(beta), float(gamma)),
                             rows, converged, float(initial_lg),
                             float(final_lg))

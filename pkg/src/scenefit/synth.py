"""Synthetic ground-truth scenes: random boxes in a random layout, primitive
object meshes and noisy surface point clouds.  Fully reproducible per seed."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .fit import SceneObject, SceneSample, normalize_to_unit_box, place_mesh
from .geometry import (CameraIntrinsics, CameraPose, OrientedBox,
                       center_with_jacobian, project_center, wrap_angle)
from .mesh import Mesh, icosphere
from .metrics import sample_surface
from .meshio import write_obj, write_xyz
from .sceneio import scene_to_doc, write_json

DEFAULT_INTRINSICS = CameraIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0)

_PRIMITIVE_LABELS = ["bed", "chair", "sofa", "table", "desk", "dresser",
                     "nightstand", "cabinet", "lamp", "box"]


def box_mesh():
    """Unit cube centered at the origin, 12 triangles."""
    corners = np.array([[x, y, z] for z in (-0.5, 0.5) for y in (-0.5, 0.5)
                        for x in (-0.5, 0.5)])
    quads = [(0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4),
             (2, 6, 7, 3), (0, 4, 6, 2), (1, 3, 7, 5)]
    faces = []
    for a, b, c, d in quads:
        faces += [(a, b, c), (a, c, d)]
    return Mesh(corners, np.array(faces))


def cylinder_mesh(segments=24):
    """Closed unit-height, unit-diameter cylinder along the y axis."""
    angles = 2 * np.pi * np.arange(segments) / segments
    ring = np.stack([0.5 * np.cos(angles), np.zeros(segments),
                     0.5 * np.sin(angles)], axis=1)
    bottom = ring + np.array([0.0, -0.5, 0.0])
    top = ring + np.array([0.0, 0.5, 0.0])
    verts = np.vstack([bottom, top,
                       [[0.0, -0.5, 0.0]], [[0.0, 0.5, 0.0]]])
    cb, ct = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces += [(i, j, segments + i), (j, segments + j, segments + i)]
        faces += [(cb, j, i), (ct, segments + i, segments + j)]
    return Mesh(verts, np.array(faces))


def primitive_mesh(kind):
    if kind == "box":
        return box_mesh()
    if kind == "sphere":
        return icosphere(2)
    if kind == "cylinder":
        return cylinder_mesh()
    raise ValueError(f"unknown primitive {kind!r}")


def generate_scene(n_objects, seed, noise_sigma=0.0, points_per_object=2000,
                   intrinsics=DEFAULT_INTRINSICS):
    """One random scene plus its per-object meshes and point clouds.

    Returns (SceneSample with clouds attached, list of object-centric
    primitive meshes)."""
    rng = np.random.default_rng(seed)
    pose = CameraPose(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3))

    objects = []
    meshes = []
    centers = []
    for i in range(n_objects):
        kind = ["box", "sphere", "cylinder"][rng.integers(3)]
        label = _PRIMITIVE_LABELS[rng.integers(len(_PRIMITIVE_LABELS))]
        pixel = np.array([rng.uniform(120.0, 520.0), rng.uniform(100.0, 380.0)])
        delta = rng.uniform(-5.0, 5.0, size=2)
        d = rng.uniform(2.5, 6.0)
        size = rng.uniform(0.4, 1.5, size=3)
        yaw = float(wrap_angle(rng.uniform(-math.pi, math.pi)))
        cb = pixel - delta

        mesh = primitive_mesh(kind)
        C, _ = center_with_jacobian(delta, d, cb, pose.pitch_beta,
                                    pose.roll_gamma, intrinsics)
        centers.append(C)
        world = place_mesh(normalize_to_unit_box(mesh), size, yaw, C)
        cloud = sample_surface(world, n_points=points_per_object,
                               seed=int(rng.integers(2 ** 31)))
        if noise_sigma > 0.0:
            cloud = cloud + rng.normal(0.0, noise_sigma, cloud.shape)
        box2d_size = np.array([rng.uniform(40.0, 160.0),
                               rng.uniform(40.0, 160.0)])
        objects.append(SceneObject(label=label, box2d_center=cb,
                                   box2d_size=box2d_size, delta=delta, d=d,
                                   size=size, yaw=yaw, cloud=cloud,
                                   confidence=float(rng.uniform(0.5, 1.0))))
        meshes.append(mesh)

    centers = np.array(centers)
    lo = centers.min(axis=0) - 1.5
    hi = centers.max(axis=0) + 1.5
    layout = OrientedBox(0.5 * (lo + hi), hi - lo,
                         float(wrap_angle(rng.uniform(-0.3, 0.3))))
    scene = SceneSample(objects, layout, pose, intrinsics,
                        scene_id=f"scene_{seed:04d}")
    return scene, meshes


def write_scene_files(scene: SceneSample, meshes, out_dir):
    """Write scene.json plus per-object OBJ meshes and XYZ clouds."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, (obj, mesh) in enumerate(zip(scene.objects, meshes)):
        mesh_name = f"{scene.scene_id}_obj{i:02d}.obj"
        cloud_name = f"{scene.scene_id}_obj{i:02d}.xyz"
        write_obj(mesh, out / mesh_name)
        write_xyz(obj.cloud, out / cloud_name)
        paths.append({"mesh_path": mesh_name, "pointcloud_path": cloud_name})
    doc = scene_to_doc(scene, object_paths=paths)
    scene_path = out / f"{scene.scene_id}.json"
    write_json(doc, scene_path)
    return scene_path


def generate_dataset(out_dir, n_rooms, n_objects, noise_sigma, seed,
                     points_per_object=2000):
    """A directory of reproducible synthetic scenes; returns scene paths."""
    if n_rooms < 1 or n_objects < 1:
        raise ValueError("need at least one room and one object")
    paths = []
    for room in range(n_rooms):
        scene, meshes = generate_scene(n_objects,
                                       seed=seed * 10_000 + room,
                                       noise_sigma=noise_sigma,
                                       points_per_object=points_per_object)
        paths.append(write_scene_files(scene, meshes, out_dir))
    return paths

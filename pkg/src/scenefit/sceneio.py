"""Scene JSON schema, canonical serialization, tool configuration and the
bundled NYU-37 to Pix3D class map.

Angles are degrees at the file/CLI boundary and radians internally.
Canonical JSON (sorted keys, floats at 9 significant digits) keeps
load -> save -> load byte-stable.
"""

from __future__ import annotations

import json
import math
import importlib.resources
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .fit import FitConfig, SceneObject, SceneSample
from .geometry import CameraIntrinsics, CameraPose, OrientedBox
from .losses import LossWeights


class SchemaError(ValueError):
    """Scene or config document violates the schema; message carries the
    JSON path."""


def _canonical(obj):
    if isinstance(obj, dict):
        return {k: _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(f"{float(obj):.9g}")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _canonical(obj.tolist())
    return obj


def canonical_json(doc):
    """Canonical text form: sorted keys, 9-significant-digit floats."""
    return json.dumps(_canonical(doc), sort_keys=True, indent=2) + "\n"


def write_json(doc, path):
    Path(path).write_text(canonical_json(doc))


def load_class_map(path=None):
    """NYU-37 -> Pix3D category map; the bundled table unless overridden."""
    if path is None:
        source = importlib.resources.files("scenefit.data") \
            .joinpath("nyu37_to_pix3d.json")
        doc = json.loads(source.read_text())
    else:
        doc = json.loads(Path(path).read_text())
    return doc["map"], doc["pix3d_categories"]


# ---------------------------------------------------------------------------
# Scene schema


def _expect(cond, path, message):
    if not cond:
        raise SchemaError(f"{path}: {message}")


def _check_keys(obj, path, required, optional=()):
    _expect(isinstance(obj, dict), path, "expected an object")
    for key in required:
        _expect(key in obj, path, f"missing required field {key!r}")
    allowed = set(required) | set(optional)
    for key in obj:
        _expect(key in allowed, f"{path}.{key}", "unknown field")


def _number(value, path):
    _expect(isinstance(value, (int, float)) and not isinstance(value, bool),
            path, "expected a number")
    return float(value)


def _vector(value, path, n):
    _expect(isinstance(value, list) and len(value) == n, path,
            f"expected a list of {n} numbers")
    return np.array([_number(v, f"{path}[{i}]") for i, v in enumerate(value)])


def parse_scene(doc, base_dir=None, class_map=None):
    """Validate a scene document and build a SceneSample.

    Point clouds and meshes referenced by relative path resolve against
    ``base_dir``.
    """
    from .meshio import read_obj, read_point_cloud

    _check_keys(doc, "$", ("camera", "layout", "objects"), ("scene_id",))
    cam = doc["camera"]
    _check_keys(cam, "$.camera", ("K", "pitch_deg", "roll_deg"))
    k = _vector(cam["K"], "$.camera.K", 4)
    intr = CameraIntrinsics(*k)
    pose = CameraPose(math.radians(_number(cam["pitch_deg"],
                                           "$.camera.pitch_deg")),
                      math.radians(_number(cam["roll_deg"],
                                           "$.camera.roll_deg")))

    lay = doc["layout"]
    _check_keys(lay, "$.layout", ("center", "size", "yaw_deg"))
    layout = OrientedBox(_vector(lay["center"], "$.layout.center", 3),
                         _vector(lay["size"], "$.layout.size", 3),
                         math.radians(_number(lay["yaw_deg"],
                                              "$.layout.yaw_deg")))

    if class_map is None:
        class_map, _ = load_class_map()
    objects = []
    _expect(isinstance(doc["objects"], list), "$.objects", "expected a list")
    for i, entry in enumerate(doc["objects"]):
        path = f"$.objects[{i}]"
        _check_keys(entry, path, ("class_nyu37", "box2d", "params"),
                    ("class_pix3d", "confidence", "pointcloud_path",
                     "mesh_path"))
        label = entry["class_nyu37"]
        _expect(isinstance(label, str), f"{path}.class_nyu37",
                "expected a string")
        box2d = entry["box2d"]
        _check_keys(box2d, f"{path}.box2d", ("cb", "w", "h"))
        params = entry["params"]
        _check_keys(params, f"{path}.params", ("delta", "d", "size",
                                               "yaw_deg"))
        cloud = None
        mesh = None
        if "pointcloud_path" in entry:
            cloud = read_point_cloud(_resolve(entry["pointcloud_path"],
                                              base_dir))
        if "mesh_path" in entry:
            mesh = read_obj(_resolve(entry["mesh_path"], base_dir))
        confidence = _number(entry.get("confidence", 1.0),
                             f"{path}.confidence")
        objects.append(SceneObject(
            label=label,
            box2d_center=_vector(box2d["cb"], f"{path}.box2d.cb", 2),
            box2d_size=np.array([_number(box2d["w"], f"{path}.box2d.w"),
                                 _number(box2d["h"], f"{path}.box2d.h")]),
            delta=_vector(params["delta"], f"{path}.params.delta", 2),
            d=_number(params["d"], f"{path}.params.d"),
            size=_vector(params["size"], f"{path}.params.size", 3),
            yaw=math.radians(_number(params["yaw_deg"],
                                     f"{path}.params.yaw_deg")),
            cloud=cloud, confidence=confidence, mesh=mesh))
    return SceneSample(objects, layout, pose, intr,
                       scene_id=doc.get("scene_id", "scene"))


def _resolve(path, base_dir):
    p = Path(path)
    if not p.is_absolute() and base_dir is not None:
        p = Path(base_dir) / p
    return p


def load_scene(path, class_map=None):
    doc = json.loads(Path(path).read_text())
    return parse_scene(doc, base_dir=Path(path).parent, class_map=class_map)


def scene_to_doc(scene: SceneSample, class_map=None, object_paths=None):
    """Serialize a SceneSample to the canonical schema (paths optional)."""
    if class_map is None:
        class_map, _ = load_class_map()
    objects = []
    for i, obj in enumerate(scene.objects):
        entry = {
            "class_nyu37": obj.label,
            "box2d": {"cb": obj.box2d_center.tolist(),
                      "w": float(obj.box2d_size[0]),
                      "h": float(obj.box2d_size[1])},
            "params": {"delta": obj.delta.tolist(), "d": float(obj.d),
                       "size": obj.size.tolist(),
                       "yaw_deg": math.degrees(obj.yaw)},
            "confidence": float(obj.confidence),
        }
        pix3d = class_map.get(obj.label)
        if pix3d is not None:
            entry["class_pix3d"] = int(pix3d)
        if object_paths is not None:
            entry.update(object_paths[i])
        objects.append(entry)
    return {
        "scene_id": scene.scene_id,
        "camera": {"K": [scene.intrinsics.fx, scene.intrinsics.fy,
                         scene.intrinsics.cx, scene.intrinsics.cy],
                   "pitch_deg": math.degrees(scene.camera.pitch_beta),
                   "roll_deg": math.degrees(scene.camera.roll_gamma)},
        "layout": {"center": scene.layout.center.tolist(),
                   "size": scene.layout.size.tolist(),
                   "yaw_deg": math.degrees(scene.layout.yaw)},
        "objects": objects,
    }


# ---------------------------------------------------------------------------
# Tool configuration


@dataclass(frozen=True)
class MetricConventions:
    iou_threshold: float = 0.15
    ap_interpolation: str = "all-point"
    scale_error: str = "mean-absolute-relative-deviation"


@dataclass(frozen=True)
class ToolConfig:
    """Resolved configuration; defaults carry the reference constants
    (template sphere level 4 = 2562 vertices, cut threshold 0.2,
    IoU threshold 0.15, default loss weights)."""
    weights: LossWeights = field(default_factory=LossWeights)
    fit: FitConfig = field(default_factory=FitConfig)
    metrics: MetricConventions = field(default_factory=MetricConventions)
    seed: int = 0

    def to_doc(self):
        return {"weights": asdict(self.weights),
                "fit": {k: v for k, v in asdict(self.fit).items()
                        if k != "weights"},
                "metrics": asdict(self.metrics),
                "seed": self.seed}


def load_config(path=None, overrides=None):
    """Build a ToolConfig from defaults, an optional JSON file, and explicit
    overrides (flags beat file, file beats defaults)."""
    doc = {}
    if path is not None:
        doc = json.loads(Path(path).read_text())
        _check_keys(doc, "$", (), ("weights", "fit", "metrics", "seed"))
    if overrides:
        for section, values in overrides.items():
            doc.setdefault(section, {})
            if isinstance(values, dict):
                doc[section].update(values)
            else:
                doc[section] = values
    weights = LossWeights(**doc.get("weights", {}))
    fit_kwargs = dict(doc.get("fit", {}))
    fit = FitConfig(weights=weights, **fit_kwargs)
    metrics = MetricConventions(**doc.get("metrics", {}))
    return ToolConfig(weights=weights, fit=fit, metrics=metrics,
                      seed=int(doc.get("seed", 0)))

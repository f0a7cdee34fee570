"""Command-line entry point.

Subcommands wrap the fitting, evaluation and generation operations.  Exit
codes: 0 success/convergence, 2 iteration budget exhausted before tolerance,
1 I/O or schema errors.  Angles are degrees at this boundary.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import metrics, sceneio, synth
from .fit import assemble, fit_template, refine_scene
from .geometry import OrientedBox
from .losses import partial_chamfer
from .meshio import read_obj, read_point_cloud, write_obj
from .mesh import TargetSurface, cut_edges, score_edges
from .metrics import DetectionRecord
from .sceneio import SchemaError, load_config, load_scene, write_json


class CliError(Exception):
    pass


def _config_from_args(args):
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
        overrides["fit"] = {"seed": args.seed}
    return load_config(getattr(args, "config", None), overrides)


def _write_trace_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.9g}" if isinstance(v, float) else v
                             for v in row])


def cmd_fit_mesh(args):
    target = read_point_cloud(_require_file(args.target))
    config = _config_from_args(args)
    result = fit_template(target, config.fit)
    out = Path(args.out)
    write_obj(result.mesh, out)
    _write_trace_csv(out.with_suffix(".trace.csv"),
                     ["iteration", "total", "chamfer", "edge", "boundary"],
                     result.trace)
    return 0 if result.converged else 2


def cmd_modify_topology(args):
    mesh = read_obj(_require_file(args.mesh))
    target_pts = read_point_cloud(_require_file(args.target))
    config = _config_from_args(args)
    surface = TargetSurface.from_point_cloud(target_pts,
                                             k=config.fit.target_knn)
    report = score_edges(mesh, surface,
                         samples_per_edge=config.fit.samples_per_edge,
                         sampling=config.fit.edge_sampling,
                         seed=config.fit.seed)
    threshold = args.threshold if args.threshold is not None \
        else config.fit.cut_threshold
    write_obj(cut_edges(mesh, report, threshold=threshold), args.out)
    return 0


def _detections_of(scene):
    records = []
    for obj in scene.objects:
        records.append(DetectionRecord(
            obj.oriented_box(scene.camera, scene.intrinsics), obj.label,
            obj.confidence))
    return records


def cmd_eval_detection(args):
    pred = load_scene(_require_file(args.pred))
    gt = load_scene(_require_file(args.gt))
    config = load_config(getattr(args, "config", None))
    threshold = args.iou if args.iou is not None \
        else config.metrics.iou_threshold
    gt_pairs = [(o.oriented_box(gt.camera, gt.intrinsics), o.label)
                for o in gt.objects]
    per_class, mAP = metrics.average_precision(_detections_of(pred), gt_pairs,
                                               iou_threshold=threshold)
    report = {
        "per_class_ap": {k: (v if v is not None else "no-gt")
                         for k, v in per_class.items()},
        "mAP": mAP,
        "layout_iou": metrics.iou3d(pred.layout, gt.layout),
        "camera_mae_deg": dict(zip(("pitch", "roll"),
                                   metrics.camera_mae([pred.camera],
                                                      [gt.camera]))),
        "iou_threshold": threshold,
        "config": config.to_doc(),
    }
    write_json(report, args.out)
    return 0


def cmd_refine_scene(args):
    scene = load_scene(_require_file(args.scene))
    config = _config_from_args(args)
    meshes = [obj.mesh for obj in scene.objects]
    if any(m is None for m in meshes):
        raise CliError("every object needs a mesh_path for refinement")
    result = refine_scene(scene, meshes, config.fit)
    out = Path(args.out)
    report = {
        "scene_id": scene.scene_id,
        "camera": {"pitch_deg": float(np.degrees(result.camera.pitch_beta)),
                   "roll_deg": float(np.degrees(result.camera.roll_gamma))},
        "objects": [{"delta": p["delta"].tolist(), "d": p["d"],
                     "size": p["size"].tolist(),
                     "yaw_deg": float(np.degrees(p["yaw"]))}
                    for p in result.objects],
        "initial_partial_chamfer": result.initial_lg,
        "final_partial_chamfer": result.final_lg,
        "converged": result.converged,
        "config": config.to_doc(),
    }
    write_json(report, out)
    _write_trace_csv(out.with_suffix(".trace.csv"),
                     ["iteration", "total", "partial_chamfer", "cooperative"],
                     result.trace)
    return 0 if result.converged else 2


def cmd_assemble(args):
    scene = load_scene(_require_file(args.scene))
    meshes = [obj.mesh for obj in scene.objects]
    if any(m is None for m in meshes):
        raise CliError("every object needs a mesh_path for assembly")
    placed, layout = assemble(scene, meshes)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, mesh in enumerate(placed):
        write_obj(mesh, out / f"{scene.scene_id}_obj{i:02d}_world.obj")
    write_obj(layout, out / f"{scene.scene_id}_layout.obj")
    return 0


def cmd_eval_mesh(args):
    mesh = read_obj(_require_file(args.mesh))
    gt = read_point_cloud(_require_file(args.target))
    config = _config_from_args(args)
    value = metrics.eval_mesh_chamfer(mesh, gt, n_samples=args.samples,
                                      seed=config.fit.seed,
                                      with_scale=args.with_scale)
    report = {"chamfer": value, "n_samples": args.samples,
              "icp_with_scale": bool(args.with_scale),
              "config": config.to_doc()}
    write_json(report, args.out)
    return 0


def cmd_gen_synthetic(args):
    synth.generate_dataset(args.out, args.rooms, args.objects, args.noise,
                           args.seed)
    return 0


def _require_file(path):
    if not Path(path).is_file():
        raise CliError(f"no such file: {path}")
    return path


def build_parser():
    parser = argparse.ArgumentParser(
        prog="scenefit",
        description="Scene-geometry fitting and evaluation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-mesh", help="fit the template sphere to a cloud")
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_fit_mesh)

    p = sub.add_parser("modify-topology",
                       help="score and cut mesh edges against a cloud")
    p.add_argument("--mesh", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_modify_topology)

    p = sub.add_parser("eval-detection",
                       help="AP/mAP, layout IoU and camera error report")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--iou", type=float)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_eval_detection)

    p = sub.add_parser("refine-scene",
                       help="joint box/camera refinement on a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_refine_scene)

    p = sub.add_parser("assemble",
                       help="place object meshes into the world frame")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("eval-mesh",
                       help="ICP-aligned Chamfer of a mesh against a cloud")
    p.add_argument("--mesh", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--with-scale", action="store_true")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_eval_mesh)

    p = sub.add_parser("gen-synthetic", help="generate synthetic GT scenes")
    p.add_argument("--rooms", type=int, required=True)
    p.add_argument("--objects", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synthetic)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, SchemaError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

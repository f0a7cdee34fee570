"""Mesh and point-cloud file I/O: OBJ (triangles, v/f records), ASCII PLY
and whitespace XYZ point clouds."""

from __future__ import annotations

import numpy as np

from .mesh import Mesh

# Fixed float formatting keeps OBJ output byte-stable across runs.
_FLOAT_FMT = "{:.9g}"


def write_obj(mesh: Mesh, path):
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write("v " + " ".join(_FLOAT_FMT.format(x) for x in v) + "\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def read_obj(path):
    verts, faces = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                if len(idx) != 3:
                    raise ValueError(
                        f"{path}:{lineno}: only triangular faces supported")
                faces.append(idx)
    return Mesh(np.array(verts).reshape(-1, 3),
                np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_xyz(points, path):
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    with open(path, "w") as fh:
        for p in pts:
            fh.write(" ".join(_FLOAT_FMT.format(x) for x in p) + "\n")


def read_xyz(path):
    pts = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if parts:
                pts.append([float(x) for x in parts[:3]])
    return np.array(pts).reshape(-1, 3)


def read_ply(path):
    """ASCII PLY vertex positions (x, y, z properties)."""
    with open(path, "rb") as fh:
        header = []
        while True:
            line = fh.readline().decode("ascii").strip()
            header.append(line)
            if line == "end_header":
                break
        if header[0] != "ply":
            raise ValueError(f"{path}: not a PLY file")
        fmt = next((h.split()[1] for h in header if h.startswith("format")),
                   None)
        if fmt != "ascii":
            raise ValueError(f"{path}: only ASCII PLY supported, got {fmt}")
        n_verts = None
        props = []
        in_vertex = False
        for h in header:
            if h.startswith("element"):
                _, name, count = h.split()
                in_vertex = name == "vertex"
                if in_vertex:
                    n_verts = int(count)
            elif h.startswith("property") and in_vertex:
                props.append(h.split()[-1])
        if n_verts is None:
            raise ValueError(f"{path}: no vertex element")
        cols = [props.index(axis) for axis in ("x", "y", "z")]
        pts = np.empty((n_verts, 3))
        for i in range(n_verts):
            vals = fh.readline().split()
            pts[i] = [float(vals[c]) for c in cols]
    return pts


def read_point_cloud(path):
    """Dispatch on extension: .ply or whitespace .xyz/.txt."""
    text = str(path)
    if text.lower().endswith(".ply"):
        return read_ply(text)
    return read_xyz(text)

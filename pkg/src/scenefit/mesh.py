"""Triangle meshes, the subdivided template sphere, and density-aware
topology modification.

The modifier scores points sampled on mesh edges against a target surface:
a sample survives iff its distance to the nearest target point is within that
point's local density (the largest nearest-neighbor gap inside its
neighborhood).  Edges whose average score drops below a threshold are cut by
removing their incident faces; the resulting boundary loops can then be
smoothed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spatial import PointIndex


class EmptyTargetError(ValueError):
    """Target surface has no points."""


class Mesh:
    """Immutable triangle mesh with derived edge and boundary structure.

    Faces must index valid, pairwise-distinct vertices.  Edges are undirected
    and unique; an edge is a boundary edge iff exactly one face touches it.
    """

    def __init__(self, vertices, faces):
        v = np.ascontiguousarray(vertices, dtype=float).reshape(-1, 3)
        f = np.ascontiguousarray(faces, dtype=np.int64).reshape(-1, 3)
        if f.size:
            if f.min() < 0 or f.max() >= len(v):
                raise ValueError("face index out of range")
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2])
                      | (f[:, 0] == f[:, 2])):
                raise ValueError("degenerate face (repeated vertex)")
        self.vertices = v
        self.faces = f
        self.vertices.setflags(write=False)
        self.faces.setflags(write=False)
        self._edges = None
        self._edge_face_count = None

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @property
    def is_empty(self):
        return len(self.faces) == 0

    def _build_edges(self):
        if self._edges is not None:
            return
        if self.is_empty:
            self._edges = np.zeros((0, 2), dtype=np.int64)
            self._edge_face_count = np.zeros(0, dtype=np.int64)
            return
        raw = self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        raw = np.sort(raw, axis=1)
        self._edges, counts = np.unique(raw, axis=0, return_counts=True)
        self._edge_face_count = counts

    @property
    def edges(self):
        """Unique undirected edges, (E, 2), lexicographically sorted."""
        self._build_edges()
        return self._edges

    @property
    def edge_face_count(self):
        self._build_edges()
        return self._edge_face_count

    @property
    def boundary_edges(self):
        return self.edges[self.edge_face_count == 1]

    def with_vertices(self, vertices):
        """Same topology over new vertex positions."""
        return Mesh(vertices, self.faces)

    def euler_characteristic(self):
        return len(self.vertices) - len(self.edges) + len(self.faces)

    def connected_components(self):
        """Number of connected components over vertices used by faces."""
        if self.is_empty:
            return 0
        parent = np.arange(len(self.vertices))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for a, b in self.edges:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
        used = np.unique(self.faces)
        return len({find(int(u)) for u in used})


# Icosahedron with unit-circumradius after normalization; faces wound
# consistently (outward).
_PHI = (1.0 + np.sqrt(5.0)) / 2.0
_ICO_VERTS = np.array([
    [-1.0, _PHI, 0.0], [1.0, _PHI, 0.0], [-1.0, -_PHI, 0.0], [1.0, -_PHI, 0.0],
    [0.0, -1.0, _PHI], [0.0, 1.0, _PHI], [0.0, -1.0, -_PHI], [0.0, 1.0, -_PHI],
    [_PHI, 0.0, -1.0], [_PHI, 0.0, 1.0], [-_PHI, 0.0, -1.0], [-_PHI, 0.0, 1.0],
])
_ICO_FACES = np.array([
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
])


def subdivide(mesh):
    """One midpoint subdivision step: each face splits into four.

    Original vertices keep their indices; one new vertex is added at the
    midpoint of each unique edge, in deterministic order.
    """
    verts = [v for v in mesh.vertices]
    midpoint = {}

    def mid(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in midpoint:
            verts.append(0.5 * (verts[a] + verts[b]))
            midpoint[key] = len(verts) - 1
        return midpoint[key]

    new_faces = []
    for a, b, c in mesh.faces:
        a, b, c = int(a), int(b), int(c)
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
    return Mesh(np.array(verts), np.array(new_faces))


def icosphere(subdivisions):
    """Subdivided icosahedron projected onto the unit sphere.

    Vertex counts are 10 * 4**k + 2: 12, 42, 162, 642, 2562 for k = 0..4.
    """
    if subdivisions < 0:
        raise ValueError("subdivisions must be >= 0")
    verts = [v / np.linalg.norm(v) for v in _ICO_VERTS]
    faces = [tuple(f) for f in _ICO_FACES]
    for _ in range(subdivisions):
        midpoint = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return Mesh(np.array(verts), np.array(faces))


@dataclass
class TargetSurface:
    """Ground-truth samples with per-point neighbor sets.

    ``neighbors[i]`` indexes the neighborhood of point i (excluding i itself);
    every set needs at least 2 members for the local-density definition.
    """
    points: np.ndarray
    neighbors: list
    _index: PointIndex = field(default=None, repr=False)
    _density: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if len(self.points) == 0:
            raise EmptyTargetError("target surface has no points")

    @classmethod
    def from_point_cloud(cls, points, k=10):
        """Neighborhoods via k-nearest neighbors (self excluded)."""
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        if len(points) == 0:
            raise EmptyTargetError("target surface has no points")
        index = PointIndex(points)
        kk = min(k + 1, len(points))
        from scipy.spatial import cKDTree  # batch query, ties irrelevant here
        _, idx = cKDTree(points).query(points, k=kk)
        idx = np.atleast_2d(idx)
        neighbors = [row[row != i][:k] for i, row in enumerate(idx)]
        return cls(points, neighbors, _index=index)

    @classmethod
    def from_mesh(cls, mesh: Mesh):
        """Neighborhoods are the 1-ring vertex neighbors of each vertex."""
        adj = [set() for _ in range(len(mesh.vertices))]
        for a, b in mesh.edges:
            adj[a].add(int(b))
            adj[b].add(int(a))
        neighbors = [np.array(sorted(s), dtype=int) for s in adj]
        return cls(mesh.vertices.copy(), neighbors)

    @property
    def index(self):
        if self._index is None:
            self._index = PointIndex(self.points)
        return self._index

    def density(self, i):
        """Local density D(q_i): the largest within-neighborhood
        nearest-neighbor gap."""
        if self._density is None:
            self._density = np.full(len(self.points), np.nan)
        if np.isnan(self._density[i]):
            self._density[i] = local_density(i, self)
        return self._density[i]

    def densities(self, indices):
        return np.array([self.density(int(i)) for i in np.atleast_1d(indices)])


def local_density(q_index, target: TargetSurface):
    """D(q) = max over neighborhood members of their nearest-neighbor
    distance within the neighborhood."""
    nbr = np.asarray(target.neighbors[q_index], dtype=int)
    if len(nbr) < 2:
        raise ValueError(f"point {q_index} has fewer than 2 neighbors")
    pts = target.points[nbr]
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    np.fill_diagonal(dist, np.inf)
    return float(dist.min(axis=1).max())


def classify_point(p, target: TargetSurface):
    """Whether p lies within the local density of its nearest target point.

    Returns (keep, nearest_index, distance).  Equality ties keep the point.
    """
    i, d = target.index.nearest(np.asarray(p, dtype=float))
    return d <= target.density(i), i, d


def classify_points(points, target: TargetSurface):
    """Vectorized classification of an (n, 3) batch."""
    idx, dist = target.index.nearest(np.asarray(points, dtype=float))
    return dist <= target.densities(idx)


@dataclass(frozen=True)
class EdgeScoreReport:
    """Per-edge mean classification score and cut decisions."""
    edges: np.ndarray        # (E, 2)
    scores: np.ndarray       # (E,) in [0, 1]
    samples_per_edge: int
    threshold: float = None  # set by cut decisions when known

    def cut_mask(self, threshold):
        return self.scores < threshold


def score_edges(mesh: Mesh, target: TargetSurface, samples_per_edge=5,
                sampling="uniform", seed=0):
    """Mean classification score of points sampled on each edge.

    Samples lie on the open segment: uniform mode uses parameters
    (i + 0.5) / k; seeded-random mode draws from the open unit interval.
    """
    if samples_per_edge < 1:
        raise ValueError("samples_per_edge must be >= 1")
    edges = mesh.edges
    if len(edges) == 0:
        return EdgeScoreReport(edges, np.zeros(0), samples_per_edge)
    if sampling == "uniform":
        t = (np.arange(samples_per_edge) + 0.5) / samples_per_edge
        t = np.broadcast_to(t, (len(edges), samples_per_edge))
    elif sampling == "seeded-random":
        rng = np.random.default_rng(seed)
        t = rng.random((len(edges), samples_per_edge))
        t = np.clip(t, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
    else:
        raise ValueError(f"unknown sampling mode {sampling!r}")
    a = mesh.vertices[edges[:, 0]][:, None, :]
    b = mesh.vertices[edges[:, 1]][:, None, :]
    samples = a + t[:, :, None] * (b - a)
    keep = classify_points(samples.reshape(-1, 3), target)
    scores = keep.reshape(len(edges), samples_per_edge).mean(axis=1)
    return EdgeScoreReport(edges, scores, samples_per_edge)


def cut_edges(mesh: Mesh, report: EdgeScoreReport, threshold=0.2):
    """Remove every face incident to an edge scoring below the threshold.

    Vertices left without any face are dropped and indices remapped.  Returns
    the empty mesh value when nothing survives.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    cut = {tuple(e) for e in report.edges[report.cut_mask(threshold)]}
    if not cut:
        return mesh
    keep_faces = []
    for f in mesh.faces:
        fe = [tuple(sorted((f[0], f[1]))), tuple(sorted((f[1], f[2]))),
              tuple(sorted((f[2], f[0])))]
        if not any(e in cut for e in fe):
            keep_faces.append(f)
    if not keep_faces:
        return Mesh.empty()
    faces = np.array(keep_faces)
    used = np.unique(faces)
    remap = np.full(len(mesh.vertices), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return Mesh(mesh.vertices[used], remap[faces])


@dataclass(frozen=True)
class BoundaryLoop:
    vertices: list
    closed: bool

    def __len__(self):
        """Length in edges."""
        return len(self.vertices) if self.closed else len(self.vertices) - 1


def boundary_loops(mesh: Mesh):
    """Partition boundary edges into maximal chains and cycles.

    Sum of loop lengths (in edges) equals the boundary edge count.  A closed
    mesh yields an empty list.  Deterministic: walks start at the smallest
    available vertex and prefer the smallest-index neighbor.
    """
    bedges = mesh.boundary_edges
    if len(bedges) == 0:
        return []
    adj = {}
    for a, b in bedges:
        adj.setdefault(int(a), []).append(int(b))
        adj.setdefault(int(b), []).append(int(a))
    for v in adj:
        adj[v].sort()
    unused = {tuple(sorted(e)) for e in bedges.tolist()}
    loops = []

    def walk(start):
        chain = [start]
        cur = start
        while True:
            nxt = None
            for cand in adj[cur]:
                if tuple(sorted((cur, cand))) in unused:
                    nxt = cand
                    break
            if nxt is None:
                return chain, False
            unused.discard(tuple(sorted((cur, nxt))))
            if nxt == start:
                return chain, True
            chain.append(nxt)
            cur = nxt

    # Open chains first, from their endpoints (odd boundary degree).
    degree = {v: len(n) for v, n in adj.items()}
    for start in sorted(adj):
        if degree[start] % 2 == 1:
            while any(tuple(sorted((start, c))) in unused for c in adj[start]):
                chain, closed = walk(start)
                loops.append(BoundaryLoop(chain, closed))
    for start in sorted(adj):
        while any(tuple(sorted((start, c))) in unused for c in adj[start]):
            chain, closed = walk(start)
            loops.append(BoundaryLoop(chain, closed))
    return loops


def boundary_vertex_neighbors(mesh: Mesh):
    """Map vertex -> its two neighbors along the boundary, for vertices with
    exactly two incident boundary edges."""
    adj = {}
    for a, b in mesh.boundary_edges:
        adj.setdefault(int(a), []).append(int(b))
        adj.setdefault(int(b), []).append(int(a))
    return {v: tuple(sorted(n)) for v, n in adj.items() if len(n) == 2}


def refine_boundary(mesh: Mesh, iterations=3, step=0.5):
    """Smooth boundary loops: each boundary vertex moves toward the midpoint
    of its two boundary neighbors by ``step``.  Interior vertices are fixed."""
    if not 0.0 <= step <= 1.0:
        raise ValueError("step must lie in [0, 1]")
    nbrs = boundary_vertex_neighbors(mesh)
    if not nbrs or iterations == 0 or step == 0.0:
        return mesh
    verts = mesh.vertices.copy()
    ids = np.array(sorted(nbrs))
    n1 = np.array([nbrs[v][0] for v in ids])
    n2 = np.array([nbrs[v][1] for v in ids])
    for _ in range(iterations):
        mid = 0.5 * (verts[n1] + verts[n2])
        verts[ids] += step * (mid - verts[ids])
    return mesh.with_vertices(verts)

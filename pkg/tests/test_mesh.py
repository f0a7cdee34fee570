import numpy as np
import pytest

from scenefit.mesh import (BoundaryLoop, EdgeScoreReport, Mesh, TargetSurface,
                           boundary_loops, boundary_vertex_neighbors,
                           classify_point, classify_points, cut_edges,
                           icosphere, local_density, refine_boundary,
                           score_edges)
from scenefit.losses import boundary_loss


def tetrahedron():
    verts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    faces = np.array([[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]])
    return Mesh(verts, faces)


class TestMeshInvariants:
    def test_out_of_range_face_rejected(self):
        with pytest.raises(ValueError):
            Mesh(np.zeros((3, 3)), np.array([[0, 1, 3]]))

    def test_degenerate_face_rejected(self):
        with pytest.raises(ValueError):
            Mesh(np.zeros((3, 3)), np.array([[0, 1, 1]]))

    def test_unique_edges(self):
        m = tetrahedron()
        assert len(m.edges) == 6
        assert len(np.unique(m.edges, axis=0)) == 6

    def test_closed_mesh_no_boundary(self):
        assert len(tetrahedron().boundary_edges) == 0

    def test_single_face_all_boundary(self):
        m = Mesh(np.eye(3), np.array([[0, 1, 2]]))
        assert len(m.boundary_edges) == 3

    def test_euler_characteristic(self):
        assert tetrahedron().euler_characteristic() == 2

    def test_connected_components(self):
        verts = np.vstack([tetrahedron().vertices,
                           tetrahedron().vertices + 10.0])
        faces = np.vstack([tetrahedron().faces, tetrahedron().faces + 4])
        assert Mesh(verts, faces).connected_components() == 2

    def test_empty_mesh(self):
        m = Mesh.empty()
        assert m.is_empty
        assert len(m.vertices) == 0


class TestIcosphere:
    @pytest.mark.parametrize("k,nv", [(0, 12), (1, 42), (2, 162), (3, 642),
                                      (4, 2562)])
    def test_vertex_counts(self, k, nv):
        m = icosphere(k)
        assert len(m.vertices) == nv
        assert nv == 10 * 4 ** k + 2

    def test_icosahedron_combinatorics(self):
        m = icosphere(0)
        assert (len(m.vertices), len(m.faces), len(m.edges)) == (12, 20, 30)

    def test_closed_euler_two(self):
        for k in range(4):
            m = icosphere(k)
            assert m.euler_characteristic() == 2
            assert len(m.boundary_edges) == 0

    def test_unit_radius(self):
        m = icosphere(3)
        norms = np.linalg.norm(m.vertices, axis=1)
        assert np.max(np.abs(norms - 1.0)) < 1e-12


class TestLocalDensity:
    def test_uniform_grid_spacing(self):
        # [TRIVIAL] every within-neighborhood nearest gap equals h.
        pts = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]])
        target = TargetSurface(points=pts, neighbors=[np.arange(4)] * 4)
        assert local_density(0, target) == pytest.approx(1.0)

    def test_hand_enumeration(self):
        # [DERIVED] nearest gaps {1, 1, 2} -> max 2.
        pts = np.array([[0.0, 0, 0], [1, 0, 0], [3, 0, 0]])
        target = TargetSurface(points=pts, neighbors=[np.arange(3)] * 3)
        assert local_density(0, target) == pytest.approx(2.0)

    def test_neighborhood_too_small(self):
        pts = np.array([[0.0, 0, 0], [1, 0, 0]])
        target = TargetSurface(points=pts,
                               neighbors=[np.array([0]), np.array([1])])
        with pytest.raises(ValueError):
            local_density(0, target)

    def test_matches_brute_force(self, rng):
        pts = rng.uniform(-1, 1, (60, 3))
        target = TargetSurface.from_point_cloud(pts, k=20)
        for q in range(60):
            nbrs = target.neighbors[q]
            sub = pts[nbrs]
            d = np.linalg.norm(sub[:, None] - sub[None, :], axis=2)
            np.fill_diagonal(d, np.inf)
            expected = float(d.min(axis=1).max())
            assert local_density(q, target) == pytest.approx(expected)


class TestClassifyPoint:
    @pytest.fixture
    def line_target(self):
        pts = np.array([[0.0, 0, 0], [1, 0, 0], [3, 0, 0]])
        return TargetSurface(points=pts, neighbors=[np.arange(3)] * 3)

    def test_coincident_point(self, line_target):
        keep, i, d = classify_point(np.array([1.0, 0, 0]), line_target)
        assert keep and i == 1 and d == 0.0

    def test_hand_density_cases(self, line_target):
        # D(q) = 2 everywhere for this target.
        keep, _, _ = classify_point(np.array([0.0, 1.5, 0]), line_target)
        assert keep
        keep, _, _ = classify_point(np.array([0.0, 2.5, 0]), line_target)
        assert not keep

    def test_equality_tie_keeps(self, line_target):
        keep, _, d = classify_point(np.array([0.0, 2.0, 0]), line_target)
        assert d == pytest.approx(2.0)
        assert keep

    def test_monotone_in_distance(self, line_target):
        kept = [classify_point(np.array([0.0, y, 0.0]), line_target)[0]
                for y in np.linspace(0, 4, 40)]
        # once False, never back to True
        assert kept == sorted(kept, reverse=True)

    def test_batch_agrees_with_scalar(self, rng):
        pts = rng.uniform(-1, 1, (100, 3))
        target = TargetSurface.from_point_cloud(pts, k=10)
        queries = rng.uniform(-1.5, 1.5, (200, 3))
        batch = classify_points(queries, target)
        for q, expected in zip(queries, batch):
            assert classify_point(q, target)[0] == expected


class TestScoreEdges:
    def test_all_inside_scores_one(self, rng):
        m = icosphere(2)
        target = TargetSurface.from_point_cloud(
            np.asarray(m.vertices), k=6)
        report = score_edges(m, target)
        # every edge sample lies close to the dense vertex set
        assert np.all(report.scores >= 0.8)

    def test_far_edge_scores_zero(self):
        pts = np.random.default_rng(1).uniform(-0.1, 0.1, (30, 3))
        target = TargetSurface.from_point_cloud(pts, k=5)
        m = Mesh(np.array([[10.0, 0, 0], [11, 0, 0], [10, 1, 0]]),
                 np.array([[0, 1, 2]]))
        report = score_edges(m, target)
        assert np.all(report.scores == 0.0)

    def test_half_space_enumeration(self):
        # [DERIVED] target = dense slab at x <= 0; a unit edge from x = -1 to
        # x = +1 with 5 uniform samples at parameters 0.1, 0.3, 0.5, 0.7, 0.9.
        gx, gy = np.meshgrid(np.linspace(-2.0, 0.0, 21),
                             np.linspace(-1.0, 1.0, 21))
        pts = np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1)
        target = TargetSurface.from_point_cloud(pts, k=8)
        m = Mesh(np.array([[-1.0, 0, 0], [1.0, 0, 0], [0.0, 5.0, 0]]),
                 np.array([[0, 1, 2]]))
        report = score_edges(m, target, samples_per_edge=5)
        edge01 = [i for i, e in enumerate(m.edges.tolist())
                  if e == [0, 1]][0]
        samples = np.array([[-1.0 + 2 * (i + 0.5) / 5, 0.0, 0.0]
                            for i in range(5)])
        expected = np.mean(classify_points(samples, target))
        assert report.scores[edge01] == pytest.approx(expected)

    def test_seeded_random_mode_deterministic(self, rng):
        m = icosphere(1)
        target = TargetSurface.from_point_cloud(rng.uniform(-1, 1, (100, 3)),
                                                k=10)
        a = score_edges(m, target, sampling="seeded-random", seed=3)
        b = score_edges(m, target, sampling="seeded-random", seed=3)
        np.testing.assert_array_equal(a.scores, b.scores)


class TestCutEdges:
    def _report(self, mesh, scores):
        return EdgeScoreReport(edges=mesh.edges,
                               scores=np.asarray(scores, dtype=float),
                               samples_per_edge=5)

    def test_all_high_scores_unchanged(self):
        m = icosphere(1)
        out = cut_edges(m, self._report(m, np.ones(len(m.edges))), 0.2)
        np.testing.assert_array_equal(out.faces, m.faces)
        np.testing.assert_array_equal(out.vertices, m.vertices)

    def test_all_zero_scores_empty(self):
        m = icosphere(1)
        out = cut_edges(m, self._report(m, np.zeros(len(m.edges))), 0.2)
        assert out.is_empty

    def test_cut_is_strictly_below_threshold(self):
        m = tetrahedron()
        scores = np.full(len(m.edges), 0.2)
        out = cut_edges(m, self._report(m, scores), 0.2)
        assert len(out.faces) == len(m.faces)

    def test_single_cut_edge_removes_incident_faces(self):
        m = tetrahedron()
        scores = np.ones(len(m.edges))
        scores[0] = 0.0  # edge (0,1) is shared by faces 0 and 1
        out = cut_edges(m, self._report(m, scores), 0.2)
        assert len(out.faces) == 2

    def test_vertex_remap_valid(self, rng):
        m = icosphere(2)
        scores = rng.uniform(0, 1, len(m.edges))
        out = cut_edges(m, self._report(m, scores), 0.5)
        if not out.is_empty:
            assert out.faces.max() < len(out.vertices)
            # no isolated vertices survive
            assert set(np.unique(out.faces)) == set(range(len(out.vertices)))

    def test_threshold_zero_identity(self, rng):
        m = icosphere(1)
        scores = rng.uniform(0.01, 1.0, len(m.edges))
        out = cut_edges(m, self._report(m, scores), 0.0)
        np.testing.assert_array_equal(out.faces, m.faces)


class TestBoundaryLoops:
    def test_closed_mesh_empty(self):
        assert boundary_loops(icosphere(1)) == []

    def test_one_face_removed_triangle_loop(self):
        m = icosphere(1)
        holed = Mesh(m.vertices, m.faces[1:])
        loops = boundary_loops(holed)
        assert len(loops) == 1
        assert len(loops[0]) == 3
        assert loops[0].closed

    def test_two_holes_two_loops(self):
        m = icosphere(2)
        # remove two far-apart faces
        far = [0, len(m.faces) // 2]
        keep = [i for i in range(len(m.faces)) if i not in far]
        holed = Mesh(m.vertices, m.faces[keep])
        loops = boundary_loops(holed)
        assert len(loops) == 2
        assert all(len(l) == 3 for l in loops)

    def test_loop_lengths_sum_to_boundary_edges(self):
        m = icosphere(1)
        holed = Mesh(m.vertices, m.faces[4:])
        loops = boundary_loops(holed)
        assert sum(len(l) for l in loops) == len(holed.boundary_edges)


class TestRefineBoundary:
    def test_closed_mesh_identity(self):
        m = icosphere(1)
        out = refine_boundary(m, iterations=3, step=0.5)
        np.testing.assert_array_equal(out.vertices, m.vertices)

    def test_step_zero_identity(self):
        m = icosphere(1)
        holed = Mesh(m.vertices, m.faces[1:])
        out = refine_boundary(holed, iterations=3, step=0.0)
        np.testing.assert_array_equal(out.vertices, holed.vertices)

    def test_zigzag_boundary_loss_decreases(self):
        # strip of triangles whose top boundary zig-zags in y
        n = 8
        bottom = np.stack([np.arange(n, dtype=float),
                           np.full(n, -2.0), np.zeros(n)], axis=1)
        top = np.stack([np.arange(n, dtype=float),
                        np.where(np.arange(n) % 2 == 0, 0.0, 1.0),
                        np.zeros(n)], axis=1)
        verts = np.vstack([bottom, top])
        faces = []
        for i in range(n - 1):
            faces.append([i, i + 1, n + i])
            faces.append([i + 1, n + i + 1, n + i])
        m = Mesh(verts, np.array(faces))
        before, _ = boundary_loss(m)
        out = refine_boundary(m, iterations=1, step=0.5)
        after, _ = boundary_loss(out)
        assert after < before

    def test_interior_vertices_unchanged(self):
        m = icosphere(2)
        holed = Mesh(m.vertices, m.faces[1:])
        boundary_ids = set(boundary_vertex_neighbors(holed))
        out = refine_boundary(holed, iterations=2, step=0.5)
        for v in range(len(m.vertices)):
            if v not in boundary_ids:
                np.testing.assert_array_equal(out.vertices[v],
                                              holed.vertices[v])

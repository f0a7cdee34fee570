import math

import numpy as np
import pytest

from scenefit.losses import (BCE_EPS, BinSpec, LossWeights,
                             binary_cross_entropy, boundary_loss, chamfer,
                             cls_reg_loss, cooperative_loss, default_bins,
                             edge_loss, joint_loss, partial_chamfer, softmax)
from scenefit.mesh import Mesh, icosphere

from conftest import central_diff, nn_margin, rel_err


def tetrahedron(scale=1.0):
    # regular tetrahedron with unit edges
    verts = scale * np.array([[1.0, 1.0, 1.0], [1.0, -1.0, -1.0],
                              [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]]) / np.sqrt(8)
    faces = np.array([[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]])
    return Mesh(verts, faces)


class TestLossWeights:
    def test_defaults(self):
        w = LossWeights()
        assert (w.lambda_r, w.lambda_x, w.lambda_y) == (10.0, 1.0, 1.0)
        assert (w.lambda_c, w.lambda_e, w.lambda_b) == (100.0, 10.0, 50.0)
        assert (w.lambda_ce, w.lambda_co, w.lambda_g) == (0.01, 10.0, 100.0)

    def test_for_term_routing(self):
        w = LossWeights(lambda_x=2.0, lambda_y=3.0, lambda_g=7.0)
        assert w.for_term("delta") == 2.0
        assert w.for_term("beta") == 3.0
        assert w.for_term("g") == 7.0
        with pytest.raises(KeyError):
            w.for_term("nope")


class TestBinSpec:
    def test_uniform_construction(self):
        b = BinSpec.uniform(0.0, 12.0, 8)
        assert b.n_bins == 8
        np.testing.assert_allclose(b.widths, 1.5)

    def test_non_increasing_rejected(self):
        with pytest.raises(ValueError):
            BinSpec(np.array([0.0, 1.0, 1.0]))

    def test_bin_of_theta_zero(self):
        # [DERIVED] 8 uniform bins over [-pi, pi): zero falls into bin 4,
        # which covers [0, pi/4).
        b = BinSpec.uniform(-math.pi, math.pi, 8)
        assert b.bin_of(0.0) == 4

    def test_out_of_range_rejected(self):
        b = BinSpec.uniform(0.0, 12.0, 8)
        with pytest.raises(ValueError):
            b.bin_of(12.0)
        with pytest.raises(ValueError):
            b.bin_of(-0.1)

    def test_default_bins_cover_parameters(self):
        bins = default_bins()
        assert set(bins) == {"theta", "theta_l", "beta", "gamma", "d"}
        assert all(b.n_bins == 8 for b in bins.values())


class TestChamfer:
    def test_identical_sets_zero(self, rng):
        pts = rng.uniform(-1, 1, (30, 3))
        value, grad = chamfer(pts, pts.copy())
        assert value == 0.0
        np.testing.assert_array_equal(grad, 0.0)

    def test_hand_case(self):
        # [DERIVED] 1 + 1 = 2; gradient -4 along x on the single pred point.
        value, grad = chamfer(np.array([[0.0, 0, 0]]), np.array([[1.0, 0, 0]]))
        assert value == pytest.approx(2.0)
        np.testing.assert_allclose(grad, [[-4.0, 0.0, 0.0]])

    def test_value_symmetric(self, rng):
        a = rng.uniform(-1, 1, (20, 3))
        b = rng.uniform(-1, 1, (25, 3))
        assert chamfer(a, b)[0] == pytest.approx(chamfer(b, a)[0])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            chamfer(np.empty((0, 3)), np.ones((1, 3)))

    def test_gradient_finite_differences(self, rng):
        checked = 0
        while checked < 20:
            p = rng.uniform(-1, 1, (8, 3))
            g = rng.uniform(-1, 1, (10, 3))
            if nn_margin(p, g) < 1e-3 or nn_margin(g, p) < 1e-3:
                continue
            _, grad = chamfer(p, g)
            fd = central_diff(lambda x: chamfer(x.reshape(8, 3), g)[0],
                              p.ravel())
            assert rel_err(grad.ravel(), fd) < 1e-4
            checked += 1


class TestPartialChamfer:
    def test_subset_gives_zero(self, rng):
        m = rng.uniform(-1, 1, (20, 3))
        s = m[::3]
        value, grads = partial_chamfer([(m, s)])
        assert value == 0.0
        np.testing.assert_array_equal(grads[0], 0.0)

    def test_hand_case(self):
        # [DERIVED] (0 + 1)/2.
        value, _ = partial_chamfer([(np.array([[0.0, 0, 0]]),
                                     np.array([[0.0, 0, 0], [1.0, 0, 0]]))])
        assert value == pytest.approx(0.5)

    def test_asymmetric_vs_chamfer(self):
        # one-directional by design: differs from symmetric chamfer when the
        # mesh set is not covered by the scene set
        m = np.array([[0.0, 0, 0], [5.0, 0, 0]])
        s = np.array([[0.0, 0, 0]])
        lg, _ = partial_chamfer([(m, s)])
        full, _ = chamfer(m, s)
        assert lg == pytest.approx(0.0)
        assert full > 1.0

    def test_object_average(self, rng):
        a = (rng.uniform(-1, 1, (10, 3)), rng.uniform(-1, 1, (12, 3)))
        b = (rng.uniform(-1, 1, (10, 3)), rng.uniform(-1, 1, (9, 3)))
        va, _ = partial_chamfer([a])
        vb, _ = partial_chamfer([b])
        vab, _ = partial_chamfer([a, b])
        assert vab == pytest.approx((va + vb) / 2)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            partial_chamfer([])
        with pytest.raises(ValueError):
            partial_chamfer([(np.ones((1, 3)), np.empty((0, 3)))])

    def test_gradient_finite_differences(self, rng):
        checked = 0
        while checked < 20:
            m = rng.uniform(-1, 1, (8, 3))
            s = rng.uniform(-1, 1, (12, 3))
            if nn_margin(s, m) < 1e-3:
                continue
            _, grads = partial_chamfer([(m, s)])
            fd = central_diff(
                lambda x: partial_chamfer([(x.reshape(8, 3), s)])[0],
                m.ravel())
            assert rel_err(grads[0].ravel(), fd) < 1e-4
            checked += 1


class TestEdgeLoss:
    def test_unit_tetrahedron(self):
        value, _ = edge_loss(tetrahedron())
        assert value == pytest.approx(1.0)

    def test_scaling_quadratic(self, rng):
        m = tetrahedron()
        v1, _ = edge_loss(m)
        v3, _ = edge_loss(m.with_vertices(3.0 * m.vertices))
        assert v3 == pytest.approx(9.0 * v1)

    def test_gradient_finite_differences(self, rng):
        m = icosphere(0)
        verts = m.vertices + rng.normal(0, 0.1, m.vertices.shape)
        _, grad = edge_loss(m.with_vertices(verts))
        fd = central_diff(
            lambda x: edge_loss(m.with_vertices(x.reshape(-1, 3)))[0],
            verts.ravel())
        assert rel_err(grad.ravel(), fd) < 1e-6


class TestBoundaryLoss:
    def test_closed_mesh_zero(self):
        value, grad = boundary_loss(icosphere(1))
        assert value == 0.0
        np.testing.assert_array_equal(grad, 0.0)

    def test_collinear_chain_contributes_zero(self):
        # [DERIVED] triangle fan under a straight chain: the three interior
        # chain vertices sit at their neighbors' midpoints (zero residual);
        # only the two chain ends and the apex contribute.  By hand:
        # r_end = (-/+1.5, 0.5, 0) -> 2.5 each, r_apex = (0, -1, 0) -> 1,
        # mean over 6 boundary vertices = 1.0.
        chain = np.stack([np.arange(5.0), np.zeros(5), np.zeros(5)], axis=1)
        apex = np.array([[2.0, -1.0, 0.0]])
        verts = np.vstack([chain, apex])
        faces = np.array([[i, i + 1, 5] for i in range(4)])
        value, _ = boundary_loss(Mesh(verts, faces))
        assert value == pytest.approx(1.0)

    def test_zigzag_hand_value(self):
        # [DERIVED] square with one vertex lifted: residual of the lifted
        # configuration evaluated by hand below.
        verts = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
                          [0.5, 0.5, -1.0]])
        faces = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
        m = Mesh(verts, faces)
        # boundary loop is the unit square; residual per vertex =
        # v - midpoint(two neighbors); for the square each residual has
        # norm^2 = 0.5, so the mean is 0.5
        value, _ = boundary_loss(m)
        assert value == pytest.approx(0.5)

    def test_gradient_finite_differences(self, rng):
        base = icosphere(1)
        holed = Mesh(base.vertices, base.faces[2:])
        verts = holed.vertices + rng.normal(0, 0.05, holed.vertices.shape)
        m = holed.with_vertices(verts)
        _, grad = boundary_loss(m)
        fd = central_diff(
            lambda x: boundary_loss(holed.with_vertices(x.reshape(-1, 3)))[0],
            verts.ravel())
        assert rel_err(grad.ravel(), fd) < 1e-5


class TestBinaryCrossEntropy:
    def test_perfect_prediction(self):
        value, _ = binary_cross_entropy(np.array([1.0, 0.0, 1.0]),
                                        np.array([1.0, 0.0, 1.0]))
        assert value <= -math.log(1.0 - BCE_EPS) + 1e-12

    def test_uniform_prediction(self):
        value, _ = binary_cross_entropy(np.full(10, 0.5),
                                        (np.arange(10) % 2).astype(float))
        assert value == pytest.approx(math.log(2.0))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            binary_cross_entropy(np.zeros(3), np.zeros(4))

    def test_gradient_finite_differences(self, rng):
        s = rng.uniform(0.05, 0.95, 20)
        y = (rng.uniform(size=20) < 0.5).astype(float)
        _, grad = binary_cross_entropy(s, y)
        fd = central_diff(lambda x: binary_cross_entropy(x, y)[0], s)
        assert rel_err(grad, fd) < 1e-6


class TestClsRegLoss:
    def test_perfect_prediction_near_zero(self):
        bins = BinSpec.uniform(-math.pi, math.pi, 8)
        gt = bins.centers[4]
        logits = np.full(8, -20.0)
        logits[4] = 20.0
        value, _, _ = cls_reg_loss(logits, np.zeros(8), gt, bins)
        assert value < 1e-8

    def test_wrap_handles_out_of_range_angle(self):
        bins = BinSpec.uniform(-math.pi, math.pi, 8)
        v1 = cls_reg_loss(np.zeros(8), np.zeros(8), 0.5, bins, wrap=True)[0]
        v2 = cls_reg_loss(np.zeros(8), np.zeros(8), 0.5 + 2 * math.pi, bins,
                          wrap=True)[0]
        assert v1 == pytest.approx(v2)

    def test_out_of_range_rejected(self):
        bins = BinSpec.uniform(0.0, 12.0, 8)
        with pytest.raises(ValueError):
            cls_reg_loss(np.zeros(8), np.zeros(8), 13.0, bins)

    def test_gradients_finite_differences(self, rng):
        bins = BinSpec.uniform(0.0, 12.0, 8)
        logits = rng.normal(0, 1, 8)
        resid = rng.normal(0, 1, 8)
        gt = 7.3
        _, gl, gr = cls_reg_loss(logits, resid, gt, bins)
        fd_l = central_diff(
            lambda x: cls_reg_loss(x, resid, gt, bins)[0], logits)
        fd_r = central_diff(
            lambda x: cls_reg_loss(logits, x, gt, bins)[0], resid)
        assert rel_err(gl, fd_l) < 1e-6
        assert rel_err(gr, fd_r) < 1e-6


class TestCooperativeLoss:
    def test_identical_zero(self, rng):
        c = rng.uniform(-1, 1, (3, 8, 3))
        value, grad = cooperative_loss(c, c.copy())
        assert value == 0.0
        np.testing.assert_array_equal(grad, 0.0)

    def test_unit_translation(self):
        # [DERIVED] each corner contributes squared error 1.
        c = np.random.default_rng(0).uniform(-1, 1, (1, 8, 3))
        shifted = c + np.array([1.0, 0.0, 0.0])
        value, _ = cooperative_loss(shifted, c)
        assert value == pytest.approx(1.0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            cooperative_loss(np.zeros((1, 8, 3)), np.zeros((2, 8, 3)))

    def test_gradient_finite_differences(self, rng):
        p = rng.uniform(-1, 1, (2, 8, 3))
        g = rng.uniform(-1, 1, (2, 8, 3))
        _, grad = cooperative_loss(p, g)
        fd = central_diff(
            lambda x: cooperative_loss(x.reshape(2, 8, 3), g)[0], p.ravel())
        assert rel_err(grad.ravel(), fd) < 1e-6


class TestJointLoss:
    def test_all_zero_weights(self):
        w = LossWeights(lambda_r=0, lambda_x=0, lambda_y=0, lambda_c=0,
                        lambda_e=0, lambda_b=0, lambda_ce=0, lambda_co=0,
                        lambda_g=0)
        total, _ = joint_loss({"g": 3.0, "c": 4.0}, w)
        assert total == 0.0

    def test_default_weighted_lg(self):
        # [DERIVED] lambda_g = 100 times 0.5.
        total, breakdown = joint_loss({"g": 0.5}, LossWeights())
        assert total == pytest.approx(50.0)
        assert breakdown == {"g": 50.0}

    def test_breakdown_sums_to_total(self, rng):
        from scenefit.losses import JOINT_TERMS
        terms = {name: float(rng.uniform(0, 2)) for name in JOINT_TERMS}
        total, breakdown = joint_loss(terms, LossWeights())
        assert total == pytest.approx(sum(breakdown.values()), rel=1e-12)

    def test_missing_required_reported(self):
        with pytest.raises(ValueError, match="g"):
            joint_loss({"c": 1.0}, LossWeights(), required=("g",))

    def test_unknown_term_rejected(self):
        with pytest.raises(ValueError, match="bogus"):
            joint_loss({"bogus": 1.0}, LossWeights())

    def test_linear_in_weights(self, rng):
        t = {"c": 1.3, "e": 0.4}
        w1 = LossWeights(lambda_c=1.0, lambda_e=1.0)
        w2 = LossWeights(lambda_c=2.0, lambda_e=2.0)
        assert joint_loss(t, w2)[0] == pytest.approx(2 * joint_loss(t, w1)[0])


class TestSoftmax:
    def test_normalizes(self, rng):
        z = rng.normal(0, 10, 12)
        p = softmax(z)
        assert p.sum() == pytest.approx(1.0)
        assert np.all(p >= 0)

    def test_shift_invariant(self, rng):
        z = rng.normal(0, 1, 5)
        np.testing.assert_allclose(softmax(z), softmax(z + 100.0), atol=1e-12)

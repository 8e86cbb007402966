import numpy as np
import pytest

from umaplens.datagen import Dataset, gen_ring
from umaplens.kernel import Kernel, grad_attr
from umaplens.losses import effective_loss
from umaplens.optimizer import (
    DivergedError,
    OptimizerConfig,
    expected_gradient,
    init_embedding,
    optimize,
    realized_gradient,
    run_epoch,
)
from umaplens.simgraph import SimilarityGraph, build_knn_graph


def single_edge_graph(weight=1.0):
    return SimilarityGraph.from_edges(2, [0], [1], [weight])


class TestInitEmbedding:
    def test_data_mode_copies_input(self):
        ds = gen_ring(20, seed=0)
        cfg = OptimizerConfig(init="data")
        emb = init_embedding(ds, cfg)
        assert np.array_equal(emb, ds.points)
        emb[0, 0] += 1.0
        assert emb[0, 0] != ds.points[0, 0]  # independent copy

    def test_data_mode_dimension_mismatch(self):
        ds = Dataset(np.random.default_rng(0).normal(size=(10, 3)))
        with pytest.raises(ValueError, match="dimension"):
            init_embedding(ds, OptimizerConfig(init="data", dim=2))

    def test_pca_matches_eigendecomposition_oracle(self):
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(60, 2)) * np.array([3.0, 1.0])
        ds = Dataset(pts)
        emb = init_embedding(ds, OptimizerConfig(init="pca", dim=2))
        centered = pts - pts.mean(axis=0)
        evals, evecs = np.linalg.eigh(centered.T @ centered)
        order = np.argsort(evals)[::-1]
        oracle = centered @ evecs[:, order]
        # agreement up to per-axis sign
        for c in range(2):
            col = emb[:, c]
            ref = oracle[:, c]
            assert np.allclose(col, ref, atol=1e-8) or np.allclose(
                col, -ref, atol=1e-8
            )

    def test_pca_sign_convention_deterministic(self):
        rng = np.random.default_rng(2)
        ds = Dataset(rng.normal(size=(40, 5)))
        a = init_embedding(ds, OptimizerConfig(init="pca", dim=2))
        b = init_embedding(ds, OptimizerConfig(init="pca", dim=2))
        assert np.array_equal(a, b)

    def test_random_mode_bounds_and_determinism(self):
        ds = gen_ring(30, seed=3)
        cfg = OptimizerConfig(init="random", seed=17)
        a = init_embedding(ds, cfg)
        b = init_embedding(ds, cfg)
        assert np.array_equal(a, b)
        assert a.min() >= -10.0
        assert a.max() <= 10.0
        assert a.shape == (30, 2)


class TestRunEpoch:
    def test_sure_edge_moves_both_points_one_attr_step(self):
        g = single_edge_graph(1.0)
        kern = Kernel(1.0, 1.0)
        emb = np.array([[0.0, 0.0], [2.0, 0.0]])
        before = emb.copy()
        cfg = OptimizerConfig(m=0, n_epochs=1, alpha0=0.5, lr_decay=False, seed=0)
        rng = np.random.default_rng(0)
        out, log = run_epoch(g, emb, kern, cfg, rng, alpha=0.5)
        # ordered pairs (0,1) and (1,0) both fire at mu=1: two symmetric steps
        assert log.n_fired == 2
        step1 = 0.5 * grad_attr(kern, before[0], before[1])
        first = before.copy()
        first[0] -= step1
        first[1] += step1
        step2 = 0.5 * grad_attr(kern, first[1], first[0])
        first[1] -= step2
        first[0] += step2
        np.testing.assert_array_equal(out, first)

    def test_no_edges_means_no_motion(self):
        g = SimilarityGraph.from_edges(
            3, np.empty(0, int), np.empty(0, int), np.empty(0)
        )
        emb = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        before = emb.copy()
        cfg = OptimizerConfig(m=5, n_epochs=1, seed=0)
        _, log = run_epoch(g, emb, Kernel(1.0, 1.0), cfg, np.random.default_rng(1))
        assert np.array_equal(emb, before)
        assert log.n_fired == 0

    def test_negative_draw_grouping(self):
        g = single_edge_graph(1.0)
        cfg = OptimizerConfig(m=3, n_epochs=1, seed=0)
        emb = np.array([[0.0, 0.0], [2.0, 0.0]])
        _, log = run_epoch(g, emb, Kernel(1.0, 1.0), cfg, np.random.default_rng(2))
        assert log.neg_heads.shape[0] == 3 * log.n_fired
        # negatives grouped per fire, heads follow the fired edge heads
        np.testing.assert_array_equal(log.neg_heads, np.repeat(log.fired_heads, 3))

    def test_negative_targets_uniform_over_points(self):
        # conditioned on a fire, each point is drawn m/n times in expectation
        n = 8
        g = SimilarityGraph.from_edges(n, [0], [1], [1.0])
        cfg = OptimizerConfig(m=4, n_epochs=1, seed=0)
        emb = np.random.default_rng(0).normal(size=(n, 2))
        rng = np.random.default_rng(6)
        counts = np.zeros(n)
        epochs = 4000
        for _ in range(epochs):
            _, log = run_epoch(g, emb, Kernel(1.0, 1.0), cfg, rng, alpha=0.0)
            np.add.at(counts, log.neg_tails, 1.0)
        draws = counts.sum()
        p = 1.0 / n
        se = np.sqrt(draws * p * (1 - p))
        assert (np.abs(counts - draws * p) <= 4 * se).all()

    def test_fire_rate_tracks_weight(self):
        g = single_edge_graph(0.3)
        cfg = OptimizerConfig(m=0, n_epochs=1, seed=0)
        emb = np.array([[0.0, 0.0], [2.0, 0.0]])
        rng = np.random.default_rng(3)
        fires = sum(
            run_epoch(g, emb, Kernel(1.0, 1.0), cfg, rng, alpha=0.0)[1].n_fired
            for _ in range(3000)
        )
        # 6000 ordered-pair trials at p=0.3; 3 binomial SEs
        se = np.sqrt(6000 * 0.3 * 0.7)
        assert abs(fires - 1800) <= 3 * se


class TestOptimize:
    def test_bit_identical_for_fixed_seed(self):
        ds = gen_ring(40, seed=5)
        g = build_knn_graph(ds, 5)
        kern = Kernel.from_min_dist()
        cfg = OptimizerConfig(m=5, n_epochs=25, seed=11)
        emb1, rec1 = optimize(g, ds, kern, cfg)
        emb2, rec2 = optimize(g, ds, kern, cfg)
        assert np.array_equal(emb1, emb2)
        assert rec1 == rec2

    def test_seed_changes_trajectory(self):
        ds = gen_ring(40, seed=5)
        g = build_knn_graph(ds, 5)
        kern = Kernel.from_min_dist()
        emb1, _ = optimize(g, ds, kern, OptimizerConfig(n_epochs=10, seed=1))
        emb2, _ = optimize(g, ds, kern, OptimizerConfig(n_epochs=10, seed=2))
        assert not np.array_equal(emb1, emb2)

    def test_random_edge_order_is_deterministic_too(self):
        ds = gen_ring(40, seed=6)
        g = build_knn_graph(ds, 5)
        kern = Kernel.from_min_dist()
        cfg = OptimizerConfig(n_epochs=10, seed=4, edge_order="random")
        emb1, _ = optimize(g, ds, kern, cfg)
        emb2, _ = optimize(g, ds, kern, cfg)
        assert np.array_equal(emb1, emb2)

    def test_records_cover_initial_and_final(self):
        ds = gen_ring(30, seed=7)
        g = build_knn_graph(ds, 4)
        cfg = OptimizerConfig(n_epochs=13, seed=0, loss_every=5)
        _, records = optimize(g, ds, Kernel.from_min_dist(), cfg)
        assert [r.epoch for r in records] == [0, 5, 10, 13]
        assert records[0].actual == (0.0, 0.0, 0.0)

    def test_loss_every_zero_keeps_endpoints_only(self):
        ds = gen_ring(30, seed=7)
        g = build_knn_graph(ds, 4)
        cfg = OptimizerConfig(n_epochs=9, seed=0, loss_every=0)
        _, records = optimize(g, ds, Kernel.from_min_dist(), cfg)
        assert [r.epoch for r in records] == [0, 9]

    def test_divergence_aborts_with_diagnostic(self):
        ds = gen_ring(30, seed=8)
        g = build_knn_graph(ds, 4)
        cfg = OptimizerConfig(n_epochs=5, alpha0=1e308, seed=0)
        with pytest.raises(DivergedError, match="epoch"):
            optimize(g, ds, Kernel.from_min_dist(), cfg)

    def test_on_epoch_callback_sees_every_epoch(self):
        ds = gen_ring(30, seed=9)
        g = build_knn_graph(ds, 4)
        seen = []
        optimize(
            g,
            ds,
            Kernel.from_min_dist(),
            OptimizerConfig(n_epochs=6, seed=0, loss_every=0),
            on_epoch=lambda e, emb: seen.append(e),
        )
        assert seen == [1, 2, 3, 4, 5, 6]


class TestExpectedGradient:
    def test_two_point_single_edge_closed_form(self):
        # sure edge, no negatives: expected update is -2 * attr gradient
        g = single_edge_graph(1.0)
        kern = Kernel(1.0, 1.0).unguarded()
        emb = np.array([[0.0, 0.0], [1.0, 0.0]])
        eg = expected_gradient(g, emb, kern, m=0, i=0)
        manual = -2.0 * grad_attr(kern, emb[0], emb[1])
        np.testing.assert_allclose(eg, manual, rtol=1e-12)

    @pytest.mark.parametrize("push_tail", [False, True])
    def test_matches_mean_realized_gradient(self, push_tail):
        ds = gen_ring(12, radius=2.0, half_width=0.3, seed=5)
        g = build_knn_graph(ds, 4)
        kern = Kernel(1.0, 1.0)
        kern_u = kern.unguarded()
        rng = np.random.default_rng(123)
        emb = ds.points + rng.normal(0, 0.3, ds.points.shape)
        cfg = OptimizerConfig(m=3, n_epochs=1, seed=0, push_tail=push_tail)
        n_rep = 3000
        acc = np.zeros_like(emb)
        sq = np.zeros_like(emb)
        for _ in range(n_rep):
            _, log = run_epoch(g, emb, kern, cfg, rng, alpha=0.0)
            r = realized_gradient(log, emb, kern_u, push_tail=push_tail)
            acc += r
            sq += r * r
        mean = acc / n_rep
        se = np.sqrt(np.maximum(sq / n_rep - mean**2, 0) / (n_rep - 1))
        expected = np.array(
            [
                expected_gradient(g, emb, kern_u, m=3, i=i, push_tail=push_tail)
                for i in range(g.n)
            ]
        )
        z = np.abs(mean - expected) / np.where(se > 0, se, 1.0)
        assert z.max() <= 3.5

    def test_push_tail_field_is_gradient_of_effective_loss(self):
        ds = gen_ring(10, radius=2.0, half_width=0.4, seed=6)
        g = build_knn_graph(ds, 3)
        kern = Kernel(1.577, 0.895).unguarded()
        rng = np.random.default_rng(7)
        emb = ds.points + rng.normal(0, 0.2, ds.points.shape)
        m = 4
        h = 1e-6
        for i in (0, 3, 7):
            eg = expected_gradient(g, emb, kern, m=m, i=i, push_tail=True)
            fd = np.zeros(2)
            for c in range(2):
                hi = emb.copy()
                hi[i, c] += h
                lo = emb.copy()
                lo[i, c] -= h
                fd[c] = (
                    effective_loss(g, hi, kern, m, clamp=False).total
                    - effective_loss(g, lo, kern, m, clamp=False).total
                ) / (2 * h)
            # expected update direction is minus the loss gradient
            np.testing.assert_allclose(eg, -fd, rtol=1e-6, atol=1e-10)

    def test_plain_field_differs_from_loss_gradient_generically(self):
        g = SimilarityGraph.from_edges(3, [0, 0], [1, 2], [0.8, 0.8])
        kern = Kernel(1.0, 1.0).unguarded()
        emb = np.array([[0.0, 0.0], [1.3, 0.2], [-0.4, 1.1]])
        eg = expected_gradient(g, emb, kern, m=5, i=1, push_tail=False)
        h = 1e-6
        fd = np.zeros(2)
        for c in range(2):
            hi = emb.copy()
            hi[1, c] += h
            lo = emb.copy()
            lo[1, c] -= h
            fd[c] = (
                effective_loss(g, hi, kern, 5, clamp=False).total
                - effective_loss(g, lo, kern, 5, clamp=False).total
            ) / (2 * h)
        assert np.abs(eg + fd).max() > 1e-3


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(m=-1),
            dict(n_epochs=0),
            dict(alpha0=0.0),
            dict(init="spectral"),
            dict(edge_order="sorted"),
            dict(loss_every=-2),
        ],
    )
    def test_rejects_bad_config(self, kwargs):
        with pytest.raises(ValueError):
            OptimizerConfig(**kwargs)

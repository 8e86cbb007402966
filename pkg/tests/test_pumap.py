import itertools

import numpy as np
import pytest

from umaplens.datagen import gen_ring
from umaplens.kernel import Kernel
from umaplens.pumap import (
    BatchSimConfig,
    assemble_batch,
    batch_loss,
    mc_batch_loss,
    mc_expectations,
    negative_pairs,
    pair_count_expectations,
    pumap_effective_loss,
)
from umaplens.simgraph import SimilarityGraph, build_knn_graph


def tiny_graph():
    # 3 nodes, edges (0,1) w=0.6 and (1,2) w=0.3; degrees (0.6, 0.9, 0.3)
    return SimilarityGraph.from_edges(3, [0, 1], [1, 2], [0.6, 0.3])


def enumerate_pair_counts(graph, b, m):
    """Exhaustive oracle: average P and N over every batch and permutation."""
    heads, tails, w = graph.ordered_edges()
    probs = w / (2.0 * graph.total_weight)
    n = graph.n
    ep = np.zeros((n, n))
    en = np.zeros((n, n))
    for batch in itertools.product(range(len(probs)), repeat=b):
        p_batch = float(np.prod(probs[list(batch)]))
        bh = heads[list(batch)]
        bt = tails[list(batch)]
        for i, j in zip(bh, bt):
            ep[i, j] += p_batch
        rep_h = np.repeat(bh, m)
        rep_t = np.repeat(bt, m)
        counts = np.zeros((n, n))
        n_perm = 0
        for perm in itertools.permutations(range(m * b)):
            n_perm += 1
            for beta in range(m * b):
                counts[rep_h[beta], rep_t[perm[beta]]] += 1
        en += p_batch * counts / n_perm
    return ep, en


class TestClosedFormsAgainstEnumeration:
    def test_exact_expectations_small_instance(self):
        g = tiny_graph()
        b, m = 2, 2
        ep_oracle, en_oracle = enumerate_pair_counts(g, b, m)
        ep, en = pair_count_expectations(g, b, m)
        np.testing.assert_allclose(ep, ep_oracle, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(en, en_oracle, rtol=1e-12, atol=1e-12)

    def test_product_form_misses_same_edge_term_on_positive_pairs(self):
        # the product approximation is exact exactly where mu_ij = 0
        g = tiny_graph()
        b, m = 2, 2
        _, en_oracle = enumerate_pair_counts(g, b, m)
        _, en_prod = pair_count_expectations(g, b, m, same_edge_term=False)
        mu = g.to_dense()
        np.testing.assert_allclose(en_prod[mu == 0], en_oracle[mu == 0], rtol=1e-12)
        gap = en_oracle - en_prod
        np.testing.assert_allclose(gap, m * mu / (2 * g.total_weight), atol=1e-12)
        assert gap[mu > 0].min() > 0

    def test_ep_closed_form_three_edges(self):
        g = SimilarityGraph.from_edges(4, [0, 1, 2], [1, 2, 3], [0.5, 0.25, 0.25])
        ep, _ = pair_count_expectations(g, b=4, m=1)
        mu_e = g.total_weight  # 1.0
        assert ep[0, 1] == pytest.approx(4 * 0.5 / 2.0)
        assert ep[1, 0] == pytest.approx(4 * 0.5 / 2.0)
        assert ep[2, 3] == pytest.approx(4 * 0.25 / (2 * mu_e))


class TestAssembleBatch:
    def test_single_edge_graph_draws_only_that_edge(self):
        g = SimilarityGraph.from_edges(2, [0], [1], [0.4])
        cfg = BatchSimConfig(batch_size=16, m=1, trials=1, seed=0)
        heads, tails = assemble_batch(g, cfg, np.random.default_rng(0))
        for h, t in zip(heads, tails):
            assert {int(h), int(t)} == {0, 1}

    def test_draw_frequencies_match_probabilities(self):
        g = tiny_graph()
        rng = np.random.default_rng(1)
        cfg = BatchSimConfig(batch_size=100_000, m=1, trials=1, seed=0)
        heads, tails = assemble_batch(g, cfg, rng)
        counts = np.zeros((3, 3))
        np.add.at(counts, (heads, tails), 1.0)
        mu = g.to_dense()
        probs = mu / (2 * g.total_weight)
        for i, j in zip(*np.nonzero(mu)):
            p = probs[i, j]
            se = np.sqrt(100_000 * p * (1 - p))
            assert abs(counts[i, j] - 100_000 * p) <= 3 * se

    def test_empty_graph_rejected(self):
        g = SimilarityGraph.from_edges(3, np.empty(0, int), np.empty(0, int), np.empty(0))
        with pytest.raises(ValueError, match="empty"):
            assemble_batch(g, BatchSimConfig(2, 1, 1), np.random.default_rng(0))


class TestNegativePairs:
    def test_b_equals_one_reproduces_the_edge(self):
        rng = np.random.default_rng(2)
        nh, nt = negative_pairs(np.array([7]), np.array([3]), m=5, rng=rng)
        assert (nh == 7).all()
        assert (nt == 3).all()
        assert nh.shape[0] == 5

    def test_pair_count_conservation(self):
        rng = np.random.default_rng(3)
        heads = np.array([0, 1, 2, 1])
        tails = np.array([1, 2, 0, 0])
        nh, nt = negative_pairs(heads, tails, m=3, rng=rng)
        assert nh.shape[0] == 12
        # heads preserved with multiplicity m, tails permuted as a multiset
        np.testing.assert_array_equal(np.sort(nh), np.sort(np.repeat(heads, 3)))
        np.testing.assert_array_equal(np.sort(nt), np.sort(np.repeat(tails, 3)))

    def test_conditional_hypergeometric_mean(self):
        # fixed batch: E_pi(N_ij) = H_i * T_j / (m b)
        rng = np.random.default_rng(4)
        heads = np.array([0, 0, 1, 2])
        tails = np.array([1, 2, 2, 1])
        m, b = 2, 4
        trials = 40_000
        counts = np.zeros((3, 3))
        for _ in range(trials):
            nh, nt = negative_pairs(heads, tails, m, rng)
            np.add.at(counts, (nh, nt), 1.0)
        mean = counts / trials
        h_cnt = m * np.bincount(heads, minlength=3)
        t_cnt = m * np.bincount(tails, minlength=3)
        expected = np.outer(h_cnt, t_cnt) / (m * b)
        # loose 4-SE style bound using binomial-ish variance per cell
        se = np.sqrt(np.maximum(expected, 0.05) / trials)
        assert (np.abs(mean - expected) <= 4 * se + 0.01).all()


@pytest.fixture(scope="module")
def setup():
    ds = gen_ring(20, seed=3)
    graph = build_knn_graph(ds, 4)
    # seeded MC check over 400 cells: bound leaves headroom for the
    # multiple-comparison maximum (max |z| ~ 3.7 at this budget)
    cfg = BatchSimConfig(batch_size=16, m=3, trials=4000, seed=0)
    return graph, cfg, mc_expectations(graph, cfg)


class TestMcExpectations:

    def test_mc_matches_closed_form_p(self, setup):
        graph, cfg, est = setup
        cf_p, _ = pair_count_expectations(graph, cfg.batch_size, cfg.m)
        se = np.where(est.se_p > 0, est.se_p, np.inf)
        assert (np.abs(est.mean_p - cf_p) <= 4.0 * se).all()

    def test_mc_matches_closed_form_n(self, setup):
        graph, cfg, est = setup
        _, cf_n = pair_count_expectations(graph, cfg.batch_size, cfg.m)
        se = np.where(est.se_n > 0, est.se_n, np.inf)
        assert (np.abs(est.mean_n - cf_n) <= 4.0 * se).all()

    def test_totals_conserved_in_means(self, setup):
        graph, cfg, est = setup
        assert est.mean_p.sum() == pytest.approx(cfg.batch_size, rel=1e-12)
        assert est.mean_n.sum() == pytest.approx(cfg.batch_size * cfg.m, rel=1e-12)

    def test_multinomial_covariance_spot_check(self):
        g = tiny_graph()
        b, trials = 8, 30_000
        rng = np.random.default_rng(11)
        cfg = BatchSimConfig(batch_size=b, m=1, trials=1, seed=0)
        p01 = np.empty(trials)
        p12 = np.empty(trials)
        for t in range(trials):
            heads, tails = assemble_batch(g, cfg, rng)
            p01[t] = np.sum((heads == 0) & (tails == 1))
            p12[t] = np.sum((heads == 1) & (tails == 2))
        mu_e = g.total_weight
        cov_expected = -b * (0.6 / (2 * mu_e)) * (0.3 / (2 * mu_e))
        cov_emp = np.cov(p01, p12)[0, 1]
        # standard error of a sample covariance, normal approximation
        se = np.sqrt(
            (p01.var() * p12.var() + cov_expected**2) / trials
        )
        assert cov_emp < 0
        assert abs(cov_emp - cov_expected) <= 3 * se


class TestBatchLoss:
    kern = Kernel(1.0, 1.0)

    def test_perfect_configuration_scores_zero(self):
        # batch pairs coincide (phi = 1), negatives infinitely apart (phi ~ 0)
        emb = np.array([[0.0, 0.0], [0.0, 0.0], [1e8, 1e8]])
        heads = np.array([0, 1])
        tails = np.array([1, 0])
        nh = np.array([0, 1])
        nt = np.array([2, 2])
        assert batch_loss(heads, tails, nh, nt, emb, self.kern, m=1, b=2) == 0.0

    def test_linearity_in_event_sums(self):
        rng = np.random.default_rng(5)
        emb = rng.normal(size=(6, 2)) * 2
        heads = np.array([0, 1, 2])
        tails = np.array([1, 2, 3])
        nh = np.array([0, 1, 2])
        nt = np.array([4, 5, 3])
        one = batch_loss(heads, tails, nh, nt, emb, self.kern, m=1, b=3)
        two = batch_loss(
            np.tile(heads, 2), np.tile(tails, 2), np.tile(nh, 2), np.tile(nt, 2),
            emb, self.kern, m=1, b=3,
        )
        assert two == pytest.approx(2 * one, rel=1e-12)

    def test_b_two_prefactor(self):
        # with b=2 the product-form repulsive weight carries m(b-1)/b = m/2
        g = tiny_graph()
        rng = np.random.default_rng(6)
        emb = rng.normal(size=(3, 2))
        cfg = BatchSimConfig(batch_size=2, m=4, trials=1, seed=0)
        from umaplens.losses import _log, embedding_similarities

        nu = embedding_similarities(emb, self.kern)
        la = -_log(nu, True)
        np.fill_diagonal(la, 0.0)
        lr = -_log(1 - nu, True)
        mu = g.to_dense()
        mu_e = g.total_weight
        d = g.degrees
        m, b = 4, 2
        rep_weight = m * (b - 1) / b  # = m/2 at b=2
        manual = (
            np.sum(mu * la)
            + np.sum(rep_weight * np.outer(d, d) / (2 * mu_e) * lr)
        ) / (2 * (m + 1) * mu_e)
        val = pumap_effective_loss(
            g, emb, self.kern, cfg, include_same_edge_term=False
        )
        assert val == pytest.approx(manual, rel=1e-12)


class TestPumapEffectiveLoss:
    def test_matches_mc_mean(self):
        ds = gen_ring(20, seed=3)
        graph = build_knn_graph(ds, 4)
        kern = Kernel.from_min_dist()
        emb = ds.points.copy()
        cfg = BatchSimConfig(batch_size=16, m=3, trials=4000, seed=13)
        cf = pumap_effective_loss(graph, emb, kern, cfg)
        mc, se = mc_batch_loss(graph, emb, kern, cfg)
        assert abs(mc - cf) <= 3 * se

    def test_product_form_understates_on_positive_pairs(self):
        ds = gen_ring(20, seed=3)
        graph = build_knn_graph(ds, 4)
        kern = Kernel.from_min_dist()
        emb = ds.points.copy()
        cfg = BatchSimConfig(batch_size=16, m=3, trials=1, seed=0)
        exact = pumap_effective_loss(graph, emb, kern, cfg)
        approx = pumap_effective_loss(
            graph, emb, kern, cfg, include_same_edge_term=False
        )
        assert exact > approx

    def test_total_repulsive_weight_identity(self):
        # ordered-pair sum of m((b-1)/b) d_i d_j / (2 mu(E)) == 2 m mu(E) (b-1)/b
        ds = gen_ring(30, seed=4)
        graph = build_knn_graph(ds, 5)
        m, b = 5, 32
        d = graph.degrees
        mu_e = graph.total_weight
        total = np.sum(m * (b - 1) / b * np.outer(d, d) / (2 * mu_e))
        assert total == pytest.approx(2 * m * mu_e * (b - 1) / b, rel=1e-12)


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [dict(batch_size=1, m=1, trials=1), dict(batch_size=2, m=0, trials=1),
         dict(batch_size=2, m=1, trials=0)],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            BatchSimConfig(**kwargs)

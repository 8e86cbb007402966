"""Batch-assembled negative sampling and its closed-form expectations.

The batch optimizer variant draws b edges per step from the categorical
distribution over ordered pairs with probabilities mu_ij / (2 mu(E)),
repeats the sampled heads and tails m times each, and pairs the
repeated heads with a uniformly permuted copy of the repeated tails to
form m*b negative pairs.  The per-step loss is

    L = (1/((m+1) b)) * [ sum_pairs La + sum_negative_pairs Lr ]

with the same clamped logs as the per-edge losses.  This module
simulates that process over a fixed embedding table (no parametric
model is trained; the sampling expectations do not depend on how the
embeddings are produced) and compares Monte Carlo estimates against the
closed forms.

With P_ij the number of times ordered pair (i, j) lands in the batch
and N_ij the number of negative pairs (i, j):

    E(P_ij) = b * mu_ij / (2 mu(E))
    E(N_ij) = m * mu_ij / (2 mu(E))  +  m (b-1) d_i d_j / (4 mu(E)^2)

P is multinomial, so distinct entries have covariance
-b * mu_ij * mu_kl / (4 mu(E)^2).  Conditioned on a batch, N_ij is
hypergeometric with mean H_i T_j / (m b) where H_i and T_j count i
among the repeated heads and j among the repeated tails.  The first
term of E(N_ij) is the diagonal (same batch entry heads AND tails the
pair) second-moment contribution; dropping it leaves the product form

    E(N_ij) ~= m (b-1) d_i d_j / (4 mu(E)^2)

which is exact on pairs with mu_ij = 0 and understates positive pairs
by m * mu_ij / (2 mu(E)), a term that vanishes at production scale
(it is m/b of the attractive weight) but is detectable at desk-scale
Monte Carlo precision.  The same choice surfaces in the effective-loss
closed form via include_same_edge_term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel import Kernel
from .losses import _log
from .simgraph import SimilarityGraph

__all__ = [
    "BatchSimConfig",
    "PairCountEstimates",
    "assemble_batch",
    "negative_pairs",
    "pair_count_expectations",
    "mc_expectations",
    "batch_loss",
    "pumap_effective_loss",
    "mc_batch_loss",
]


@dataclass(frozen=True)
class BatchSimConfig:
    """Batch size, negative-sample rate and Monte Carlo budget."""

    batch_size: int  # b; not to be confused with the kernel shape parameter
    m: int
    trials: int
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass(frozen=True)
class PairCountEstimates:
    """Monte Carlo means and standard errors of P_ij and N_ij, per ordered pair."""

    mean_p: np.ndarray  # (n, n)
    mean_n: np.ndarray
    se_p: np.ndarray
    se_n: np.ndarray
    trials: int


def _ordered_pair_arrays(graph: SimilarityGraph):
    heads, tails, w = graph.ordered_edges()
    if w.size == 0:
        raise ValueError("cannot sample from an empty graph")
    return heads, tails, w / (2.0 * graph.total_weight)


def assemble_batch(
    graph: SimilarityGraph, config: BatchSimConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw b ordered pairs i.i.d. proportionally to their weights."""
    heads, tails, probs = _ordered_pair_arrays(graph)
    idx = rng.choice(heads.shape[0], size=config.batch_size, p=probs)
    return heads[idx], tails[idx]


def negative_pairs(
    heads: np.ndarray, tails: np.ndarray, m: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Repeat heads and tails m times and permute the tails uniformly.

    Returns the m*b negative pairs; with b=1 every pair is the original
    edge regardless of the permutation.
    """
    rep_h = np.repeat(heads, m)
    rep_t = np.repeat(tails, m)
    return rep_h, rep_t[rng.permutation(rep_t.shape[0])]


def pair_count_expectations(
    graph: SimilarityGraph, b: int, m: int, same_edge_term: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form E(P_ij) and E(N_ij) as dense ordered-pair matrices.

    same_edge_term=False drops the m*mu_ij/(2 mu(E)) contribution from
    E(N_ij), leaving the product approximation (see module docstring).
    """
    mu = graph.to_dense()
    mu_e = graph.total_weight
    d = graph.degrees
    ep = b * mu / (2.0 * mu_e)
    en = m * (b - 1) * np.outer(d, d) / (4.0 * mu_e**2)
    if same_edge_term:
        en = en + m * mu / (2.0 * mu_e)
    return ep, en


def mc_expectations(graph: SimilarityGraph, config: BatchSimConfig) -> PairCountEstimates:
    """Estimate E(P_ij) and E(N_ij) over independent (batch, permutation) draws."""
    n = graph.n
    rng = np.random.default_rng(config.seed)
    sum_p = np.zeros((n, n))
    sumsq_p = np.zeros((n, n))
    sum_n = np.zeros((n, n))
    sumsq_n = np.zeros((n, n))
    b, m = config.batch_size, config.m
    for _ in range(config.trials):
        heads, tails = assemble_batch(graph, config, rng)
        p = np.zeros((n, n))
        np.add.at(p, (heads, tails), 1.0)
        nh, nt = negative_pairs(heads, tails, m, rng)
        cnt = np.zeros((n, n))
        np.add.at(cnt, (nh, nt), 1.0)
        sum_p += p
        sumsq_p += p**2
        sum_n += cnt
        sumsq_n += cnt**2
    t = config.trials
    mean_p = sum_p / t
    mean_n = sum_n / t
    if t > 1:
        var_p = np.maximum(sumsq_p - t * mean_p**2, 0.0) / (t - 1)
        var_n = np.maximum(sumsq_n - t * mean_n**2, 0.0) / (t - 1)
    else:
        var_p = np.zeros((n, n))
        var_n = np.zeros((n, n))
    return PairCountEstimates(
        mean_p=mean_p,
        mean_n=mean_n,
        se_p=np.sqrt(var_p / t),
        se_n=np.sqrt(var_n / t),
        trials=t,
    )


def batch_loss(
    heads: np.ndarray,
    tails: np.ndarray,
    neg_heads: np.ndarray,
    neg_tails: np.ndarray,
    embedding: np.ndarray,
    kernel: Kernel,
    m: int,
    b: int,
    clamp: bool = True,
) -> float:
    """Normalized loss of one (batch, permutation) draw.

    (1/((m+1)b)) times the attractive energies of the batch pairs plus
    the repulsive energies of the negative pairs.  Negative pairs that
    collapse to a single point keep their clamped repulsive energy
    -log(clamp), matching the closed-form expectation, which sums over
    the full ordered-pair grid including the diagonal.
    """
    emb = np.asarray(embedding, dtype=np.float64)

    def sim(h, t):
        diff = emb[h] - emb[t]
        dsq = np.sum(diff**2, axis=1)
        return 1.0 / (1.0 + kernel.a * dsq**kernel.b)

    attr = float(np.sum(-_log(sim(heads, tails), clamp)))
    rep = float(np.sum(-_log(1.0 - sim(neg_heads, neg_tails), clamp)))
    return (attr + rep) / ((m + 1) * b)


def pumap_effective_loss(
    graph: SimilarityGraph,
    embedding: np.ndarray,
    kernel: Kernel,
    config: BatchSimConfig,
    clamp: bool = True,
    include_same_edge_term: bool = True,
) -> float:
    """Closed-form expectation of batch_loss over a fixed embedding.

    Evaluates (1/((m+1)b)) sum_{i,j} E(P_ij) La_ij + E(N_ij) Lr_ij over
    the full ordered-pair grid (the diagonal repulsive terms use the
    clamped energy at distance zero).  include_same_edge_term=False
    swaps in the product approximation of E(N), whose repulsive weight
    per ordered pair is m ((b-1)/b) d_i d_j / (2 mu(E)) after the
    prefactor is absorbed.
    """
    from .losses import embedding_similarities

    b, m = config.batch_size, config.m
    ep, en = pair_count_expectations(graph, b, m, same_edge_term=include_same_edge_term)
    nu = embedding_similarities(embedding, kernel)
    la = -_log(nu, clamp)
    lr = -_log(1.0 - nu, clamp)
    np.fill_diagonal(la, 0.0)  # E(P) is zero on the diagonal anyway
    return float(np.sum(ep * la) + np.sum(en * lr)) / ((m + 1) * b)


def mc_batch_loss(
    graph: SimilarityGraph,
    embedding: np.ndarray,
    kernel: Kernel,
    config: BatchSimConfig,
    clamp: bool = True,
) -> tuple[float, float]:
    """Monte Carlo mean and standard error of batch_loss."""
    rng = np.random.default_rng(config.seed)
    vals = np.empty(config.trials)
    for t in range(config.trials):
        heads, tails = assemble_batch(graph, config, rng)
        nh, nt = negative_pairs(heads, tails, config.m, rng)
        vals[t] = batch_loss(
            heads, tails, nh, nt, embedding, kernel, config.m, config.batch_size, clamp
        )
    se = float(vals.std(ddof=1) / np.sqrt(config.trials)) if config.trials > 1 else 0.0
    return float(vals.mean()), se

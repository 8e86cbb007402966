"""Loss functionals and diagnostics for the sampling optimizer.

Three losses are tracked, all in nats and all built from the per-pair
energies La_ij = -log(nu_ij) and Lr_ij = -log(1 - nu_ij) where nu_ij is
the embedding similarity phi(|e_i - e_j|):

  purported   2 * sum_{i<j}  mu_ij * La_ij + (1 - mu_ij) * Lr_ij
              the stated binary-cross-entropy objective, minimized when
              embedding similarities reproduce the input similarities

  effective   2 * sum_{i<j}  mu_ij * La_ij + w_ij * Lr_ij,
              w_ij = (d_i + d_j) * m / (2n)
              the closed-form expectation of what one optimizer epoch
              actually accumulates under per-edge Bernoulli sampling
              with m uniform negative samples

  actual      the realized epoch loss: La summed over fired ordered
              edges plus Lr summed over drawn negative pairs

Every log is clamped as log(min(x + 1e-4, 1)) so the three losses and
the weighted-BCE identity are exact as implemented; pass clamp=False
for smooth-analysis uses (finite differencing).  Negative-sample events
that pair a point with itself carry zero loss, matching the zero
gradient the optimizer applies there; that convention makes the
expectation identity E(actual) == effective exact.

The per-pair minimizer of the effective loss is the target similarity

    nu*_ij = mu_ij / (mu_ij + w_ij)

which is 0 where mu_ij = 0 and approaches 1 wherever mu_ij > 0 once
w_ij is small, i.e. the optimizer steers toward a near-binarized copy
of the input similarities.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from .kernel import Kernel, phi_from_sqdist
from .simgraph import SimilarityGraph

if TYPE_CHECKING:  # pragma: no cover
    from .optimizer import EpochSampleLog

__all__ = [
    "CLAMP_EPS",
    "LossTriple",
    "LossRecord",
    "clamped_log",
    "embedding_similarities",
    "pair_repulsion_weights",
    "purported_loss",
    "purported_loss_from_similarities",
    "effective_loss",
    "actual_epoch_loss",
    "target_similarities",
    "weighted_bce_decomposition",
    "repulsion_weight_stats",
    "cross_partial_asymmetry",
    "similarity_histograms",
    "write_loss_csv",
    "read_loss_csv",
]

CLAMP_EPS = 1e-4

LOSS_CSV_HEADER = (
    "epoch,purported_attr,purported_rep,purported_total,"
    "effective_attr,effective_rep,effective_total,"
    "actual_attr,actual_rep,actual_total"
)


class LossTriple(NamedTuple):
    attr: float
    rep: float
    total: float


@dataclass(frozen=True)
class LossRecord:
    """Per-epoch attractive/repulsive/total values of the three losses."""

    epoch: int
    purported: LossTriple
    effective: LossTriple
    actual: LossTriple

    def __post_init__(self):
        for triple in (self.purported, self.effective, self.actual):
            if not all(np.isfinite(v) for v in triple):
                raise ValueError("loss values must be finite")
            if abs(triple.total - (triple.attr + triple.rep)) > 1e-9 * max(
                1.0, abs(triple.total)
            ):
                raise ValueError("total must equal attr + rep")


def clamped_log(x):
    """log(min(x + 1e-4, 1)); the clamp guards log(0) at similarity 0 or 1."""
    x = np.asarray(x, dtype=np.float64)
    out = np.log(np.minimum(x + CLAMP_EPS, 1.0))
    return out if out.ndim else float(out)


def _log(x, clamp: bool):
    if clamp:
        return clamped_log(x)
    return np.log(x)


def embedding_similarities(embedding: np.ndarray, kernel: Kernel) -> np.ndarray:
    """Dense (n, n) matrix of phi(|e_i - e_j|); diagonal is phi(0) = 1."""
    emb = np.asarray(embedding, dtype=np.float64)
    sq = np.sum(emb**2, axis=1)
    dsq = sq[:, None] + sq[None, :] - 2.0 * (emb @ emb.T)
    np.maximum(dsq, 0.0, out=dsq)
    return phi_from_sqdist(kernel, dsq)


def pair_repulsion_weights(graph: SimilarityGraph, m: int) -> np.ndarray:
    """Per-pair effective repulsion weights (d_i + d_j) * m / (2n), zero diagonal."""
    d = graph.degrees
    w = (d[:, None] + d[None, :]) * (m / (2.0 * graph.n))
    np.fill_diagonal(w, 0.0)
    return w


def purported_loss_from_similarities(
    mu: np.ndarray, nu: np.ndarray, clamp: bool = True
) -> LossTriple:
    """Stated BCE objective for arbitrary similarity matrices mu, nu."""
    n = mu.shape[0]
    iu = np.triu_indices(n, k=1)
    la = -_log(nu[iu], clamp)
    lr = -_log(1.0 - nu[iu], clamp)
    attr = 2.0 * float(np.sum(mu[iu] * la))
    rep = 2.0 * float(np.sum((1.0 - mu[iu]) * lr))
    return LossTriple(attr, rep, attr + rep)


def purported_loss(
    graph: SimilarityGraph,
    embedding: np.ndarray,
    kernel: Kernel,
    clamp: bool = True,
) -> LossTriple:
    """Stated BCE objective of the embedding against the graph weights."""
    return purported_loss_from_similarities(
        graph.to_dense(), embedding_similarities(embedding, kernel), clamp
    )


def effective_loss(
    graph: SimilarityGraph,
    embedding: np.ndarray,
    kernel: Kernel,
    m: int,
    clamp: bool = True,
) -> LossTriple:
    """Closed-form expectation of the per-epoch sampled loss.

    Shares the attractive part with the purported loss; the repulsive
    weight per pair is (d_i + d_j) * m / (2n) instead of 1 - mu_ij.
    """
    mu = graph.to_dense()
    nu = embedding_similarities(embedding, kernel)
    w = pair_repulsion_weights(graph, m)
    iu = np.triu_indices(graph.n, k=1)
    attr = 2.0 * float(np.sum(mu[iu] * (-_log(nu[iu], clamp))))
    rep = 2.0 * float(np.sum(w[iu] * (-_log(1.0 - nu[iu], clamp))))
    return LossTriple(attr, rep, attr + rep)


def actual_epoch_loss(
    sample_log: "EpochSampleLog",
    embedding: np.ndarray,
    kernel: Kernel,
    clamp: bool = True,
) -> LossTriple:
    """Realized loss of one epoch, evaluated on a fixed embedding snapshot.

    Sums La over the epoch's fired ordered edges and Lr over its
    negative-sample draws.  Self draws (negative sample equal to the
    head) contribute nothing, mirroring the optimizer's coincidence
    guard.
    """
    emb = np.asarray(embedding, dtype=np.float64)
    attr = 0.0
    if sample_log.fired_heads.size:
        diff = emb[sample_log.fired_heads] - emb[sample_log.fired_tails]
        nu = phi_from_sqdist(kernel, np.sum(diff**2, axis=1))
        attr = float(np.sum(-_log(nu, clamp)))
    rep = 0.0
    if sample_log.neg_heads.size:
        keep = sample_log.neg_heads != sample_log.neg_tails
        diff = emb[sample_log.neg_heads[keep]] - emb[sample_log.neg_tails[keep]]
        nu = phi_from_sqdist(kernel, np.sum(diff**2, axis=1))
        rep = float(np.sum(-_log(1.0 - nu, clamp)))
    return LossTriple(attr, rep, attr + rep)


def target_similarities(graph: SimilarityGraph, m: int) -> np.ndarray:
    """Per-pair minimizers nu* of the effective loss, as a dense matrix.

    nu*_ij = mu_ij / (mu_ij + (d_i + d_j) m / (2n)); exactly zero where
    mu_ij is zero.  m=0 would make every positive target exactly 1;
    allowed, but flagged since the effective loss then has no repulsion.
    """
    if m < 1:
        import warnings

        warnings.warn("m=0 makes every positive target similarity exactly 1")
    mu = graph.to_dense()
    w = pair_repulsion_weights(graph, m)
    out = np.zeros_like(mu)
    pos = mu > 0
    out[pos] = mu[pos] / (mu[pos] + w[pos])
    return out


def weighted_bce_decomposition(
    graph: SimilarityGraph,
    embedding: np.ndarray,
    kernel: Kernel,
    m: int,
    clamp: bool = True,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Rewrite the effective loss as weighted, normalized BCE terms.

    Returns (weights, bce, total) with per-pair weights
    W_ij = mu_ij + (d_i + d_j) m / (2n), per-pair normalized terms
    B_ij = -(nu* log nu + (1 - nu*) log(1 - nu)), and
    total = 2 sum_{i<j} W_ij B_ij, algebraically equal to the effective
    loss total (the same clamped logs appear on both sides).
    """
    mu = graph.to_dense()
    w = pair_repulsion_weights(graph, m)
    weights = mu + w
    targets = target_similarities(graph, m)
    nu = embedding_similarities(embedding, kernel)
    bce = -(targets * _log(nu, clamp) + (1.0 - targets) * _log(1.0 - nu, clamp))
    np.fill_diagonal(bce, 0.0)
    iu = np.triu_indices(graph.n, k=1)
    total = 2.0 * float(np.sum(weights[iu] * bce[iu]))
    return weights, bce, total


@dataclass(frozen=True)
class RepulsionWeightStats:
    """Attraction/repulsion budget of the effective loss for one graph."""

    mean_one_minus_mu: float  # average purported repulsive weight, all pairs
    max_pair_weight: float  # max over pairs of (d_i + d_j) m / (2n)
    mean_pair_weight: float
    total_attractive_weight: float  # sum_{i,j} mu_ij == 2 mu(E)
    total_repulsive_weight: float  # m * mu(E)
    attraction_repulsion_ratio: float  # 2 / m


def repulsion_weight_stats(graph: SimilarityGraph, m: int) -> RepulsionWeightStats:
    """Summarize how negative sampling rebalances attraction vs repulsion.

    The total attractive weight is the ordered-pair sum of mu_ij, which
    is 2 mu(E) by definition.  The total effective repulsive weight is
    half the ordered-pair sum of (d_i + d_j) m / (2n) (one count per
    unordered pair), which collapses to m * mu(E) exactly.  Their ratio
    2/m is what keeps the two forces within the same order of magnitude
    despite the sparse positive weights.
    """
    n = graph.n
    w = pair_repulsion_weights(graph, m)
    iu = np.triu_indices(n, k=1)
    mu_2e = 2.0 * graph.total_weight
    n_pairs = n * (n - 1) // 2
    sum_mu = float(graph.weights.sum())
    total_rep = m * graph.total_weight
    return RepulsionWeightStats(
        mean_one_minus_mu=float((n_pairs - sum_mu) / n_pairs),
        max_pair_weight=float(w[iu].max()),
        mean_pair_weight=float(w[iu].mean()),
        total_attractive_weight=mu_2e,
        total_repulsive_weight=float(total_rep),
        attraction_repulsion_ratio=mu_2e / total_rep if total_rep else np.inf,
    )


def cross_partial_asymmetry(
    graph: SimilarityGraph,
    embedding: np.ndarray,
    kernel: Kernel,
    m: int,
    i: int,
    j: int,
    push_tail: bool = False,
    step: float = 1e-5,
) -> float:
    """Hessian-symmetry defect of the expected update field at (i, j).

    Numerically differentiates the expected gradient of point i with
    respect to e_j and vice versa (central differences) and returns the
    max-norm of block(i,j) - block(j,i)^T.  A conservative field (one
    that is the gradient of some objective) has symmetric second
    derivatives, so the defect vanishes; without push_tail the repulsive
    weights d_i m/(2n) vs d_j m/(2n) make the blocks differ in
    proportion to (d_i - d_j).  Uses unclipped, unpadded gradients.
    """
    from .optimizer import expected_gradient  # deferred: optimizer imports losses

    emb = np.asarray(embedding, dtype=np.float64)
    n = emb.shape[0]
    dsq = np.sum((emb[:, None, :] - emb[None, :, :]) ** 2, axis=2)
    np.fill_diagonal(dsq, np.inf)
    if dsq.min() == 0.0:
        raise ValueError("embedding points must be pairwise distinct")
    if not (0 <= i < n and 0 <= j < n and i != j):
        raise ValueError("need two distinct valid point indices")

    def block(p: int, q: int) -> np.ndarray:
        # rows: coordinates of grad at p, cols: perturbed coordinates of e_q
        dim = emb.shape[1]
        out = np.empty((dim, dim))
        for c in range(dim):
            bumped = emb.copy()
            bumped[q, c] += step
            g_hi = expected_gradient(graph, bumped, kernel, m, p, push_tail=push_tail)
            bumped[q, c] -= 2.0 * step
            g_lo = expected_gradient(graph, bumped, kernel, m, p, push_tail=push_tail)
            out[:, c] = (g_hi - g_lo) / (2.0 * step)
        return out

    return float(np.max(np.abs(block(i, j) - block(j, i).T)))


@dataclass(frozen=True)
class SimilarityHistograms:
    """Aligned histograms of input, target and embedding similarities."""

    bin_lo: np.ndarray
    bin_hi: np.ndarray
    count_mu: np.ndarray
    count_target: np.ndarray
    count_nu: np.ndarray
    subset: str


def similarity_histograms(
    graph: SimilarityGraph,
    targets: np.ndarray,
    embedding: np.ndarray,
    kernel: Kernel,
    bins: int = 50,
    subset: str = "all",
) -> SimilarityHistograms:
    """Histogram mu, nu* and nu over a pair subset with shared bins.

    subset selects unordered pairs: 'all', 'positive_mu' (mu_ij > 0) or
    'zero_mu' (mu_ij == 0).
    """
    mu = graph.to_dense()
    nu = embedding_similarities(embedding, kernel)
    iu = np.triu_indices(graph.n, k=1)
    mu_u, t_u, nu_u = mu[iu], targets[iu], nu[iu]
    if subset == "positive_mu":
        mask = mu_u > 0
    elif subset == "zero_mu":
        mask = mu_u == 0
    elif subset == "all":
        mask = np.ones_like(mu_u, dtype=bool)
    else:
        raise ValueError(f"unknown subset {subset!r}")
    edges = np.linspace(0.0, 1.0, bins + 1)
    return SimilarityHistograms(
        bin_lo=edges[:-1],
        bin_hi=edges[1:],
        count_mu=np.histogram(mu_u[mask], bins=edges)[0],
        count_target=np.histogram(t_u[mask], bins=edges)[0],
        count_nu=np.histogram(nu_u[mask], bins=edges)[0],
        subset=subset,
    )


def write_loss_csv(records: list[LossRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(LOSS_CSV_HEADER + "\n")
        for r in records:
            vals = [*r.purported, *r.effective, *r.actual]
            fh.write(f"{r.epoch}," + ",".join("%.17g" % v for v in vals) + "\n")


def read_loss_csv(path: str | Path) -> list[LossRecord]:
    records = []
    with Path(path).open() as fh:
        header = fh.readline().strip()
        if header != LOSS_CSV_HEADER:
            raise ValueError(f"{path}: unexpected loss CSV header")
        for line in fh:
            cells = line.strip().split(",")
            vals = [float(c) for c in cells[1:]]
            records.append(
                LossRecord(
                    epoch=int(cells[0]),
                    purported=LossTriple(*vals[0:3]),
                    effective=LossTriple(*vals[3:6]),
                    actual=LossTriple(*vals[6:9]),
                )
            )
    return records

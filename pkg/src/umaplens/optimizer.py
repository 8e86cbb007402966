"""Sampling-based SGD over the similarity graph.

One epoch visits every ordered pair (i, j) with mu_ij > 0 in ascending
order and fires it with probability mu_ij.  A fired edge pulls e_i and
e_j together along the attractive gradient, then draws m negative
samples s uniformly from all n points and pushes e_i away from each.
With push_tail enabled the negative sample itself is pushed away too,
which turns the expected update field into an exact (negative) gradient
of the effective loss; the plain variant leaves the field
non-conservative whenever degrees differ.

Updates are applied immediately and sequentially, so trajectories are
bit-identical for a fixed seed.  Negative samples may hit the head or
tail itself; coincident points receive a zero gradient, which keeps the
per-sample expectation exactly m/n per target point.

The expected update direction on e_i per unit learning rate is

    E(g_i) = - sum_j  2 mu_ij dLa_ij/de_i + c_ij dLr_ij/de_i

with c_ij = d_i * m / n, or (d_i + d_j) * m / n under push_tail; the
latter equals minus the gradient of the effective loss.
expected_gradient evaluates this closed form with unclipped, unpadded
gradients, matching the expectation-level analysis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np

from . import losses
from .datagen import Dataset
from .kernel import Kernel, attr_coeff, rep_coeff
from .simgraph import SimilarityGraph

__all__ = [
    "OptimizerConfig",
    "EpochSampleLog",
    "DivergedError",
    "init_embedding",
    "run_epoch",
    "optimize",
    "expected_gradient",
    "realized_gradient",
]

INIT_MODES = ("data", "pca", "random")
EDGE_ORDERS = ("fixed", "random")


class DivergedError(RuntimeError):
    """Embedding coordinates left the finite range during optimization."""


@dataclass(frozen=True)
class OptimizerConfig:
    """Knobs of the sampling optimizer.

    loss_every controls how often the three losses are recorded during
    optimize(): every loss_every epochs (plus always the initial state
    and the final epoch); 0 records the initial and final states only.
    """

    m: int = 5
    n_epochs: int = 500
    alpha0: float = 0.1
    lr_decay: bool = True
    push_tail: bool = False
    seed: int = 0
    init: str = "data"
    edge_order: str = "fixed"
    dim: int = 2
    loss_every: int = 1

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("m must be >= 0")
        if self.n_epochs < 1:
            raise ValueError("n_epochs must be >= 1")
        if self.alpha0 <= 0:
            raise ValueError("alpha0 must be positive")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}")
        if self.edge_order not in EDGE_ORDERS:
            raise ValueError(f"edge_order must be one of {EDGE_ORDERS}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.loss_every < 0:
            raise ValueError("loss_every must be >= 0")


@dataclass(frozen=True)
class EpochSampleLog:
    """Edge-fire and negative-sample events of a single epoch.

    Negative draws come in groups of m per fired edge, in firing order.
    """

    fired_heads: np.ndarray
    fired_tails: np.ndarray
    neg_heads: np.ndarray
    neg_tails: np.ndarray
    m: int

    def __post_init__(self):
        if self.neg_heads.shape[0] != self.m * self.fired_heads.shape[0]:
            raise ValueError("expected m negative draws per fired edge")

    @property
    def n_fired(self) -> int:
        return self.fired_heads.shape[0]


def init_embedding(dataset: Dataset, config: OptimizerConfig) -> np.ndarray:
    """Initial coordinates: copy of the data, top PCA projection, or uniform.

    data requires the input dimension to equal the embedding dimension.
    pca projects onto the leading principal axes with a deterministic
    sign convention (largest-magnitude loading made positive).  random
    draws i.i.d. uniform from [-10, 10]^dim using the config seed.
    """
    d = config.dim
    if config.init == "data":
        if dataset.dim != d:
            raise ValueError(
                f"data init needs input dimension {d}, got {dataset.dim}"
            )
        return dataset.points.copy()
    if config.init == "pca":
        centered = dataset.points - dataset.points.mean(axis=0)
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        comps = vt[:d]
        for row in range(comps.shape[0]):
            lead = np.argmax(np.abs(comps[row]))
            if comps[row, lead] < 0:
                comps[row] = -comps[row]
        return centered @ comps.T
    rng = np.random.default_rng(config.seed)
    return rng.uniform(-10.0, 10.0, size=(dataset.n, d))


@numba.njit(cache=True)
def _epoch_kernel(
    heads,
    tails,
    mu,
    emb,
    a,
    b,
    eps_rep,
    grad_clip,
    m,
    n,
    alpha,
    push_tail,
    seed,
):  # pragma: no cover - exercised through run_epoch
    np.random.seed(seed)
    n_edges = heads.shape[0]
    dim = emb.shape[1]
    fired_h = np.empty(n_edges, dtype=np.int64)
    fired_t = np.empty(n_edges, dtype=np.int64)
    neg_h = np.empty(n_edges * m, dtype=np.int64)
    neg_t = np.empty(n_edges * m, dtype=np.int64)
    nf = 0
    nn = 0
    for e in range(n_edges):
        if np.random.random() >= mu[e]:
            continue
        i = heads[e]
        j = tails[e]
        fired_h[nf] = i
        fired_t[nf] = j
        nf += 1
        dsq = 0.0
        for c in range(dim):
            diff = emb[i, c] - emb[j, c]
            dsq += diff * diff
        if dsq > 0.0:
            coeff = attr_coeff(a, b, dsq)
            for c in range(dim):
                g = coeff * (emb[i, c] - emb[j, c])
                if g > grad_clip:
                    g = grad_clip
                elif g < -grad_clip:
                    g = -grad_clip
                emb[i, c] -= alpha * g
                emb[j, c] += alpha * g
        for _ in range(m):
            s = np.random.randint(0, n)
            neg_h[nn] = i
            neg_t[nn] = s
            nn += 1
            dsq = 0.0
            for c in range(dim):
                diff = emb[i, c] - emb[s, c]
                dsq += diff * diff
            if dsq > 0.0:
                coeff = rep_coeff(a, b, eps_rep, dsq)
                for c in range(dim):
                    g = coeff * (emb[i, c] - emb[s, c])
                    if g > grad_clip:
                        g = grad_clip
                    elif g < -grad_clip:
                        g = -grad_clip
                    emb[i, c] -= alpha * g
                    if push_tail:
                        emb[s, c] += alpha * g
    return fired_h[:nf].copy(), fired_t[:nf].copy(), neg_h[:nn].copy(), neg_t[:nn].copy()


def _run_epoch_on_edges(
    heads: np.ndarray,
    tails: np.ndarray,
    mu: np.ndarray,
    embedding: np.ndarray,
    kernel: Kernel,
    config: OptimizerConfig,
    alpha: float,
    epoch_seed: int,
) -> EpochSampleLog:
    fh, ft, nh, nt = _epoch_kernel(
        heads,
        tails,
        mu,
        embedding,
        kernel.a,
        kernel.b,
        kernel.eps_rep,
        kernel.grad_clip,
        config.m,
        embedding.shape[0],
        alpha,
        config.push_tail,
        epoch_seed,
    )
    return EpochSampleLog(
        fired_heads=fh, fired_tails=ft, neg_heads=nh, neg_tails=nt, m=config.m
    )


def run_epoch(
    graph: SimilarityGraph,
    embedding: np.ndarray,
    kernel: Kernel,
    config: OptimizerConfig,
    rng: np.random.Generator,
    alpha: float | None = None,
) -> tuple[np.ndarray, EpochSampleLog]:
    """Run one epoch in place; returns the embedding and its sample log.

    The epoch's random stream is seeded from one draw of rng, so
    repeated calls advance deterministically.  alpha defaults to the
    config's initial learning rate; optimize() passes the decayed value.
    """
    if embedding.shape[0] != graph.n:
        raise ValueError("graph and embedding disagree on n")
    emb = np.ascontiguousarray(embedding, dtype=np.float64)
    heads, tails, mu = graph.ordered_edges()
    if config.edge_order == "random":
        perm = rng.permutation(heads.shape[0])
        heads, tails, mu = heads[perm], tails[perm], mu[perm]
    epoch_seed = int(rng.integers(0, 2**32))
    log = _run_epoch_on_edges(
        heads,
        tails,
        mu,
        emb,
        kernel,
        config,
        config.alpha0 if alpha is None else alpha,
        epoch_seed,
    )
    if not np.all(np.isfinite(emb)):
        raise DivergedError("non-finite embedding coordinates after epoch")
    return emb, log


def optimize(
    graph: SimilarityGraph,
    dataset: Dataset,
    kernel: Kernel,
    config: OptimizerConfig,
    on_epoch: Callable[[int, np.ndarray], None] | None = None,
) -> tuple[np.ndarray, list[losses.LossRecord]]:
    """Run the configured number of epochs and log losses along the way.

    Loss records are evaluated on the post-epoch embedding; the record
    at epoch 0 describes the initial state (its actual loss is zero, no
    samples having been drawn).  The learning rate decays linearly to
    zero over the epochs when lr_decay is set.  Deterministic per seed.
    """
    emb = init_embedding(dataset, config)
    rng = np.random.default_rng(config.seed)
    heads, tails, mu = graph.ordered_edges()
    t_total = config.n_epochs

    def losses_at(epoch: int, log: EpochSampleLog | None) -> losses.LossRecord:
        if log is None:
            actual = losses.LossTriple(0.0, 0.0, 0.0)
        else:
            actual = losses.actual_epoch_loss(log, emb, kernel)
        return losses.LossRecord(
            epoch=epoch,
            purported=losses.purported_loss(graph, emb, kernel),
            effective=losses.effective_loss(graph, emb, kernel, config.m),
            actual=actual,
        )

    records = [losses_at(0, None)]
    for t in range(t_total):
        alpha = config.alpha0 * (1.0 - t / t_total) if config.lr_decay else config.alpha0
        eh, et, emu = heads, tails, mu
        if config.edge_order == "random":
            perm = rng.permutation(heads.shape[0])
            eh, et, emu = heads[perm], tails[perm], mu[perm]
        epoch_seed = int(rng.integers(0, 2**32))
        log = _run_epoch_on_edges(eh, et, emu, emb, kernel, config, alpha, epoch_seed)
        if not np.all(np.isfinite(emb)):
            raise DivergedError(
                f"non-finite embedding coordinates after epoch {t + 1} (alpha={alpha:g})"
            )
        epoch = t + 1
        is_last = epoch == t_total
        if is_last or (config.loss_every and epoch % config.loss_every == 0):
            records.append(losses_at(epoch, log))
        if on_epoch is not None:
            on_epoch(epoch, emb)
    return emb, records


def expected_gradient(
    graph: SimilarityGraph,
    embedding: np.ndarray,
    kernel: Kernel,
    m: int,
    i: int,
    push_tail: bool = False,
) -> np.ndarray:
    """Closed-form expected per-epoch update direction on point i.

    Returns the expectation of the realized update per unit learning
    rate (descent direction); with push_tail it equals minus the
    gradient of the effective loss.  Clipping and the repulsion pad are
    ignored, as in the expectation-level analysis; coincident pairs
    contribute zero.
    """
    emb = np.asarray(embedding, dtype=np.float64)
    n = emb.shape[0]
    mu_row = graph.to_dense()[i]
    d = graph.degrees
    diffs = emb[i] - emb
    dsq = np.sum(diffs**2, axis=1)
    live = dsq > 0.0
    live[i] = False
    out = np.zeros(emb.shape[1])
    attr_mask = live & (mu_row > 0)
    if attr_mask.any():
        ca = attr_coeff_vec(kernel.a, kernel.b, dsq[attr_mask])
        out -= np.sum((2.0 * mu_row[attr_mask] * ca)[:, None] * diffs[attr_mask], axis=0)
    if m > 0 and live.any():
        if push_tail:
            c = (d[i] + d[live]) * (m / n)
        else:
            c = np.full(int(live.sum()), d[i] * m / n)
        cr = rep_coeff_vec(kernel.a, kernel.b, 0.0, dsq[live])
        out -= np.sum((c * cr)[:, None] * diffs[live], axis=0)
    return out


def attr_coeff_vec(a: float, b: float, dsq: np.ndarray) -> np.ndarray:
    return 2.0 * a * b * dsq ** (b - 1.0) / (1.0 + a * dsq**b)


def rep_coeff_vec(a: float, b: float, eps_rep: float, dsq: np.ndarray) -> np.ndarray:
    return -2.0 * b / ((eps_rep + dsq) * (1.0 + a * dsq**b))


def realized_gradient(
    sample_log: EpochSampleLog,
    embedding: np.ndarray,
    kernel: Kernel,
    push_tail: bool = False,
) -> np.ndarray:
    """Per-point update direction realized by one epoch's events.

    Evaluated on a fixed embedding (use a frozen, alpha=0 epoch), with
    the same unclipped, unpadded gradients as expected_gradient, whose
    value it matches in expectation.
    """
    emb = np.asarray(embedding, dtype=np.float64)
    out = np.zeros_like(emb)

    def accumulate(h, t, coeff_fn, tail_sign):
        diff = emb[h] - emb[t]
        dsq = np.sum(diff**2, axis=1)
        live = dsq > 0
        coeff = np.zeros_like(dsq)
        coeff[live] = coeff_fn(dsq[live])
        g = coeff[:, None] * diff
        np.add.at(out, h, -g)
        if tail_sign:
            np.add.at(out, t, g)

    if sample_log.fired_heads.size:
        accumulate(
            sample_log.fired_heads,
            sample_log.fired_tails,
            lambda dsq: attr_coeff_vec(kernel.a, kernel.b, dsq),
            True,
        )
    if sample_log.neg_heads.size:
        accumulate(
            sample_log.neg_heads,
            sample_log.neg_tails,
            lambda dsq: rep_coeff_vec(kernel.a, kernel.b, 0.0, dsq),
            push_tail,
        )
    return out

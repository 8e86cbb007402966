"""High-dimensional similarity graph construction and diagnostics.

Pipeline: exact kNN search -> per-point scale calibration -> directed
similarities -> symmetric similarities.  For each point i with neighbor
distances d_1 <= ... <= d_k the scale sigma_i solves

    sum_j exp(-(d_j - d_1) / sigma_i) = log2(k)

by bisection (the sum is increasing in sigma).  Directed weights are
exp(-(d_j - d_1)/sigma_i), so the nearest neighbor always gets weight 1,
and the symmetric weight of a pair is the probabilistic union

    mu_ij = mu_i->j + mu_j->i - mu_i->j * mu_j->i.

The module also builds the dense variant (all pairs weighted by the
embedding kernel applied to input distances) and the perturbed variants
used to probe how little the positive weights matter.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse
from scipy.spatial.distance import cdist

from .datagen import Dataset
from .kernel import Kernel, phi

__all__ = [
    "NeighborLists",
    "DirectedSimilarities",
    "SimilarityGraph",
    "knn_brute",
    "smooth_knn_sigma",
    "calibrate_sigmas",
    "directed_similarities",
    "symmetrize",
    "build_knn_graph",
    "dense_similarities",
    "epoch_filter",
    "perturb",
    "degree_histogram",
    "save_graph",
    "load_graph",
]

SIGMA_MIN = 1e-8
SIGMA_MAX = 1e6
SIGMA_TOL = 1e-5
SIGMA_MAX_ITER = 64

PERTURB_MODES = ("binarize", "invert", "permute", "uniform_random")


@dataclass(frozen=True)
class NeighborLists:
    """Exact k nearest neighbors per point, distances nondecreasing."""

    indices: np.ndarray  # (n, k) int64, never the point itself
    dists: np.ndarray  # (n, k) float64, nondecreasing along axis 1
    metric: str

    def __post_init__(self):
        idx = np.ascontiguousarray(self.indices, dtype=np.int64)
        dst = np.ascontiguousarray(self.dists, dtype=np.float64)
        if idx.shape != dst.shape or idx.ndim != 2:
            raise ValueError("indices and dists must share an (n, k) shape")
        n = idx.shape[0]
        if np.any(idx == np.arange(n)[:, None]):
            raise ValueError("a point cannot be its own neighbor")
        if np.any(np.diff(dst, axis=1) < 0):
            raise ValueError("neighbor distances must be nondecreasing")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "dists", dst)

    @property
    def n(self) -> int:
        return self.indices.shape[0]

    @property
    def k(self) -> int:
        return self.indices.shape[1]


@dataclass(frozen=True)
class DirectedSimilarities:
    """Row-calibrated directed weights mu_i->j over each point's k neighbors."""

    indices: np.ndarray  # (n, k) neighbor ids
    weights: np.ndarray  # (n, k) weights in (0, 1], first column == 1
    sigma: np.ndarray  # (n,) calibrated scales
    rho: np.ndarray  # (n,) distance to the nearest neighbor
    degenerate: np.ndarray  # (n,) bool, rows where calibration clamped
    metric: str

    @property
    def n(self) -> int:
        return self.indices.shape[0]

    @property
    def k(self) -> int:
        return self.indices.shape[1]

    def row_sums(self) -> np.ndarray:
        return self.weights.sum(axis=1)


@dataclass(frozen=True)
class SimilarityGraph:
    """Symmetric similarity graph stored as one edge per unordered pair.

    Edges are canonically sorted with heads < tails; weights lie in
    (0, 1].  degrees[i] is the row sum of the symmetric matrix and
    total_weight is half the degree sum.
    """

    n: int
    heads: np.ndarray  # (E,) int64, heads[e] < tails[e]
    tails: np.ndarray
    weights: np.ndarray  # (E,) float64 in (0, 1]
    degrees: np.ndarray  # (n,)
    total_weight: float
    sigma: np.ndarray | None = None
    rho: np.ndarray | None = None
    degenerate: np.ndarray | None = None
    metric: str | None = None
    k: int | None = None

    @classmethod
    def from_edges(
        cls,
        n: int,
        heads: np.ndarray,
        tails: np.ndarray,
        weights: np.ndarray,
        **meta,
    ) -> "SimilarityGraph":
        heads = np.asarray(heads, dtype=np.int64)
        tails = np.asarray(tails, dtype=np.int64)
        weights = np.asarray(weights, dtype=np.float64)
        if not (heads.shape == tails.shape == weights.shape):
            raise ValueError("edge arrays must share a shape")
        if heads.size and not (
            0 <= heads.min() and 0 <= tails.min() and heads.max() < n and tails.max() < n
        ):
            raise ValueError("edge endpoint out of range")
        if np.any(heads == tails):
            raise ValueError("self edges are not allowed")
        if np.any(weights <= 0) or np.any(weights > 1):
            raise ValueError("edge weights must lie in (0, 1]")
        lo = np.minimum(heads, tails)
        hi = np.maximum(heads, tails)
        order = np.lexsort((hi, lo))
        lo, hi, weights = lo[order], hi[order], weights[order]
        pair_ids = lo * n + hi
        if np.any(np.diff(pair_ids) == 0):
            raise ValueError("duplicate edges")
        degrees = np.zeros(n, dtype=np.float64)
        np.add.at(degrees, lo, weights)
        np.add.at(degrees, hi, weights)
        return cls(
            n=n,
            heads=lo,
            tails=hi,
            weights=weights,
            degrees=degrees,
            total_weight=float(degrees.sum() / 2.0),
            **meta,
        )

    @property
    def n_edges(self) -> int:
        return self.heads.shape[0]

    def to_dense(self) -> np.ndarray:
        """Symmetric (n, n) weight matrix with zero diagonal."""
        mat = np.zeros((self.n, self.n), dtype=np.float64)
        mat[self.heads, self.tails] = self.weights
        mat[self.tails, self.heads] = self.weights
        return mat

    def ordered_edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Both orientations of every stored edge, ascending (i, j) order."""
        h = np.concatenate([self.heads, self.tails])
        t = np.concatenate([self.tails, self.heads])
        w = np.concatenate([self.weights, self.weights])
        order = np.lexsort((t, h))
        return h[order], t[order], w[order]

    def edge_key_set(self) -> set[tuple[int, int]]:
        return set(zip(self.heads.tolist(), self.tails.tolist()))


def knn_brute(dataset: Dataset, k: int, metric: str = "euclidean") -> NeighborLists:
    """Exact k nearest neighbors by exhaustive pairwise distances.

    Ties are broken toward the smaller id (stable sort).  The point
    itself is excluded from its own neighbor list.
    """
    n = dataset.n
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must be in [1, {n - 1}], got {k}")
    if metric == "euclidean":
        dmat = cdist(dataset.points, dataset.points, metric="euclidean")
    elif metric == "cosine":
        norms = np.linalg.norm(dataset.points, axis=1)
        if np.any(norms == 0):
            bad = int(np.nonzero(norms == 0)[0][0])
            raise ValueError(f"cosine metric undefined for zero vector at row {bad}")
        cos = (dataset.points @ dataset.points.T) / np.outer(norms, norms)
        dmat = np.maximum(1.0 - cos, 0.0)  # guard tiny negatives from rounding
    else:
        raise ValueError(f"unknown metric {metric!r}")
    np.fill_diagonal(dmat, np.inf)
    idx = np.argsort(dmat, axis=1, kind="stable")[:, :k]
    dst = np.take_along_axis(dmat, idx, axis=1)
    return NeighborLists(indices=idx, dists=dst, metric=metric)


def smooth_knn_sigma(
    offsets: np.ndarray,
    k: int,
    tol: float = SIGMA_TOL,
    max_iter: int = SIGMA_MAX_ITER,
) -> tuple[float, bool]:
    """Solve sum_j exp(-offsets[j]/sigma) = log2(k) for one point.

    offsets are the neighbor distances minus the nearest-neighbor
    distance, so offsets[0] == 0.  The sum increases with sigma, so
    bisection on [SIGMA_MIN, SIGMA_MAX] converges whenever a root
    exists.  If the target is unattainable (degenerate offsets, e.g.
    all neighbors equidistant) the boundary with the smaller residual
    is returned, preferring SIGMA_MAX on ties, and flagged.

    Returns (sigma, degenerate_flag).
    """
    offsets = np.asarray(offsets, dtype=np.float64)
    if offsets.ndim != 1 or offsets.shape[0] != k:
        raise ValueError("offsets must be a length-k vector")
    if k < 2:
        raise ValueError("need k >= 2")
    if offsets[0] != 0.0:
        raise ValueError("offsets[0] must be 0 (nearest neighbor)")
    if np.any(np.diff(offsets) < 0) or np.any(offsets < 0):
        raise ValueError("offsets must be nonnegative and nondecreasing")
    target = np.log2(k)

    def residual(sigma: float) -> float:
        return float(np.exp(-offsets / sigma).sum()) - target

    f_lo, f_hi = residual(SIGMA_MIN), residual(SIGMA_MAX)
    if f_lo > 0.0 or f_hi < 0.0:
        # no sign change: clamp to the better boundary, SIGMA_MAX on ties
        if abs(f_lo) < abs(f_hi):
            return SIGMA_MIN, True
        return SIGMA_MAX, True
    lo, hi = SIGMA_MIN, SIGMA_MAX
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if residual(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    sigma = 0.5 * (lo + hi)
    return sigma, abs(residual(sigma)) > tol


def calibrate_sigmas(
    neighbors: NeighborLists,
    tol: float = SIGMA_TOL,
    max_iter: int = SIGMA_MAX_ITER,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized per-point scale calibration; returns (sigmas, degenerate).

    Bisects all rows simultaneously; agrees with smooth_knn_sigma row by
    row (same bracket and iteration count).
    """
    offsets = neighbors.dists - neighbors.dists[:, :1]
    n, k = offsets.shape
    target = np.log2(k)

    def residual(sig: np.ndarray) -> np.ndarray:
        return np.exp(-offsets / sig[:, None]).sum(axis=1) - target

    f_lo = residual(np.full(n, SIGMA_MIN))
    f_hi = residual(np.full(n, SIGMA_MAX))
    no_root = (f_lo > 0.0) | (f_hi < 0.0)
    lo = np.full(n, SIGMA_MIN)
    hi = np.full(n, SIGMA_MAX)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        below = residual(mid) < 0.0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    sigma = 0.5 * (lo + hi)
    sigma[no_root] = np.where(
        np.abs(f_lo[no_root]) < np.abs(f_hi[no_root]), SIGMA_MIN, SIGMA_MAX
    )
    degenerate = no_root | (np.abs(residual(sigma)) > tol)
    return sigma, degenerate


def directed_similarities(
    neighbors: NeighborLists, sigmas: np.ndarray, degenerate: np.ndarray | None = None
) -> DirectedSimilarities:
    """Directed weights exp(-(d_j - d_1)/sigma_i) over each neighbor list."""
    sigmas = np.asarray(sigmas, dtype=np.float64)
    if sigmas.shape != (neighbors.n,):
        raise ValueError("need one sigma per point")
    if np.any(sigmas <= 0):
        raise ValueError("sigmas must be positive")
    rho = neighbors.dists[:, 0].copy()
    offsets = neighbors.dists - rho[:, None]
    weights = np.exp(-offsets / sigmas[:, None])
    if degenerate is None:
        degenerate = np.zeros(neighbors.n, dtype=bool)
    return DirectedSimilarities(
        indices=neighbors.indices.copy(),
        weights=weights,
        sigma=sigmas.copy(),
        rho=rho,
        degenerate=np.asarray(degenerate, dtype=bool).copy(),
        metric=neighbors.metric,
    )


def symmetrize(dirsim: DirectedSimilarities) -> SimilarityGraph:
    """Probabilistic union of the two directions of every directed edge."""
    n, k = dirsim.n, dirsim.k
    if np.any(dirsim.weights < 0) or np.any(dirsim.weights > 1):
        raise ValueError("directed weights must lie in [0, 1]")
    rows = np.repeat(np.arange(n), k)
    a = scipy.sparse.coo_matrix(
        (dirsim.weights.ravel(), (rows, dirsim.indices.ravel())), shape=(n, n)
    ).tocsr()
    sym = (a + a.T - a.multiply(a.T)).tocoo()
    keep = (sym.row < sym.col) & (sym.data > 0)
    return SimilarityGraph.from_edges(
        n,
        sym.row[keep],
        sym.col[keep],
        sym.data[keep],
        sigma=dirsim.sigma.copy(),
        rho=dirsim.rho.copy(),
        degenerate=dirsim.degenerate.copy(),
        metric=dirsim.metric,
        k=k,
    )


def build_knn_graph(
    dataset: Dataset,
    k: int,
    metric: str = "euclidean",
    tol: float = SIGMA_TOL,
) -> SimilarityGraph:
    """kNN search, scale calibration and symmetrization in one call."""
    neighbors = knn_brute(dataset, k, metric)
    sigmas, degenerate = calibrate_sigmas(neighbors, tol=tol)
    return symmetrize(directed_similarities(neighbors, sigmas, degenerate))


def dense_similarities(dataset: Dataset, kernel: Kernel) -> SimilarityGraph:
    """All-pairs similarities phi(|x_i - x_j|) on the input data.

    Every unordered pair becomes an edge (phi is strictly positive), so
    the graph is dense; fine at desk scale.
    """
    dmat = cdist(dataset.points, dataset.points, metric="euclidean")
    iu, ju = np.triu_indices(dataset.n, k=1)
    return SimilarityGraph.from_edges(
        dataset.n, iu, ju, phi(kernel, dmat[iu, ju]), metric="euclidean"
    )


def epoch_filter(graph: SimilarityGraph, n_epochs: int) -> SimilarityGraph:
    """Drop edges with weight below max(mu)/n_epochs.

    Mirrors the optimizer-side pruning of edges too weak to be sampled
    within the epoch budget; n_epochs=1 keeps only maximal-weight edges
    and n_epochs -> inf keeps everything.
    """
    if n_epochs < 1:
        raise ValueError("n_epochs must be >= 1")
    if graph.n_edges == 0:
        return graph
    floor = graph.weights.max() / n_epochs
    keep = graph.weights >= floor
    return SimilarityGraph.from_edges(
        graph.n,
        graph.heads[keep],
        graph.tails[keep],
        graph.weights[keep],
        sigma=graph.sigma,
        rho=graph.rho,
        degenerate=graph.degenerate,
        metric=graph.metric,
        k=graph.k,
    )


def perturb(
    graph: SimilarityGraph,
    mode: str,
    seed: int = 0,
    n_epochs: int = 200,
) -> SimilarityGraph:
    """Replace the positive weights while preserving the edge scaffold.

    Modes:
      binarize        every positive weight becomes 1
      invert          filter weak edges (epoch_filter) then map each
                      weight to min(remaining)/weight, so the weakest
                      surviving edge gets weight 1
      permute         randomly permute the multiset of weights
      uniform_random  overwrite each weight with a uniform (0, 1) draw

    permute and uniform_random draw once per unordered pair so symmetry
    is preserved; no mode creates an edge where the weight was zero.
    """
    if mode not in PERTURB_MODES:
        raise ValueError(f"unknown perturbation mode {mode!r}")
    base = graph
    if mode == "binarize":
        new_w = np.ones_like(base.weights)
    elif mode == "invert":
        base = epoch_filter(graph, n_epochs)
        new_w = base.weights.min() / base.weights
    elif mode == "permute":
        rng = np.random.default_rng(seed)
        new_w = base.weights[rng.permutation(base.n_edges)]
    else:  # uniform_random
        rng = np.random.default_rng(seed)
        new_w = rng.random(base.n_edges)
        while np.any(new_w == 0.0):  # keep weights strictly positive
            zeros = new_w == 0.0
            new_w[zeros] = rng.random(int(zeros.sum()))
    return SimilarityGraph.from_edges(
        base.n,
        base.heads,
        base.tails,
        new_w,
        sigma=base.sigma,
        rho=base.rho,
        degenerate=base.degenerate,
        metric=base.metric,
        k=base.k,
    )


@dataclass(frozen=True)
class DegreeHistogram:
    bin_lo: np.ndarray
    bin_hi: np.ndarray
    counts: np.ndarray
    min_degree: float
    reference: float  # log2(k) for calibrated graphs, k-1 for binarized ones
    reference_label: str


def degree_histogram(
    graph: SimilarityGraph, bins: int = 32, reference: str = "umap"
) -> DegreeHistogram:
    """Histogram of node degrees with the relevant lower-bound reference.

    reference='umap' draws log2(k) (calibrated graphs); 'binarized'
    draws k-1 (edge-count degrees of the shared kNN scaffold).
    """
    if graph.k is None:
        raise ValueError("graph has no recorded k; cannot place a reference line")
    if reference == "umap":
        ref, label = float(np.log2(graph.k)), "log2(k)"
    elif reference == "binarized":
        ref, label = float(graph.k - 1), "k-1"
    else:
        raise ValueError(f"unknown reference {reference!r}")
    counts, edges = np.histogram(graph.degrees, bins=bins)
    return DegreeHistogram(
        bin_lo=edges[:-1],
        bin_hi=edges[1:],
        counts=counts,
        min_degree=float(graph.degrees.min()),
        reference=ref,
        reference_label=label,
    )


def save_graph(graph: SimilarityGraph, edges_path: str | Path) -> Path:
    """Write the edge list CSV plus a per-node sidecar CSV.

    The edge file holds `i,j,mu` rows (i < j) under a comment line
    recording metric, k and n; the sidecar `<stem>.nodes.csv` holds
    `i,sigma,rho,degree` (empty sigma/rho when not applicable).
    Returns the sidecar path.
    """
    edges_path = Path(edges_path)
    edges_path.parent.mkdir(parents=True, exist_ok=True)
    meta = f"# metric={graph.metric or ''} k={'' if graph.k is None else graph.k} n={graph.n}"
    with edges_path.open("w", newline="") as fh:
        fh.write(meta + "\n")
        fh.write("i,j,mu\n")
        for i, j, w in zip(graph.heads, graph.tails, graph.weights):
            fh.write(f"{i},{j},{_fmt(w)}\n")
    nodes_path = edges_path.with_name(edges_path.stem + ".nodes.csv")
    with nodes_path.open("w", newline="") as fh:
        fh.write(meta + "\n")
        fh.write("i,sigma,rho,degree\n")
        for i in range(graph.n):
            sig = "" if graph.sigma is None else _fmt(graph.sigma[i])
            rho = "" if graph.rho is None else _fmt(graph.rho[i])
            fh.write(f"{i},{sig},{rho},{_fmt(graph.degrees[i])}\n")
    return nodes_path


def load_graph(edges_path: str | Path) -> SimilarityGraph:
    """Read a graph written by save_graph."""
    edges_path = Path(edges_path)
    meta = {}
    with edges_path.open() as fh:
        first = fh.readline()
        if first.startswith("#"):
            for tok in first[1:].split():
                key, _, val = tok.partition("=")
                meta[key] = val
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["i", "j", "mu"]:
            raise ValueError(f"{edges_path}: expected an i,j,mu edge list")
        rows = [(int(r[0]), int(r[1]), float(r[2])) for r in reader if r]
    n = int(meta.get("n", 0)) or (max(max(r[0], r[1]) for r in rows) + 1)
    heads = np.array([r[0] for r in rows], dtype=np.int64)
    tails = np.array([r[1] for r in rows], dtype=np.int64)
    weights = np.array([r[2] for r in rows], dtype=np.float64)
    sigma = rho = None
    nodes_path = edges_path.with_name(edges_path.stem + ".nodes.csv")
    if nodes_path.exists():
        with nodes_path.open() as fh:
            line = fh.readline()
            if not line.startswith("#"):
                fh.seek(0)
            reader = csv.reader(fh)
            next(reader)  # header
            srows = list(reader)
        if srows and srows[0][1] != "":
            sigma = np.array([float(r[1]) for r in srows])
            rho = np.array([float(r[2]) for r in srows])
    return SimilarityGraph.from_edges(
        n,
        heads,
        tails,
        weights,
        sigma=sigma,
        rho=rho,
        metric=meta.get("metric") or None,
        k=int(meta["k"]) if meta.get("k") else None,
    )


def _fmt(v: float) -> str:
    return "%.17g" % v

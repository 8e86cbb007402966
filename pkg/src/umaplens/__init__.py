"""Similarity-graph embedding with instrumented losses.

Builds UMAP-style kNN similarity graphs, optimizes 2-d embeddings with
the per-edge negative-sampling SGD, and evaluates side by side the
stated binary-cross-entropy objective, the closed-form effective
objective the sampler actually minimizes in expectation, and the
realized per-epoch loss.
"""

from .datagen import Dataset, gen_ring, gen_uniform_square, load_csv, save_csv
from .kernel import Kernel, fit_ab, grad_attr, grad_rep, phi
from .losses import (
    LossRecord,
    LossTriple,
    actual_epoch_loss,
    clamped_log,
    cross_partial_asymmetry,
    effective_loss,
    purported_loss,
    repulsion_weight_stats,
    similarity_histograms,
    target_similarities,
    weighted_bce_decomposition,
)
from .optimizer import (
    DivergedError,
    EpochSampleLog,
    OptimizerConfig,
    expected_gradient,
    init_embedding,
    optimize,
    realized_gradient,
    run_epoch,
)
from .pumap import (
    BatchSimConfig,
    PairCountEstimates,
    assemble_batch,
    batch_loss,
    mc_batch_loss,
    mc_expectations,
    negative_pairs,
    pair_count_expectations,
    pumap_effective_loss,
)
from .runconfig import RunConfig
from .simgraph import (
    NeighborLists,
    SimilarityGraph,
    build_knn_graph,
    degree_histogram,
    dense_similarities,
    directed_similarities,
    epoch_filter,
    knn_brute,
    perturb,
    smooth_knn_sigma,
    symmetrize,
)

__version__ = "0.1.0"

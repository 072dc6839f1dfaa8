"""H2GCN-style node classification under heterophily, from scratch on numpy/scipy."""

from .graph import (Graph, GraphError, SparseOperator, compatibility_matrix, edge_homophily,
                    exact_khop_adjacency, from_edge_list, merged_khop_adjacency, spmm,
                    sym_normalize, unnormalized_laplacian)
from .model import VARIANTS, VariantConfig, build_operators, forward, get_variant, init_params, loss, predict
from .synth import (CorpusFeatures, GenConfig, SplitAssignment, SyntheticFeatures, attach_features,
                    compatibility_from_h, generate_graph, make_splits)
from .train import TrainConfig, adam_step, backward, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "Graph",
    "GraphError",
    "SparseOperator",
    "compatibility_matrix",
    "edge_homophily",
    "exact_khop_adjacency",
    "from_edge_list",
    "merged_khop_adjacency",
    "spmm",
    "sym_normalize",
    "unnormalized_laplacian",
    "VARIANTS",
    "VariantConfig",
    "build_operators",
    "forward",
    "get_variant",
    "init_params",
    "loss",
    "predict",
    "CorpusFeatures",
    "GenConfig",
    "SplitAssignment",
    "SyntheticFeatures",
    "attach_features",
    "compatibility_from_h",
    "generate_graph",
    "make_splits",
    "TrainConfig",
    "adam_step",
    "backward",
    "evaluate",
    "train",
]

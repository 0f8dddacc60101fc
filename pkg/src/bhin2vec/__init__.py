"""Heterogeneous network embedding with loss-balanced, type-biased walks."""

from .balance import (
    PerturbationConfig,
    apply_stochastic_update,
    stochastic_loss,
    stochastic_loss_gradient,
)
from .evaluate import (
    EdgeSplit,
    LinkPredictionReport,
    edge_embedding,
    link_prediction_hit10,
    node_classification_f1,
    split_edges,
)
from .hetgraph import (
    HetGraph,
    MetaNetwork,
    TaskId,
    TaskSet,
    build_meta_network,
    load_graph,
    possible_tasks,
)
from .skipgram import (
    EmbeddingStore,
    NegativeTable,
    PairBatch,
    RatioTensor,
    TaskLossTracker,
    batch_loss,
    batch_loss_and_update,
    extract_pairs,
    inverse_training_ratio,
    score,
)
from .trainer import TrainConfig, TrainResult, load_checkpoint, save_checkpoint, train
from .walker import (
    StochasticMatrix,
    init_stochastic_matrix,
    sample_walk,
    sample_walk_neighbor_uniform,
    transition_power,
    uniform_stochastic_matrix,
)

__version__ = "0.1.0"

__all__ = [
    "EdgeSplit",
    "EmbeddingStore",
    "HetGraph",
    "LinkPredictionReport",
    "MetaNetwork",
    "NegativeTable",
    "PairBatch",
    "PerturbationConfig",
    "RatioTensor",
    "StochasticMatrix",
    "TaskId",
    "TaskLossTracker",
    "TaskSet",
    "TrainConfig",
    "TrainResult",
    "apply_stochastic_update",
    "batch_loss",
    "batch_loss_and_update",
    "build_meta_network",
    "edge_embedding",
    "extract_pairs",
    "init_stochastic_matrix",
    "inverse_training_ratio",
    "link_prediction_hit10",
    "load_checkpoint",
    "load_graph",
    "node_classification_f1",
    "possible_tasks",
    "sample_walk",
    "sample_walk_neighbor_uniform",
    "save_checkpoint",
    "score",
    "split_edges",
    "stochastic_loss",
    "stochastic_loss_gradient",
    "train",
    "transition_power",
    "uniform_stochastic_matrix",
]

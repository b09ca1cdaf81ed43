"""Structural landmarking and interaction modelling for graph classification."""

from .autodiff import GradCheckReport, NumericError, Tensor, grad_check
from .coherence import (
    BoundParams,
    GaussianMixture,
    distortion,
    empirical_coherence_sweep,
    mutual_coherence,
    recovery_support_bound,
    theorem_lower_bound,
    unit_ball_volume,
)
from .datasets import (
    DatasetBundle,
    DatasetError,
    FoldPlan,
    Graph,
    ParseError,
    load_tu_dataset,
    make_folds,
    one_hot_features,
    save_tu_dataset,
)
from .embedding import EncoderParams, cooccurrence_loss, encode, encode_values
from .landmarks import (
    LandmarkSet,
    assign,
    assign_values,
    cluster_loss,
    init_landmarks,
    target_distribution,
)
from .model import ModelState, joint_loss, load_model, save_model
from .pooling import (
    PooledFeatures,
    density,
    graph_feature,
    interaction,
    landmark_means,
    normalized_interaction,
    pooled_features,
)
from .substructure import (
    SubstructureConfig,
    SubstructureMatrix,
    Variant,
    build_substructures,
    exact_layer_adjacency,
    khop_adjacency,
)
from .training import CVResult, TrainConfig, cross_validate, sweep_k, train

__version__ = "0.1.0"

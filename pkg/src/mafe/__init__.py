"""Graph embedding by superposed attraction and repulsion force fields."""

from .datasets import PixelDataset, generate_synthetic, toy_scene
from .engine import EngineConfig, EmbeddingState, Trajectory, init_embedding, learned_embedding_weights, run, step
from .estimator import MAFE
from .evaluation import (
    ConfusionMatrix,
    EvaluationReport,
    NearestNeighborClassifier,
    confusion_matrix,
    dimension_sweep,
    frobenius_residual,
    kappa_statistic,
    knn1_classify,
    overall_accuracy,
    repeated_evaluation,
    spectral_angle,
    stratified_split,
)
from .exceptions import DataFormatError, DivergenceError, MAFEError, NumericalError, ValidationError
from .fields import FieldModel, FieldObjective, equilibrium_distance, pair_force, total_energy, total_gradient
from .graph import (
    NeighborhoodGraph,
    bilateral_graph,
    gaussian_perplexity_graph,
    knn_sparsify_and_symmetrize,
    pca_reduce,
    smt_estimate,
)

__version__ = "0.1.0"

"""Sparse logistic regression tuned for accuracy and feature-selection
stability, with a simulation harness comparing tuning strategies."""

from .l0logreg import Dataset, SolverOptions, SparseModel, accuracy, fit_l0, fit_l0_path, fit_logistic
from .simdata import GroundTruth, ScenarioSpec, sample_dataset, sample_test_dataset
from .stability import BlockSimilarity, SimilarityMatrix, StabilityError, sma, smu
from .tuning import epsilon_constraint_select, grid_tune, pareto_front, single_criteria_select

__version__ = "0.1.0"

__all__ = [
    "BlockSimilarity",
    "Dataset",
    "GroundTruth",
    "ScenarioSpec",
    "SimilarityMatrix",
    "SolverOptions",
    "SparseModel",
    "StabilityError",
    "accuracy",
    "epsilon_constraint_select",
    "fit_l0",
    "fit_l0_path",
    "fit_logistic",
    "grid_tune",
    "pareto_front",
    "sample_dataset",
    "sample_test_dataset",
    "single_criteria_select",
    "sma",
    "smu",
]

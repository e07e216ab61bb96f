"""Feature attributions for black-box tabular models.

Exact, Kernel and Monte Carlo Shapley estimators share one masking-game
definition; a from-scratch attention network provides an intrinsic
explanation channel for comparison.
"""

from .core import (
    DataError,
    Dataset,
    Explanation,
    FeatureSchema,
    FunctionPredictor,
    LinearPredictor,
    ScaledPredictor,
    Scaler,
    SplitConfig,
    load_csv,
    load_schema,
    split,
    standardize,
)
from .exact import exact_explain, exact_shapley, exact_shapley_permutation
from .explain import (
    ForceDecomposition,
    GlobalImportance,
    GroupExplanation,
    global_importance,
    group_explanations,
    local_force,
    make_estimator,
    merge_feature_groups,
    read_report,
    write_report,
)
from .game import CoalitionGame, MaskingGame, TabularGame, make_masking_game, synthetic_game
from .kernel import KernelConfig, kernel_shap_explain
from .montecarlo import McConfig, mc_convergence_curve, mc_shapley

__version__ = "0.1.0"

__all__ = [
    "CoalitionGame",
    "DataError",
    "Dataset",
    "Explanation",
    "FeatureSchema",
    "ForceDecomposition",
    "FunctionPredictor",
    "GlobalImportance",
    "GroupExplanation",
    "KernelConfig",
    "LinearPredictor",
    "MaskingGame",
    "McConfig",
    "ScaledPredictor",
    "Scaler",
    "SplitConfig",
    "TabularGame",
    "exact_explain",
    "exact_shapley",
    "exact_shapley_permutation",
    "global_importance",
    "group_explanations",
    "kernel_shap_explain",
    "load_csv",
    "load_schema",
    "local_force",
    "make_estimator",
    "make_masking_game",
    "mc_convergence_curve",
    "mc_shapley",
    "merge_feature_groups",
    "read_report",
    "split",
    "standardize",
    "synthetic_game",
    "write_report",
]

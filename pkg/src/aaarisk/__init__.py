"""Cost-sensitive logistic classification under case-control sampling."""

from .dataset import (
    CostSpec,
    PriorSpec,
    ScalingParams,
    Study,
    estimate_priors,
    feature_catalog,
    load_study,
    standardize,
    unstandardize,
    write_study,
)
from .evaluation import (
    bootstrap_ci,
    conditional_errors,
    cv_scores,
    empirical_risk,
    evaluate_pipeline,
    misclassification_matrix,
    roc_curve,
    tune_cutoff,
)
from .models import PipelineSpec, brier_score, kmeans2, pca_fit, sparse_then_refit, stepwise_select
from .optim import LogisticModel, fit_logistic_l1, fit_logistic_mle, log_likelihood, predict_scores
from .shift import ShiftContext, bayes_cutoff, correct_posterior, shift_factor
from .stats import mann_whitney, screen_features, standardized_importance, violin_data
from .synth import PopulationSpec, draw_case_control, generate_population, oracle_posterior

__all__ = [
    "CostSpec",
    "LogisticModel",
    "PipelineSpec",
    "PopulationSpec",
    "PriorSpec",
    "ScalingParams",
    "ShiftContext",
    "Study",
    "bayes_cutoff",
    "bootstrap_ci",
    "brier_score",
    "conditional_errors",
    "correct_posterior",
    "cv_scores",
    "draw_case_control",
    "empirical_risk",
    "estimate_priors",
    "evaluate_pipeline",
    "feature_catalog",
    "fit_logistic_l1",
    "fit_logistic_mle",
    "generate_population",
    "kmeans2",
    "load_study",
    "log_likelihood",
    "mann_whitney",
    "misclassification_matrix",
    "oracle_posterior",
    "pca_fit",
    "predict_scores",
    "roc_curve",
    "screen_features",
    "shift_factor",
    "sparse_then_refit",
    "standardize",
    "standardized_importance",
    "stepwise_select",
    "tune_cutoff",
    "unstandardize",
    "violin_data",
    "write_study",
]

__version__ = "0.1.0"

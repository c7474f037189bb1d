"""Tree-ensemble predictor screening and blocked response-surface experiments."""

from importlib.metadata import PackageNotFoundError, version

from .data import (Column, Dataset, QualityScoreSpec, compose_quality_score, dump_table,
                   impute_missing, load_reference, load_table, split_indices, split_train_test)
from .doe import (AnovaRow, DesirabilitySpec, EffectRow, ExperimentDesign, Factor, SurfaceFit,
                  anova_table, build_ccf_design, desirability, desirability_optimize,
                  design_from_csv, design_to_csv, effects_table, fit_response_surface, from_coded,
                  predict_mlr, predict_surface, render_anova, render_design, render_effects,
                  to_coded)
from .ensembles import (BoostedModel, ForestModel, ImportanceRanking, RegressionTree, TrainConfig,
                        fit_baseline, fit_boosted_trees, fit_random_forest, fit_regression_tree,
                        load_model, predict_model, save_model, variable_importance)
from .errors import *  # noqa: F401,F403
from .metrics import MetricReport, RiskReport, regression_metrics, risk_report
from .numerics import (DesignMatrix, LeastSquaresSolution, f_p_upper, regularized_incomplete_beta,
                       solve_least_squares, t_p_two_sided)
from .screening import (OverrideRule, ScreeningResult, VotedSelection, apply_overrides,
                        screen_predictors, vote_rankings)

try:
    __version__ = version("qualitymine")
except PackageNotFoundError:  # pragma: no cover - source checkout without install
    __version__ = "0.1.0"

__all__ = [
    "AnovaRow",
    "BoostedModel",
    "CellError",
    "Column",
    "ConfigError",
    "Dataset",
    "DesignError",
    "DesignMatrix",
    "DesirabilitySpec",
    "DomainError",
    "EffectRow",
    "ExperimentDesign",
    "ExtrapolationWarning",
    "Factor",
    "FitError",
    "ForestModel",
    "ImportanceRanking",
    "ImputationError",
    "LeastSquaresSolution",
    "MetricError",
    "MetricReport",
    "OverrideError",
    "OverrideRule",
    "ParseError",
    "PredictionError",
    "QualityMineError",
    "QualityScoreSpec",
    "RankError",
    "ReferenceLookupError",
    "RegressionTree",
    "RiskError",
    "RiskReport",
    "SchemaError",
    "ScoreRangeError",
    "ScreeningResult",
    "SpecError",
    "SplitError",
    "SurfaceFit",
    "TrainConfig",
    "VoteError",
    "VotedSelection",
    "anova_table",
    "apply_overrides",
    "build_ccf_design",
    "compose_quality_score",
    "design_from_csv",
    "design_to_csv",
    "desirability",
    "desirability_optimize",
    "dump_table",
    "effects_table",
    "f_p_upper",
    "fit_baseline",
    "fit_boosted_trees",
    "fit_random_forest",
    "fit_regression_tree",
    "fit_response_surface",
    "from_coded",
    "impute_missing",
    "load_model",
    "load_reference",
    "load_table",
    "predict_mlr",
    "predict_model",
    "predict_surface",
    "regression_metrics",
    "regularized_incomplete_beta",
    "render_anova",
    "render_design",
    "render_effects",
    "risk_report",
    "save_model",
    "screen_predictors",
    "solve_least_squares",
    "split_indices",
    "split_train_test",
    "t_p_two_sided",
    "to_coded",
    "variable_importance",
    "vote_rankings",
]

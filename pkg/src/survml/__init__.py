"""Survival models (Cox PH, random survival forest, DeepHit) under nested cross-validation."""

from .cox import CoxModel, fit_cox
from .dataset import Schema, SurvivalDataset, apply_preprocess, fit_preprocess, load_csv
from .deephit import DeepHitParams, DiscreteTimeNet, fit_deephit
from .estimators import kaplan_meier, logrank_statistic, nelson_aalen
from .harness import EvalReport, format_table, monte_carlo, nested_cv, tune_inner
from .metrics import c_index, calibration_alpha
from .rsf import SurvivalForest, fit_rsf
from .simulate import SimSpec, simulate_cohort, true_concordance

__version__ = "0.1.0"

__all__ = [
    "CoxModel", "DeepHitParams", "DiscreteTimeNet", "EvalReport", "Schema", "SimSpec",
    "SurvivalDataset", "SurvivalForest", "apply_preprocess", "c_index", "calibration_alpha",
    "fit_cox", "fit_deephit", "fit_preprocess", "fit_rsf", "format_table", "kaplan_meier",
    "load_csv", "logrank_statistic", "monte_carlo", "nelson_aalen", "nested_cv",
    "simulate_cohort", "true_concordance", "tune_inner",
]

"""Ordinal regression with anchored reference samples (ORARS).

Pairwise preference training, scoring against sorted anchor scores, the
rule-based sORARS variant, a GRNN baseline, and a Monte-Carlo engine for
the uniform/normal error analysis.
"""

from .core import Dataset, FoldPlan, MetricsReport, Sample, ZScoreScaler, mae, mse, normalize_features, split_folds
from .estimators import GRNNRegressor, ORARSRegressor, PairwisePreferenceClassifier, SORARSRegressor
from .harness import ComparisonReport, ExperimentSpec, compare, run_grnn, run_orars, run_sorars
from .pairing import PairSet, PreferencePair, generate_pairs, label_range, make_label, pair_weight
from .scoring import AnchorScores, posteriors, score_per_rank, score_with_preference
from .simulation import GainGrid, SimConfig, SimResult, gain_grid, simulate, simulate_once
from .sorars import rule_g, sorars_predict

__version__ = "0.1.0"

__all__ = [
    "AnchorScores", "ComparisonReport", "Dataset", "ExperimentSpec", "FoldPlan", "GRNNRegressor",
    "GainGrid", "MetricsReport", "ORARSRegressor", "PairSet", "PairwisePreferenceClassifier",
    "PreferencePair", "SORARSRegressor", "Sample", "SimConfig", "SimResult", "ZScoreScaler",
    "compare", "gain_grid", "generate_pairs", "label_range", "mae", "make_label", "mse",
    "normalize_features", "pair_weight", "posteriors", "rule_g", "run_grnn", "run_orars",
    "run_sorars", "score_per_rank", "score_with_preference", "simulate", "simulate_once",
    "sorars_predict", "split_folds",
]

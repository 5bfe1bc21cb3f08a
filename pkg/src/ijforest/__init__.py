"""Random forests with interchangeable base learners and resampling schemes, plus
infinitesimal-jackknife variance estimates for their predictions."""

__version__ = "0.1.0"

from .cart import TreeModel, best_split_sse, fit_cart, predict_tree
from .citree import LinearStatistic, best_split_ci, fit_citree, linear_statistic, select_variable
from .data import Dataset, SplitRule, load_csv, save_csv
from .forest import (
    ForestConfig,
    ForestModel,
    default_mtry,
    default_tree_count,
    fit_forest,
    load_forest,
    predict,
    predict_per_tree,
    save_forest,
)
from .ij_variance import VarianceEstimate, ij_variance, jackknife_after_bootstrap, predict_with_variance
from .resampling import ResampleCounts, bootstrap_counts, default_subsample_size, subsample_counts

__all__ = [
    "Dataset", "SplitRule", "load_csv", "save_csv",
    "ResampleCounts", "bootstrap_counts", "subsample_counts", "default_subsample_size",
    "TreeModel", "best_split_sse", "fit_cart", "predict_tree",
    "LinearStatistic", "linear_statistic", "select_variable", "best_split_ci", "fit_citree",
    "ForestConfig", "ForestModel", "default_mtry", "default_tree_count", "fit_forest",
    "predict", "predict_per_tree", "save_forest", "load_forest",
    "VarianceEstimate", "ij_variance", "jackknife_after_bootstrap", "predict_with_variance",
]

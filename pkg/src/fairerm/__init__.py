"""Empirical risk minimization under an equal-opportunity constraint.

Kernel SVMs and sparse linear models trained so that group-conditional
true positive rates match, plus the metrics, preprocessing transforms,
and validation procedure to measure and select them.
"""

__version__ = "0.1.0"

from .data import (ColumnSchema, DataError, Dataset, SplitPlan, Standardizer,
                   fit_standardizer, generate_synthetic, load_csv, make_folds,
                   write_csv)
from .fairness import (accuracy, delta_hat, deo, fairness_report,
                       group_true_positive_rates, linear_gap, sign)
from .kernels import (KernelSpec, direction_norm_sq, direction_values, gram,
                      load_gram, modified_gram, save_gram)
from .lasso import (LassoConfig, lambda_max, lasso_objective, proximal_oracle,
                    selected_feature_count, train_fair_lasso, train_lasso)
from .preprocess import FairTransform, fit_transform, positive_barycenters
from .solver import (FairSvmModel, LinearModel, NonConvergenceWarning,
                     SvmConfig, dual_objective, export_linear, predict,
                     primal_objective, qp_oracle, train_fair_svm,
                     train_fair_svm_kernelpath, train_svm_unconstrained)
from .validation import (FAMILIES, CvReport, FittedModel, Grid, GridPoint,
                         cross_validate, evaluate, fit_point, select_nvp)

__all__ = [
    "__version__",
    # data
    "ColumnSchema", "DataError", "Dataset", "SplitPlan", "Standardizer",
    "fit_standardizer", "generate_synthetic", "load_csv", "make_folds",
    "write_csv",
    # fairness
    "accuracy", "delta_hat", "deo", "fairness_report",
    "group_true_positive_rates", "linear_gap", "sign",
    # kernels
    "KernelSpec", "direction_norm_sq", "direction_values", "gram",
    "load_gram", "modified_gram", "save_gram",
    # preprocess
    "FairTransform", "fit_transform", "positive_barycenters",
    # solver
    "FairSvmModel", "LinearModel", "NonConvergenceWarning", "SvmConfig",
    "dual_objective", "export_linear", "predict", "primal_objective",
    "qp_oracle", "train_fair_svm", "train_fair_svm_kernelpath",
    "train_svm_unconstrained",
    # lasso
    "LassoConfig", "lambda_max", "lasso_objective", "proximal_oracle",
    "selected_feature_count", "train_fair_lasso", "train_lasso",
    # validation
    "FAMILIES", "CvReport", "FittedModel", "Grid", "GridPoint",
    "cross_validate", "evaluate", "fit_point", "select_nvp",
]

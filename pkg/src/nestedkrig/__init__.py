"""Nested Kriging: Gaussian-process regression by optimal aggregation of sub-models.

Sub-models fitted on subsets of the observations are merged through their
full cross-covariance matrix into the best linear unbiased combination,
possibly recursively along a tree.  The package also ships the exact full
model, the classic expert-fusion baselines, leave-one-out parameter
estimation and the benchmark harnesses comparing all of them.
"""

from .aggregation import (AggregatedPrediction, AggregatedProcess, aggregate,
                          aggregate_process_cov, aggregated_posterior,
                          diagnostics_vs_full)
from .baselines import BaselineResult, bcm, gpoe, poe, rbcm, spv
from .data import (CsvSchema, Dataset, Partition, load_csv, partition_consecutive,
                   partition_kmeans, partition_random)
from .estimation import (LooRecord, SgdConfig, estimate_sigma2,
                         grid_profile_loglik, loo_criterion, loo_predict,
                         sgd_fit, sgd_fit_two_phase)
from .gpcore import (FullModel, SubModelBank, sample_conditional, sample_paths,
                     submodel_predict)
from .kernels import KernelSpec, cross_matrix
from .linalg import SpdFactor, factor_spd, pseudo_solve, solve
from .metrics import criteria, run_benchmark_51, run_consistency_demo
from .tree import (AggregationTree, complexity_estimate, nested_predict,
                   nested_predict_batch, plan_tree)

__version__ = "0.1.0"

__all__ = [
    "AggregatedPrediction", "AggregatedProcess", "AggregationTree",
    "BaselineResult", "CsvSchema", "Dataset", "FullModel", "KernelSpec",
    "LooRecord", "Partition", "SgdConfig", "SpdFactor", "SubModelBank",
    "aggregate", "aggregate_process_cov", "aggregated_posterior", "bcm",
    "complexity_estimate", "criteria", "cross_matrix", "diagnostics_vs_full",
    "estimate_sigma2", "factor_spd", "gpoe", "grid_profile_loglik",
    "load_csv", "loo_criterion",
    "loo_predict", "nested_predict", "nested_predict_batch",
    "partition_consecutive", "partition_kmeans", "partition_random", "poe",
    "pseudo_solve", "rbcm", "run_benchmark_51", "run_consistency_demo",
    "sample_conditional", "sample_paths", "sgd_fit", "sgd_fit_two_phase",
    "solve", "spv", "submodel_predict", "plan_tree",
]

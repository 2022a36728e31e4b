"""Divide-and-conquer kernel ridge regression with response-adaptive oversampling."""

from skewkrr.dac import DacModel, fit_dac, predict_dac
from skewkrr.estimators import DacKernelRidge, KernelRidgeRegressor, OversampledDacKernelRidge
from skewkrr.kernels import KernelSpec, effective_dimension, eval_kernel, gram, regularized_solve
from skewkrr.krr import Dataset, KrrModel, fit, median_bandwidth, predict, select_lambda
from skewkrr.partition import (
    PartitionPlan,
    SliceSpec,
    classical_plan,
    copy_count,
    make_slices,
    oversample_plan,
    slice_count,
)

__all__ = [
    "DacKernelRidge", "DacModel", "Dataset", "KernelRidgeRegressor", "KernelSpec", "KrrModel",
    "OversampledDacKernelRidge", "PartitionPlan", "SliceSpec", "classical_plan", "copy_count",
    "effective_dimension", "eval_kernel", "fit", "fit_dac", "gram", "make_slices", "median_bandwidth",
    "oversample_plan", "predict", "predict_dac", "regularized_solve", "select_lambda", "slice_count",
]

__version__ = "0.1.0"

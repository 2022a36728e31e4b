"""scikit-learn compatible estimators.

``KernelRidgeRegressor`` fits on the full sample, ``DacKernelRidge`` on a
random even split, ``OversampledDacKernelRidge`` on the response-adaptive
oversampled split. Unless given explicitly, the Gaussian scale comes from
the median heuristic and lambda from seeded holdout validation.
``bandwidth_rule="holdout"`` searches the scale too, which suits sharp
features much better than the median distance does.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from skewkrr._rng import STREAM_HOLDOUT, rng_for
from skewkrr.dac import DacModel, fit_dac, predict_dac
from skewkrr.krr import (
    BANDWIDTH_PROBE,
    DEFAULT_GRID,
    DEFAULT_HOLDOUT,
    LAMBDA_PROBE,
    Dataset,
    fit,
    median_bandwidth,
    select_bandwidth,
    select_lambda,
)
from skewkrr.exceptions import InputError
from skewkrr.kernels import KernelSpec
from skewkrr.partition import classical_plan, make_slices, oversample_plan


def resolve_hyperparameters(
    data: Dataset,
    kernel: str = "gaussian",
    sigma: float | None = None,
    degree: int = 2,
    lam: float | None = None,
    lambda_grid=None,
    holdout_fraction: float = DEFAULT_HOLDOUT,
    bandwidth_rule: str = "median",
    bandwidth_probe: int = BANDWIDTH_PROBE,
    lambda_probe: int = LAMBDA_PROBE,
    seed: int = 0,
) -> tuple[KernelSpec, float]:
    """Kernel spec and global lambda for ``data``, selecting whatever is missing.

    ``bandwidth_rule="median"`` uses the median pairwise distance as the
    Gaussian scale; ``"holdout"`` scans a ladder of fractions of it jointly
    with lambda. Either way lambda is chosen once, on the full sample or on
    a seeded probe of ``lambda_probe`` rows when the sample is larger.
    """
    grid = DEFAULT_GRID if lambda_grid is None else lambda_grid
    if kernel == "gaussian" and sigma is None:
        if bandwidth_rule == "median":
            sigma = median_bandwidth(data.X, bandwidth_probe, seed)
        elif bandwidth_rule == "holdout":
            sigma, joint_lam = select_bandwidth(
                data, grid, holdout_fraction=holdout_fraction, probe_size=lambda_probe, seed=seed
            )
            if lam is None:
                lam = joint_lam
        else:
            raise InputError(f"unknown bandwidth rule {bandwidth_rule!r}")
    spec = KernelSpec(kernel, 1.0 if sigma is None else float(sigma), degree)
    if lam is None:
        probe = data
        if data.n > lambda_probe:
            rows = rng_for(seed, STREAM_HOLDOUT, 1).choice(data.n, size=lambda_probe, replace=False)
            probe = data.subset(np.sort(rows))
        lam = select_lambda(probe, spec, grid, global_n=data.n, holdout_fraction=holdout_fraction, seed=seed)
    return spec, float(lam)


class _KernelRidgeBase(RegressorMixin, BaseEstimator):
    def __init__(
        self,
        kernel="gaussian",
        sigma=None,
        degree=2,
        lam=None,
        lambda_grid=None,
        holdout_fraction=DEFAULT_HOLDOUT,
        bandwidth_rule="median",
        random_state=0,
    ):
        self.kernel = kernel
        self.sigma = sigma
        self.degree = degree
        self.lam = lam
        self.lambda_grid = lambda_grid
        self.holdout_fraction = holdout_fraction
        self.bandwidth_rule = bandwidth_rule
        self.random_state = random_state

    def _setup(self, X, y) -> Dataset:
        X, y = check_X_y(X, y, y_numeric=True)
        data = Dataset(X, y)
        self.n_features_in_ = X.shape[1]
        self.kernel_spec_, self.lambda_ = resolve_hyperparameters(
            data,
            kernel=self.kernel,
            sigma=self.sigma,
            degree=self.degree,
            lam=self.lam,
            lambda_grid=self.lambda_grid,
            holdout_fraction=self.holdout_fraction,
            bandwidth_rule=self.bandwidth_rule,
            seed=self._seed(),
        )
        self.sigma_ = self.kernel_spec_.sigma
        return data

    def _seed(self) -> int:
        return 0 if self.random_state is None else int(self.random_state)

    def _check_predict_input(self, X):
        check_is_fitted(self, "dac_model_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, but the model was fit with {self.n_features_in_}")
        return X

    def predict(self, X):
        X = self._check_predict_input(X)
        return predict_dac(self.dac_model_, X)


class KernelRidgeRegressor(_KernelRidgeBase):
    """Full-sample kernel ridge regression, ``beta = (K + n*lam*I)^-1 y``."""

    def fit(self, X, y):
        data = self._setup(X, y)
        self.model_ = fit(data, self.kernel_spec_, self.lambda_)
        self.dac_model_ = DacModel(
            [self.model_], self.kernel_spec_, self.lambda_, plan=None, plan_info={"method": "full", "k": 1}
        )
        return self


class DacKernelRidge(_KernelRidgeBase):
    """Average of ``n_nodes`` local fits on a random even split of the sample.

    Every node uses the same ridge, ``N * lam``, so the penalty reflects the
    global sample size rather than the node size.
    """

    def __init__(
        self,
        n_nodes=20,
        kernel="gaussian",
        sigma=None,
        degree=2,
        lam=None,
        lambda_grid=None,
        holdout_fraction=DEFAULT_HOLDOUT,
        bandwidth_rule="median",
        n_jobs=1,
        random_state=0,
    ):
        super().__init__(kernel, sigma, degree, lam, lambda_grid, holdout_fraction, bandwidth_rule, random_state)
        self.n_nodes = n_nodes
        self.n_jobs = n_jobs

    def _make_plan(self, data: Dataset):
        return classical_plan(data.n, int(self.n_nodes), self._seed())

    def fit(self, X, y):
        data = self._setup(X, y)
        self.plan_ = self._make_plan(data)
        self.dac_model_ = fit_dac(data, self.plan_, self.kernel_spec_, self.lambda_, workers=int(self.n_jobs or 1))
        return self


class OversampledDacKernelRidge(DacKernelRidge):
    """Divide-and-conquer KRR on a response-adaptive oversampled split.

    The response range is cut into equally spaced slices (``slicing`` is
    ``"scott"``, ``"sturges"``, ``"fd"`` or ``"fixed:L"``). Observations in
    a slice of size ``c_j`` are copied ``max(1, floor(tau * c_max / c_j))``
    times, each slice is dealt evenly over the nodes and repeated copies
    inside a node are dropped. The shared ridge is ``N_tilde * lam`` with
    ``N_tilde`` the post-de-duplication total.
    """

    def __init__(
        self,
        n_nodes=20,
        slicing="scott",
        tau=1.0,
        kernel="gaussian",
        sigma=None,
        degree=2,
        lam=None,
        lambda_grid=None,
        holdout_fraction=DEFAULT_HOLDOUT,
        bandwidth_rule="median",
        n_jobs=1,
        random_state=0,
    ):
        super().__init__(
            n_nodes, kernel, sigma, degree, lam, lambda_grid, holdout_fraction, bandwidth_rule, n_jobs, random_state
        )
        self.slicing = slicing
        self.tau = tau

    def _make_plan(self, data: Dataset):
        self.slices_ = make_slices(data.y, self.slicing)
        return oversample_plan(data.y, self.slices_, float(self.tau), int(self.n_nodes), self._seed())


ESTIMATORS = {
    "full": KernelRidgeRegressor,
    "dac": DacKernelRidge,
    "odac": OversampledDacKernelRidge,
}

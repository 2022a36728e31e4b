"""Single-machine kernel ridge regression and hyperparameter selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import linalg
from scipy.spatial.distance import pdist

from skewkrr._rng import STREAM_BANDWIDTH, STREAM_HOLDOUT, rng_for
from skewkrr.exceptions import DegenerateDataError, InputError
from skewkrr.kernels import KernelSpec, cross_kernel, gram, regularized_solve

DEFAULT_GRID = tuple(np.logspace(-8, 0, 20))
DEFAULT_HOLDOUT = 0.2
BANDWIDTH_PROBE = 1000
LAMBDA_PROBE = 4000


@dataclass
class Dataset:
    """Predictors, response and the original-sample index of every row."""

    X: NDArray[np.float64]
    y: NDArray[np.float64]
    origin_ids: NDArray[np.int64] | None = None
    feature_names: tuple[str, ...] | None = None
    response_name: str = "y"

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise InputError(f"X has shape {X.shape} but y has length {y.shape[0]}")
        if X.shape[0] < 1:
            raise InputError("a dataset needs at least one row")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InputError("dataset contains non-finite values")
        ids = np.arange(X.shape[0]) if self.origin_ids is None else np.asarray(self.origin_ids, dtype=np.int64)
        if ids.shape != y.shape or np.any(ids < 0):
            raise InputError("origin_ids must be nonnegative and match the row count")
        if self.feature_names is None:
            self.feature_names = tuple(f"x{j + 1}" for j in range(X.shape[1]))
        elif len(self.feature_names) != X.shape[1]:
            raise InputError("feature_names does not match the column count")
        self.X, self.y, self.origin_ids = X, y, ids
        self.feature_names = tuple(self.feature_names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            self.X[rows], self.y[rows], self.origin_ids[rows],
            feature_names=self.feature_names, response_name=self.response_name,
        )


@dataclass
class KrrModel:
    centers: NDArray[np.float64]
    coefficients: NDArray[np.float64]
    spec: KernelSpec
    lam: float

    def __post_init__(self):
        if self.coefficients.shape[0] != self.centers.shape[0]:
            raise InputError("coefficient count must equal the number of centers")
        if not self.lam > 0:
            raise InputError(f"lambda must be positive, got {self.lam}")


def fit_with_ridge(data: Dataset, spec: KernelSpec, ridge: float) -> KrrModel:
    """Fit with an explicit ridge; the recorded lambda is ``ridge / n``."""
    beta = regularized_solve(gram(spec, data.X), data.y, ridge)
    return KrrModel(centers=data.X, coefficients=beta, spec=spec, lam=ridge / data.n)


def fit(data: Dataset, spec: KernelSpec, lam: float) -> KrrModel:
    """Closed-form KRR: ``beta = (K + n * lam * I)^-1 y``."""
    if not lam > 0:
        raise InputError(f"lambda must be positive, got {lam}")
    model = fit_with_ridge(data, spec, data.n * lam)
    model.lam = float(lam)
    return model


def predict(model: KrrModel, Xnew) -> NDArray[np.float64]:
    Xnew = np.asarray(Xnew, dtype=float)
    if Xnew.ndim == 1:
        Xnew = Xnew[:, None]
    if Xnew.shape[1] != model.centers.shape[1]:
        raise InputError(f"model has {model.centers.shape[1]} features, got {Xnew.shape[1]}")
    return cross_kernel(model.spec, Xnew, model.centers) @ model.coefficients


def median_bandwidth(X, probe_size: int = BANDWIDTH_PROBE, seed: int = 0) -> float:
    """Median pairwise Euclidean distance over a seeded probe of rows.

    Falls back to the smallest nonzero distance when the median is zero.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if n < 2:
        raise InputError("median_bandwidth needs at least two rows")
    m = min(int(probe_size), n)
    if m < 2:
        raise InputError("probe_size must be at least 2")
    rows = rng_for(seed, STREAM_BANDWIDTH).choice(n, size=m, replace=False)
    dist = pdist(X[np.sort(rows)])
    sigma = float(np.median(dist))
    if sigma > 0:
        return sigma
    nonzero = dist[dist > 0]
    if nonzero.size == 0:
        raise DegenerateDataError("all probed predictor rows are identical; bandwidth undefined")
    return float(nonzero.min())


def _holdout_errors(data: Dataset, spec: KernelSpec, values, holdout_fraction: float, seed: int):
    """Held-out mean squared error for every lambda in ``values``.

    One eigendecomposition of the retained Gram matrix serves the whole grid.
    """
    if not 0 < holdout_fraction < 1:
        raise InputError(f"holdout_fraction must lie in (0, 1), got {holdout_fraction}")
    n = data.n
    n_hold = int(np.floor(holdout_fraction * n))
    if n_hold < 1 or n - n_hold < 1:
        raise InputError(f"holdout of {n_hold} rows out of {n} leaves an empty split")
    perm = rng_for(seed, STREAM_HOLDOUT).permutation(n)
    hold, keep = np.sort(perm[:n_hold]), np.sort(perm[n_hold:])
    m = keep.size
    evals, evecs = linalg.eigh(gram(spec, data.X[keep]))
    evals = np.clip(evals, 0.0, None)
    proj = evecs.T @ data.y[keep]
    K_hold = cross_kernel(spec, data.X[hold], data.X[keep])
    y_hold = data.y[hold]
    errors = np.empty(len(values))
    for i, lam in enumerate(values):
        beta = evecs @ (proj / (evals + m * lam))
        errors[i] = np.mean((K_hold @ beta - y_hold) ** 2)
    return errors


def _check_grid(grid) -> np.ndarray:
    values = np.unique(np.asarray(list(grid), dtype=float))
    if values.size == 0:
        raise InputError("lambda grid is empty")
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise InputError("lambda grid values must be positive and finite")
    return values


def _argmin_prefer_last(errors) -> int:
    """Index of the smallest error; exact ties go to the highest index."""
    errors = np.asarray(errors)
    finite = np.isfinite(errors)
    if not finite.any():
        raise InputError("no candidate produced a finite validation error")
    best = np.min(errors[finite])
    return int(np.flatnonzero(errors == best)[-1])


def select_lambda(
    data: Dataset,
    spec: KernelSpec,
    grid=DEFAULT_GRID,
    global_n: int | None = None,
    holdout_fraction: float = DEFAULT_HOLDOUT,
    seed: int = 0,
) -> float:
    """Pick the grid value with the smallest held-out squared error.

    ``data`` may be a probe of a larger sample of size ``global_n``.
    Candidates are read at global scale, so a fit on ``m`` retained rows
    uses ``ridge = global_n * lam * (m / global_n) = m * lam``. Exact ties
    go to the larger lambda.
    """
    values = _check_grid(grid)
    if values.size == 1:
        return float(values[0])
    if global_n is not None and global_n < data.n:
        raise InputError(f"global_n={global_n} is smaller than the probe size {data.n}")
    errors = _holdout_errors(data, spec, values, holdout_fraction, seed)
    return float(values[_argmin_prefer_last(errors)])


BANDWIDTH_LADDER = tuple(2.0**-j for j in range(8))


def select_bandwidth(
    data: Dataset,
    grid=DEFAULT_GRID,
    ladder=BANDWIDTH_LADDER,
    holdout_fraction: float = DEFAULT_HOLDOUT,
    probe_size: int = LAMBDA_PROBE,
    seed: int = 0,
) -> tuple[float, float]:
    """Gaussian scale and lambda chosen jointly by holdout error.

    Scale candidates are the median-heuristic value times each ``ladder``
    factor. Scoring runs on the full sample, or on a seeded probe of
    ``probe_size`` rows when the sample is larger. Exact ties go to the
    wider kernel, then to the larger lambda. Returns ``(sigma, lam)``.
    """
    anchor = median_bandwidth(data.X, BANDWIDTH_PROBE, seed)
    probe = data
    if data.n > probe_size:
        rows = rng_for(seed, STREAM_HOLDOUT, 1).choice(data.n, size=probe_size, replace=False)
        probe = data.subset(np.sort(rows))
    values = _check_grid(grid)
    factors = np.unique(np.asarray(list(ladder), dtype=float))
    if factors.size == 0 or np.any(factors <= 0):
        raise InputError("bandwidth ladder factors must be positive")
    # rows: factors ascending; columns: lambda ascending
    errors = np.array([
        _holdout_errors(probe, KernelSpec("gaussian", anchor * f), values, holdout_fraction, seed)
        for f in factors
    ])
    flat = _argmin_prefer_last(errors.ravel())
    i, j = divmod(flat, values.size)
    return float(anchor * factors[i]), float(values[j])

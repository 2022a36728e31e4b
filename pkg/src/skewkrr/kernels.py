"""Kernel functions, Gram matrices and the regularized positive-definite solve."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy import linalg
from scipy.spatial.distance import cdist, pdist, squareform

from skewkrr.exceptions import InputError, NumericalError, UnsupportedError

KERNEL_FAMILIES = ("gaussian", "polynomial", "min")

# Diagonal jitter policy for near-singular systems.
JITTER_SCALE = 1e-10
JITTER_DOUBLINGS = 8


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus its hyperparameters.

    ``sigma`` is the Gaussian scale in predictor-distance units,
    ``degree`` the polynomial order.
    """

    family: str = "gaussian"
    sigma: float = 1.0
    degree: int = 2

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise InputError(f"unknown kernel family {self.family!r}; expected one of {KERNEL_FAMILIES}")
        if self.family == "gaussian" and not (np.isfinite(self.sigma) and self.sigma > 0):
            raise InputError(f"gaussian kernel needs sigma > 0, got {self.sigma}")
        if self.family == "polynomial" and (int(self.degree) != self.degree or self.degree < 1):
            raise InputError(f"polynomial kernel needs an integer degree >= 1, got {self.degree}")

    def to_dict(self) -> dict:
        return {"family": self.family, "sigma": float(self.sigma), "degree": int(self.degree)}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(family=d["family"], sigma=float(d.get("sigma", 1.0)), degree=int(d.get("degree", 2)))


@dataclass
class SpectrumDiagnostic:
    eigenvalues: NDArray[np.float64]
    d_lambda: float
    lam: float = field(default=float("nan"))


def _as_2d(X) -> NDArray[np.float64]:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InputError(f"expected a 2-d predictor matrix, got shape {X.shape}")
    return X


def eval_kernel(spec: KernelSpec, x, z) -> float:
    """Evaluate ``K(x, z)`` for a single pair of points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if x.shape != z.shape or x.ndim != 1:
        raise InputError(f"dimension mismatch: {x.shape} vs {z.shape}")
    if spec.family == "gaussian":
        diff = x - z
        return float(np.exp(-np.dot(diff, diff) / spec.sigma**2))
    if spec.family == "polynomial":
        return float((1.0 + np.dot(x, z)) ** spec.degree)
    if x.shape[0] != 1:
        raise UnsupportedError("the min kernel is only defined for 1-dimensional predictors")
    return float(1.0 + min(x[0], z[0]))


def cross_kernel(spec: KernelSpec, A, B) -> NDArray[np.float64]:
    """Kernel matrix between the rows of ``A`` (m x d) and ``B`` (q x d)."""
    A = _as_2d(A)
    B = _as_2d(B)
    if A.shape[1] != B.shape[1]:
        raise InputError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]} columns")
    if spec.family == "gaussian":
        return np.exp(-cdist(A, B, "sqeuclidean") / spec.sigma**2)
    if spec.family == "polynomial":
        return (1.0 + A @ B.T) ** spec.degree
    if A.shape[1] != 1:
        raise UnsupportedError("the min kernel is only defined for 1-dimensional predictors")
    return 1.0 + np.minimum(A[:, 0][:, None], B[:, 0][None, :])


def gram(spec: KernelSpec, X) -> NDArray[np.float64]:
    """Symmetric n x n Gram matrix of ``X``.

    The upper triangle is computed once and mirrored, so the result is
    exactly symmetric; the Gaussian diagonal is exactly one.
    """
    X = _as_2d(X)
    n = X.shape[0]
    if n < 1:
        raise InputError("gram needs at least one row")
    if spec.family == "gaussian":
        if n == 1:
            return np.ones((1, 1))
        K = squareform(np.exp(-pdist(X, "sqeuclidean") / spec.sigma**2))
        np.fill_diagonal(K, 1.0)
        return K
    K = cross_kernel(spec, X, X)
    upper = np.triu(K)
    return upper + np.triu(K, 1).T


def regularized_solve(K, y, ridge: float) -> NDArray[np.float64]:
    """Solve ``(K + ridge * I) beta = y`` by Cholesky factorization.

    If the factorization fails, ``1e-10 * trace(K) / n`` is added to the
    diagonal and the factorization retried, doubling the jitter up to 8
    times before giving up with :class:`NumericalError`.
    """
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    n = K.shape[0]
    if K.shape != (n, n):
        raise InputError(f"K must be square, got {K.shape}")
    if y.shape != (n,):
        raise InputError(f"y must have length {n}, got shape {y.shape}")
    if not ridge > 0:
        raise InputError(f"ridge must be positive, got {ridge}")

    A = K.copy()
    A.flat[:: n + 1] += ridge
    diag = A.diagonal().copy()
    base = JITTER_SCALE * max(abs(np.trace(K)) / n, np.finfo(float).tiny)
    jitters = [0.0] + [base * 2.0**i for i in range(JITTER_DOUBLINGS)]
    factor = None
    for jitter in jitters:
        A.flat[:: n + 1] = diag + jitter
        try:
            factor = linalg.cho_factor(A, lower=True, check_finite=False)
            break
        except linalg.LinAlgError:
            continue
    if factor is None:
        raise NumericalError(
            f"Cholesky factorization failed after {JITTER_DOUBLINGS} jitter doublings", jitter=jitter
        )
    try:
        beta = linalg.cho_solve(factor, y, check_finite=False)
    except linalg.LinAlgError as exc:  # pragma: no cover - factor already succeeded
        raise NumericalError(str(exc), jitter=jitter) from exc
    if not np.all(np.isfinite(beta)):
        raise NumericalError("non-finite solution", jitter=jitter)

    # one step of iterative refinement when the residual is loose
    tol = 1e-8 * max(1.0, float(np.max(np.abs(y))) if n else 1.0)
    resid = y - (K @ beta + ridge * beta)
    if np.max(np.abs(resid)) > tol:
        beta = beta + linalg.cho_solve(factor, resid, check_finite=False)
    return beta


def effective_dimension(eigenvalues, lam: float) -> float:
    """``sum_j (1 + lam / mu_j)^-1``; zero eigenvalues contribute nothing."""
    mu = np.asarray(eigenvalues, dtype=float).ravel()
    if not lam > 0:
        raise InputError(f"lambda must be positive, got {lam}")
    if np.any(mu < 0) or not np.all(np.isfinite(mu)):
        raise InputError("eigenvalues must be finite and nonnegative")
    pos = mu[mu > 0]
    return float(np.sum(pos / (pos + lam)))


def spectrum(spec: KernelSpec, X, lam: float) -> SpectrumDiagnostic:
    """Empirical stand-in for the Mercer spectrum: eigenvalues of ``K / n``.

    Round-off negatives below ``1e-10`` times the largest eigenvalue are
    clipped to zero.
    """
    K = gram(spec, X)
    n = K.shape[0]
    ev = linalg.eigvalsh(K / n)[::-1]
    floor = -1e-10 * max(float(ev[0]), 0.0)
    if ev[-1] < floor:
        raise NumericalError(f"Gram matrix is not positive semidefinite (min eigenvalue {ev[-1]:.3g})")
    ev = np.clip(ev, 0.0, None)
    return SpectrumDiagnostic(eigenvalues=ev, d_lambda=effective_dimension(ev, lam), lam=float(lam))

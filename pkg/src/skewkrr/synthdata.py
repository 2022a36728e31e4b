"""Synthetic skewed-response regression problems."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from skewkrr._rng import STREAM_NOISE, STREAM_X, rng_for
from skewkrr.exceptions import InputError
from skewkrr.krr import Dataset

SHAPES = ("uni_peak", "double_peak")
DEFAULT_NOISE_SD = 0.1


def peak(x, c):
    """Sharp radial bump ``0.1/(r+0.05) * sin(0.01*pi/(r+0.05))`` with ``r = ||x - c||``.

    ``x`` may be a single point or an (n, d) array of points.
    """
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=float)
    if x.ndim == 0:
        x = x[None]
    if c.ndim == 0:
        c = c[None]
    if x.shape[-1] != c.shape[-1]:
        raise InputError(f"dimension mismatch: {x.shape} vs {c.shape}")
    s = np.linalg.norm(x - c, axis=-1) + 0.05
    out = 0.1 / s * np.sin(0.01 * np.pi / s)
    return float(out) if np.ndim(out) == 0 else out


def true_function(shape: str, d: int) -> Callable[[np.ndarray], np.ndarray]:
    if d < 1:
        raise InputError("d must be at least 1")
    c1 = np.full(d, 0.4)
    c2 = np.full(d, 0.7)
    if shape == "uni_peak":
        def eta(X):
            return peak(_points(X, d), c1)
    elif shape == "double_peak":
        def eta(X):
            P = _points(X, d)
            return peak(P, c1) + 0.4 * peak(P, c2)
    else:
        raise InputError(f"unknown shape {shape!r}; expected one of {SHAPES}")
    return eta


def _points(X, d):
    X = np.asarray(X, dtype=float)
    if d == 1 and X.ndim <= 1:
        return X.reshape(-1, 1)
    return X


@dataclass(frozen=True)
class SynthSpec:
    shape: str = "uni_peak"
    n: int = 1000
    d: int = 1
    noise_sd: float = DEFAULT_NOISE_SD
    seed: int = 0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise InputError(f"unknown shape {self.shape!r}")
        if self.n < 1 or self.d < 1:
            raise InputError("n and d must be positive")
        if self.noise_sd < 0:
            raise InputError("noise_sd must be nonnegative")


def generate(spec: SynthSpec) -> tuple[Dataset, Callable]:
    """Draw ``X ~ U[0,1]^d`` and ``y = eta(X) + N(0, noise_sd^2)``.

    X and the noise come from separate streams derived from ``spec.seed``.
    """
    eta = true_function(spec.shape, spec.d)
    X = rng_for(spec.seed, STREAM_X).uniform(0.0, 1.0, size=(spec.n, spec.d))
    y = eta(X)
    if spec.noise_sd > 0:
        y = y + rng_for(spec.seed, STREAM_NOISE).normal(0.0, spec.noise_sd, size=spec.n)
    return Dataset(X, y), eta


HOUSING_FEATURES = ("longitude", "latitude", "cbd_distance")
HOUSING_RESPONSE = "price_per_sqm"


def housing_like(n: int = 1500, seed: int = 0) -> Dataset:
    """Stand-in for a city housing table: location plus a skewed positive price.

    Prices sit mostly in a low band with a few expensive pockets near the
    center and two secondary hot spots, clipped to [20, 30000].
    """
    rng = rng_for(seed, STREAM_X)
    center = np.array([144.96, -37.81])
    lon = center[0] + rng.normal(0.0, 0.12, n)
    lat = center[1] + rng.normal(0.0, 0.09, n)
    # degrees to kilometres, roughly, at this latitude
    dx = (lon - center[0]) * 88.0
    dy = (lat - center[1]) * 111.0
    dist = np.sqrt(dx**2 + dy**2)
    base = 2500.0 + 4000.0 * np.exp(-dist / 6.0)
    hot = np.zeros(n)
    for hx, hy, amp in ((2.0, -3.0, 18000.0), (-6.0, 4.0, 9000.0), (0.0, 0.0, 22000.0)):
        hot += amp * np.exp(-((dx - hx) ** 2 + (dy - hy) ** 2) / (2 * 0.8**2))
    noise = np.exp(rng_for(seed, STREAM_NOISE).normal(0.0, 0.15, n))
    price = np.clip((base + hot) * noise, 20.0, 30000.0)
    X = np.column_stack([lon, lat, dist])
    return Dataset(X, price, feature_names=HOUSING_FEATURES, response_name=HOUSING_RESPONSE)

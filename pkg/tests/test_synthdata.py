import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from skewkrr.exceptions import InputError
from skewkrr.partition import make_slices
from skewkrr.synthdata import SynthSpec, generate, housing_like, peak, true_function

PEAK_MAX = 2 * math.sin(0.2 * math.pi)


def g_oracle(r):
    return 0.1 / (r + 0.05) * math.sin(0.01 * math.pi / (r + 0.05))


def test_peak_at_center():
    assert abs(peak([0.4, 0.4], [0.4, 0.4]) - PEAK_MAX) <= 1e-9
    assert PEAK_MAX == pytest.approx(1.1755705, abs=1e-7)


def test_peak_envelope():
    assert abs(peak([0.95], [0.0])) <= 0.1


def test_peak_vectorized_matches_scalar():
    X = np.random.default_rng(0).uniform(size=(20, 3))
    c = np.array([0.1, 0.5, 0.9])
    assert np.allclose(peak(X, c), [g_oracle(np.linalg.norm(x - c)) for x in X], rtol=0, atol=1e-15)


def test_peak_dimension_mismatch():
    with pytest.raises(InputError):
        peak([0.1, 0.2], [0.3])


@given(x=arrays(float, 4, elements=st.floats(-10, 10)), c=arrays(float, 4, elements=st.floats(-10, 10)))
def test_peak_symmetric_and_bounded(x, c):
    assert peak(x, c) == peak(c, x)
    assert abs(peak(x, c)) <= 2.0


def test_uni_peak_value():
    assert true_function("uni_peak", 1)(np.array([0.4]))[0] == pytest.approx(1.1755705, abs=1e-7)


def test_double_peak_value():
    eta = true_function("double_peak", 1)
    expected = g_oracle(0.3) + 0.4 * PEAK_MAX
    assert eta(np.array([0.7]))[0] == pytest.approx(expected, abs=1e-12)
    # the rounded two-term hand sum 0.02563 + 0.47023 carries ~2e-5 of rounding
    assert eta(np.array([0.7]))[0] == pytest.approx(0.49586, abs=5e-5)


def test_double_is_uni_plus_shifted():
    X = np.random.default_rng(1).uniform(size=(50, 2))
    uni = true_function("uni_peak", 2)(X)
    shifted = np.array([g_oracle(np.linalg.norm(x - 0.7)) for x in X])
    assert np.allclose(true_function("double_peak", 2)(X), uni + 0.4 * shifted, rtol=0, atol=1e-14)


def test_unknown_shape():
    with pytest.raises(InputError):
        true_function("triple_peak", 1)
    with pytest.raises(InputError):
        SynthSpec(shape="flat")


def test_noise_free():
    data, eta = generate(SynthSpec(n=100, d=2, noise_sd=0.0, seed=3))
    assert np.array_equal(data.y, eta(data.X))


def test_determinism_and_seed_dependence():
    a, _ = generate(SynthSpec(n=50, d=3, seed=4))
    b, _ = generate(SynthSpec(n=50, d=3, seed=4))
    c, _ = generate(SynthSpec(n=50, d=3, seed=5))
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    assert not np.array_equal(a.X, c.X)
    assert a.X.min() >= 0 and a.X.max() < 1


def test_noise_stream_independent_of_x():
    a, eta = generate(SynthSpec(n=200, noise_sd=0.1, seed=6))
    b, _ = generate(SynthSpec(n=200, noise_sd=0.2, seed=6))
    assert np.array_equal(a.X, b.X)
    assert np.allclose(b.y - eta(b.X), 2 * (a.y - eta(a.X)))


# The majority-slice skew is a property of the regression surface; at
# noise_sd = 0.1 the noise spreads the flat region over 2-3 slices.
def test_response_skew_d1():
    data, _ = generate(SynthSpec(n=10_000, d=1, noise_sd=0.0, seed=0))
    s = make_slices(data.y, "fixed:10")
    # the lowest slice holds the near-zero flat region
    assert int(np.argmax(s.counts)) == 0
    assert s.boundaries[1] < 0.15
    assert s.counts[0] > 5000


@pytest.mark.parametrize("d", [1, 2, 4, 6])
def test_response_skew_grid(d):
    data, _ = generate(SynthSpec(n=10_000, d=d, noise_sd=0.0, seed=d))
    counts = make_slices(data.y, "fixed:10").counts
    assert counts.max() > 5000


def test_housing_like_schema():
    data = housing_like(500, seed=2)
    assert data.feature_names == ("longitude", "latitude", "cbd_distance")
    assert data.response_name == "price_per_sqm"
    assert data.y.min() >= 20 and data.y.max() <= 30000
    # right skew: mean well above median
    assert np.mean(data.y) > np.median(data.y)

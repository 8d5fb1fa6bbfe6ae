import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from defectgas import EmpiricalCDF, GridMismatch, RandomnessHandle, ks_distance, wilson_band
from defectgas.stats import MomentAccumulator, SurvivalAccumulator, combined_halfwidth

GRID = np.array([0.0, 0.5, 1.0, 2.0])


def cdf_of(values, grid=GRID):
    return SurvivalAccumulator(grid).add(np.asarray(values, dtype=float)).to_cdf()


def test_wilson_edges():
    assert wilson_band(0, 100)[0] == 0.0
    assert wilson_band(100, 100)[1] == 1.0


def test_wilson_half():
    lo, hi = wilson_band(50, 100)
    # closed form: centre 0.5, half width z sqrt(0.25/100 + z^2/4e4) / (1 + z^2/100)
    z = 1.959963984540054
    half = z * math.sqrt(0.25 / 100 + z * z / 40000) / (1 + z * z / 100)
    assert lo < 0.5 < hi
    assert hi - lo == pytest.approx(2 * half, rel=1e-9)
    assert hi - lo == pytest.approx(0.19, abs=0.005)


@given(st.integers(1, 10_000), st.data())
def test_wilson_contains_estimate(n, data):
    k = data.draw(st.integers(0, n))
    lo, hi = wilson_band(k, n)
    assert 0.0 <= lo <= k / n <= hi <= 1.0


def test_survival_at_zero_is_one():
    cdf = cdf_of([0.1, 0.7, 3.0])
    assert cdf.at(0.0) == 1.0
    assert cdf.survival.tolist() == [1.0, 2 / 3, 1 / 3, 1 / 3]


def test_censored_values_survive():
    cdf = cdf_of([math.inf, math.inf, 0.2])
    assert cdf.censored_count == 2
    assert cdf.at(2.0) == pytest.approx(2 / 3)


@settings(max_examples=50)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=60), st.integers(0, 60))
def test_merge_equals_single_pass(values, cut):
    cut = min(cut, len(values))
    whole = SurvivalAccumulator(GRID).add(np.array(values))
    parts = SurvivalAccumulator(GRID).add(np.array(values[:cut])).merge(SurvivalAccumulator(GRID).add(np.array(values[cut:])))
    a, b = whole.to_cdf(), parts.to_cdf()
    assert np.array_equal(a.survival, b.survival) and a.n == b.n


@settings(max_examples=50)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=60))
def test_survival_monotone(values):
    s = cdf_of(values).survival
    assert np.all(np.diff(s) <= 0)


def test_ks_examples():
    a = cdf_of([0.7, 1.5])
    assert ks_distance(a, a) == 0.0
    one = EmpiricalCDF(GRID, np.ones(4), 10, np.ones(4), np.ones(4))
    zero = EmpiricalCDF(GRID, np.zeros(4), 10, np.zeros(4), np.zeros(4))
    assert ks_distance(one, zero) == 1.0
    with pytest.raises(GridMismatch):
        ks_distance(a, cdf_of([1.0], grid=np.array([0.0, 1.0])))


def test_ks_two_independent_estimates():
    fine = np.linspace(0, 3, 31)
    close = 0
    for i in range(20):
        rng = RandomnessHandle(99, (i,)).generator()
        a = cdf_of(rng.exponential(size=100_000), fine)
        b = cdf_of(rng.exponential(size=100_000), fine)
        close += ks_distance(a, b) <= 0.01
    assert close >= 19


def test_moment_accumulator_merge():
    x = np.random.default_rng(0).poisson(3.0, size=1001)
    a = MomentAccumulator().add(x[:400]).merge(MomentAccumulator().add(x[400:]))
    assert a.mean == pytest.approx(x.mean(), rel=1e-12)
    assert a.variance == pytest.approx(x.var(ddof=1), rel=1e-10)
    assert a.std_error == pytest.approx(x.std(ddof=1) / math.sqrt(1001), rel=1e-10)


def test_combined_halfwidth():
    a = cdf_of(np.linspace(0, 3, 100))
    assert np.allclose(combined_halfwidth(a, a), math.sqrt(2) * a.half_width)


def test_csv_schema():
    text = cdf_of([0.25, 0.75]).to_csv()
    lines = text.split("\n")
    assert lines[0] == "T,survival,band_low,band_high,n,censored_count"
    assert lines[1].startswith("0.0,1.0,")
    assert "\r" not in text and text.endswith("\n")


def test_randomness_handle_split():
    h = RandomnessHandle(5)
    assert h.split(1).key() == RandomnessHandle(5, (1,)).key()
    assert h.split(1).key() != h.split(2).key()
    x = h.split(3).generator().random(4)
    assert np.array_equal(x, RandomnessHandle(5, (3,)).generator().random(4))

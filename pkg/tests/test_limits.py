import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from anderson_chaos.errors import DomainError, PreconditionError, ResolutionError
from anderson_chaos.fields import AverageSeries, ModelSpec, assemble, geometric_grid
from anderson_chaos.limits import (
    KS_FLOOR_99,
    S_GRID,
    TEST_FUNCTION_GAUSS,
    TEST_FUNCTIONS,
    EmpiricalMeasure,
    asclt_bound_check,
    cdf_gap_quadrature,
    clt_experiment,
    il_statistic,
    ks_distance,
    log_average_measure,
    log_weights,
    wasserstein1,
)

QUANTILES = stats.norm.ppf(np.arange(1, 1000) / 1000)


def _series(values, radii, seed=0):
    values = np.atleast_2d(values)
    return AverageSeries(np.asarray(radii, float), values, np.ones(len(radii)), seed, np.arange(len(values)))


# -- distances ---------------------------------------------------------------


def test_ks_examples():
    assert ks_distance(QUANTILES) < 2e-3
    assert ks_distance(np.zeros(100)) == pytest.approx(0.5)
    with pytest.raises(PreconditionError):
        ks_distance(np.zeros(10))
    with pytest.raises(DomainError):
        ks_distance([])


def test_ks_iid_normal_below_floor():
    n = 4000
    hits = sum(ks_distance(np.random.default_rng(s).standard_normal(n)) < KS_FLOOR_99 / math.sqrt(n)
               for s in range(100))
    assert hits >= 95


def test_w1_examples():
    assert wasserstein1(QUANTILES) < 5e-3
    assert wasserstein1(QUANTILES + 0.7) == pytest.approx(0.7, abs=5e-3)
    assert wasserstein1(np.zeros(50)) == pytest.approx(math.sqrt(2 / math.pi), rel=1e-12)


@given(arrays(float, st.integers(30, 200), elements=st.floats(-4, 4)))
def test_w1_matches_cdf_quadrature(x):
    assert wasserstein1(x) == pytest.approx(cdf_gap_quadrature(x), abs=1e-4)


@given(arrays(float, st.integers(30, 200), elements=st.floats(-4, 4)))
def test_distances_nonnegative_and_reflection_invariant(x):
    assert ks_distance(x) >= 0 and wasserstein1(x) >= 0
    assert wasserstein1(-x) == pytest.approx(wasserstein1(x), abs=1e-12)
    assert ks_distance(-x) == pytest.approx(ks_distance(x), abs=1e-12)


def test_weighted_measure_validation():
    with pytest.raises(DomainError):
        EmpiricalMeasure([0.0, 1.0], [0.6, 0.6])
    with pytest.raises(DomainError):
        EmpiricalMeasure([0.0, np.nan], [0.5, 0.5])
    m = EmpiricalMeasure([2.0, -1.0], [0.25, 0.75])
    assert list(m.values) == [-1.0, 2.0] and list(m.weights) == [0.75, 0.25]


# -- CLT ---------------------------------------------------------------------


def test_clt_first_chaos_is_gaussian(small_heat):
    m1 = assemble(ModelSpec("heat", small_heat.spec.kernel, small_heat.grid, truncation=1))
    res = clt_experiment(m1, [2.0, 4.0, 8.0], replicas=2000, seed=3, n_boot=20)
    assert np.all(res.ks < KS_FLOOR_99 / math.sqrt(2000))
    flipped = [ks_distance(-res.values[:, k]) for k in range(3)]
    assert np.allclose(flipped, res.ks, atol=2 * KS_FLOOR_99 / math.sqrt(2000))


def test_clt_needs_thousand_replicas(small_heat):
    with pytest.raises(PreconditionError):
        clt_experiment(small_heat, [2.0, 4.0], replicas=999)


# -- logarithmic averages ----------------------------------------------------


@given(st.lists(st.floats(1.01, 1.2), min_size=1, max_size=40))
def test_log_weights_normalized_and_proportional(steps):
    theta = np.cumprod([1.0] + steps)
    w = log_weights(theta)
    assert abs(w.sum() - 1) < 1e-12
    u = np.log(theta)
    du = np.diff(u)
    raw = np.zeros(len(u))
    raw[:-1] += du / 2
    raw[1:] += du / 2
    assert np.allclose(w, raw / raw.sum())


def test_dirac_average():
    radii = geometric_grid(1, 64, 1.1)
    la = log_average_measure(_series(np.zeros(len(radii)), radii), 64)
    for f, g, gap in zip(TEST_FUNCTIONS, TEST_FUNCTION_GAUSS, la.gaps):
        assert la.measure.expect(f) == pytest.approx(float(f(np.array(0.0))), abs=1e-15)
        assert gap == pytest.approx(abs(float(f(np.array(0.0))) - g), abs=1e-15)


def test_gaussian_dictionary_values():
    # E tanh(k N) = 0, E cos(fN) = exp(-f^2/2), E sin = 0
    assert np.allclose(TEST_FUNCTION_GAUSS[[1, 4, 6, 8]], 0.0, atol=1e-14)
    assert TEST_FUNCTION_GAUSS[7] == pytest.approx(math.exp(-0.5), rel=1e-12)
    assert TEST_FUNCTION_GAUSS[9] == pytest.approx(math.exp(-2.0), rel=1e-12)


def test_iid_paths_log_average_converges():
    # effective sample size grows like log T, so the gap shrinks like (log T)^-1/2
    Ts = (2.0**4, 2.0**8, 2.0**12, 2.0**16)
    radii = geometric_grid(1, 2**16, 1.02, extra=Ts)
    rng = np.random.default_rng(0)
    gaps = []
    for _ in range(50):
        s = _series(rng.standard_normal(len(radii)), radii)
        gaps.append([log_average_measure(s, T).sup_gap for T in Ts])
    mean = np.mean(gaps, axis=0)
    assert np.all(np.diff(mean) < 0)
    assert mean[-1] < 0.6 * mean[0]


def test_log_average_resolution_errors():
    coarse = geometric_grid(1, 64, 1.5)
    with pytest.raises(ResolutionError):
        log_average_measure(_series(np.zeros(len(coarse)), coarse), 64)
    fine = geometric_grid(2, 64, 1.1)
    with pytest.raises(ResolutionError):
        log_average_measure(_series(np.zeros(len(fine)), fine), 64)


# -- Ibragimov-Lifshits statistic --------------------------------------------


@pytest.fixture(scope="module")
def iid_il():
    radii = geometric_grid(1, 64, 1.1, extra=(2.0, 4.0, 8.0, 16.0, 32.0))
    rng = np.random.default_rng(7)
    return il_statistic(_series(rng.standard_normal((400, len(radii))), radii))


def test_il_invariants(iid_il):
    zero = int(np.flatnonzero(S_GRID == 0)[0])
    assert np.all(iid_il.values[:, :, zero] == 0)
    assert np.all(np.abs(iid_il.values) <= 2 + 1e-12)
    assert np.all(iid_il.even_gap() < 5)


def test_il_iid_paths_decay_and_cauchy(iid_il):
    assert iid_il.nonincreasing()
    assert np.all(np.diff(iid_il.sup_mean) < 0)
    i32, i64 = iid_il.partial_integral(32), iid_il.partial_integral(64)
    assert abs(i64 - i32) / i32 < 0.05


def test_il_preconditions():
    radii = geometric_grid(1, 64, 1.1, extra=(2.0, 4.0, 8.0, 16.0, 32.0))
    s = _series(np.zeros((10, len(radii))), radii)
    with pytest.raises(PreconditionError):
        il_statistic(s)
    s = _series(np.zeros((60, len(radii))), radii)
    with pytest.raises(DomainError):
        il_statistic(s, t_grid=(4.0, 128.0))
    with pytest.raises(DomainError):
        il_statistic(s, t_grid=(5.0,))


# -- bound checker -----------------------------------------------------------


def test_bound_half_exponents():
    b = asclt_bound_check(0.5, 0.5, 0.5)
    assert b.finite
    assert b.inner_A2_limit == pytest.approx(2.0, rel=1e-10)
    assert np.isfinite(b.A1) and np.isfinite(b.A2)


def test_bound_small_exponent_diverges():
    b = asclt_bound_check(1e-3, 0.5, 0.5)
    assert not b.finite
    assert b.tail_A2 > 0.01 * b.A2


def test_bound_case2_exponents():
    assert asclt_bound_check(0.25, 0.25, 0.25).finite


def test_bound_nonpositive_rejected():
    with pytest.raises(PreconditionError):
        asclt_bound_check(0.0, 0.5, 0.5)


@given(st.floats(0.05, 2.0), st.floats(0.05, 2.0), st.floats(0.05, 2.0), st.floats(0.0, 1.0))
def test_bound_monotone_in_exponents(b1, b2, b3, bump):
    base = asclt_bound_check(b1, b2, b3)
    for i in range(3):
        args = [b1, b2, b3]
        args[i] += bump
        up = asclt_bound_check(*args)
        assert up.A1 <= base.A1 * (1 + 1e-9) and up.A2 <= base.A2 * (1 + 1e-9)


def test_bound_wasserstein_constants():
    tv, w = asclt_bound_check(0.5, 0.5, 0.5), asclt_bound_check(0.5, 0.5, 0.5, T_s=3.0)
    assert w.A2 / tv.A2 == pytest.approx(12 / 8)
    assert w.A1 / tv.A1 == pytest.approx(6 * math.sqrt(2) / 4)

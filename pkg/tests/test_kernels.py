import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from anderson_chaos.errors import DomainError, UnsupportedConfigurationError
from anderson_chaos.kernels import (
    CorrelationKernel,
    GreenKernel,
    SpatialKernel,
    TemporalKernel,
    correlation_cell_integral,
    dalang_check,
    green_eval,
    green_fourier,
    heat_interval_mass,
    riesz_constant,
    wave2_rect_mass,
)

HEAT1 = GreenKernel("heat", 1)
WAVE1 = GreenKernel("wave", 1)
WAVE2 = GreenKernel("wave", 2)


# -- Green functions ---------------------------------------------------------


def test_heat_at_origin():
    assert green_eval(HEAT1, 1.0, 0.0) == pytest.approx((2 * math.pi) ** -0.5, rel=1e-12)


def test_wave1_value_inside_cone():
    assert green_eval(WAVE1, 2.0, 1.0) == 0.5


@pytest.mark.parametrize("kernel", [HEAT1, WAVE1, WAVE2, GreenKernel("heat", 2)])
def test_green_vanishes_for_nonpositive_time(kernel):
    x = 0.3 if kernel.dimension == 1 else np.array([0.1, 0.2])
    assert green_eval(kernel, -0.3, x) == 0.0
    assert green_eval(kernel, 0.0, x) == 0.0


def test_wave_beyond_dimension_two_is_unsupported():
    with pytest.raises(UnsupportedConfigurationError):
        GreenKernel("wave", 3)


def test_fourier_examples():
    assert green_fourier(HEAT1, 2.0, 1.0) == pytest.approx(math.exp(-1), rel=1e-12)
    assert green_fourier(WAVE1, 1.0, 0.0) == pytest.approx(1.0)
    assert abs(green_fourier(WAVE1, math.pi, 1.0)) < 1e-12
    with pytest.raises(DomainError):
        green_fourier(HEAT1, 0.0, 1.0)


def test_heat_mass_is_one_on_time_grid():
    for t in np.linspace(0.04, 4.0, 100):
        mass = integrate.quad(lambda x: green_eval(HEAT1, t, x), -np.inf, np.inf, epsabs=1e-12)[0]
        assert abs(mass - 1) < 1e-6


def test_heat_fourier_matches_discrete_transform():
    t = 0.7
    x = np.linspace(-30, 30, 2**14, endpoint=False)
    dx = x[1] - x[0]
    g = green_eval(HEAT1, t, x)
    xi = np.array([0.0, 0.5, 1.0, 2.0, 3.0])
    dft = np.array([np.sum(g * np.exp(-1j * x * k)) * dx for k in xi]).real
    assert np.allclose(dft, green_fourier(HEAT1, t, xi), rtol=1e-3, atol=0)


def test_wave2_rect_mass_whole_disc():
    # the full mass of G_tau in d=2 is tau
    assert wave2_rect_mass(0.8, [-1, -1], [1, 1]) == pytest.approx(0.8, rel=1e-10)


@given(st.floats(0.05, 2.0), st.floats(-3, 3), st.floats(0.01, 2.0))
def test_heat_interval_mass_matches_quadrature(tau, lo, width):
    ref = integrate.quad(lambda x: green_eval(HEAT1, tau, x), lo, lo + width)[0]
    assert heat_interval_mass(tau, lo, lo + width) == pytest.approx(ref, abs=1e-10)


@given(st.floats(0.05, 3.0), st.floats(0.0, 3.0))
def test_wave_kernels_are_nonnegative_with_cone_support(t, r):
    val = green_eval(WAVE2, t, np.array([r, 0.0]))
    assert val >= 0
    if r >= t:
        assert val == 0
    assert green_eval(WAVE1, t, r) in (0.0, 0.5)


# -- correlation kernels and cell integrals ---------------------------------


def test_constant_time_kernel_unit_cells():
    k = CorrelationKernel(TemporalKernel("constant"), SpatialKernel())
    assert correlation_cell_integral(k, [0, 1], [0, 1], axis="time") == pytest.approx(1.0)


def test_riesz_half_diagonal_cell():
    # closed form 2 h^(2-a) / ((1-a)(2-a)) = (8/3) h^(3/2) at a = 1/2
    k = CorrelationKernel(TemporalKernel(), SpatialKernel("riesz", 1, alpha=0.5))
    h = 0.1
    val = correlation_cell_integral(k, [0, h], [0, h])
    assert val == pytest.approx(8 / 3 * h**1.5, rel=1e-10)
    # integrate out the singular diagonal analytically in v: int_0^h |u-v|^-1/2 dv
    inner = lambda u: 2 * (math.sqrt(u) + math.sqrt(h - u))  # noqa: E731
    ref = integrate.quad(inner, 0, h)[0]
    assert val == pytest.approx(ref, rel=1e-5)


def test_exponential_adjacent_unit_cells():
    k = CorrelationKernel(TemporalKernel(), SpatialKernel("exponential", 1))
    val = correlation_cell_integral(k, [0, 1], [1, 2])
    assert val == pytest.approx((1 - math.exp(-1)) ** 2, rel=1e-12)
    ref = integrate.dblquad(lambda v, u: math.exp(-abs(u - v)), 0, 1, 1, 2)[0]
    assert val == pytest.approx(ref, rel=1e-8)


def test_far_narrow_time_cells_match_midpoint_rule():
    k = CorrelationKernel(TemporalKernel("exponential", 1.0, 1.0), SpatialKernel())
    h = 0.1
    val = correlation_cell_integral(k, [0, h], [5, 5 + h], axis="time")
    assert val == pytest.approx(math.exp(-5) * h * h, rel=0.01)


def test_riesz_not_integrable_is_domain_error():
    k = CorrelationKernel(TemporalKernel(), SpatialKernel("riesz", 1, alpha=1.2))
    with pytest.raises(DomainError):
        correlation_cell_integral(k, [0, 1], [0, 1])


KERNELS = [
    CorrelationKernel(TemporalKernel("exponential", 1.0, 0.7), SpatialKernel("exponential", 1, length=0.6)),
    CorrelationKernel(TemporalKernel("power", hurst=0.7), SpatialKernel("riesz", 1, alpha=0.5)),
    CorrelationKernel(TemporalKernel("constant"), SpatialKernel("gaussian", 1, length=1.3)),
]


@given(st.sampled_from(KERNELS), st.floats(-3, 3), st.floats(0.05, 1.5), st.floats(-3, 3), st.floats(0.05, 1.5),
       st.sampled_from(["time", "space"]))
def test_cell_integral_symmetric_and_nonnegative(kernel, a, wa, b, wb, axis):
    if axis == "time":
        a, b = abs(a), abs(b)
    ab = correlation_cell_integral(kernel, [a, a + wa], [b, b + wb], axis=axis)
    ba = correlation_cell_integral(kernel, [b, b + wb], [a, a + wa], axis=axis)
    assert ab >= 0
    assert ab == pytest.approx(ba, rel=1e-9, abs=1e-14)


def test_cell_integral_2d_riesz_against_quadrature():
    k = CorrelationKernel(TemporalKernel(), SpatialKernel("riesz", 2, alpha=0.5))
    A, B = [[0, 1], [0, 1]], [[1.5, 2.5], [0, 1]]
    f = lambda y2, y1, x2, x1: ((x1 - y1) ** 2 + (x2 - y2) ** 2) ** -0.25  # noqa: E731
    ref = integrate.nquad(f, [[1.5, 2.5], [0, 1], [0, 1], [0, 1]], opts={"epsrel": 1e-6})[0]
    assert correlation_cell_integral(k, A, B) == pytest.approx(ref, rel=1e-4)


# -- Dalang ------------------------------------------------------------------


def test_dalang_examples():
    assert dalang_check(SpatialKernel("riesz", 2, alpha=1.0)).satisfied
    bad = dalang_check(SpatialKernel("riesz", 3, alpha=2.5))
    assert not bad.satisfied and bad.divergent
    good = dalang_check(SpatialKernel("exponential", 1))
    assert good.satisfied and np.isfinite(good.integral_estimate)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_dalang_riesz_exact_range(d):
    for alpha in np.round(np.arange(0.1, 3.0, 0.1), 10):
        expected = 0 < alpha < min(2, d)
        assert dalang_check(SpatialKernel("riesz", d, alpha=float(alpha))).satisfied == expected


def test_riesz_constant_roundtrip_d1():
    # |x|^-a = int exp(-i x xi) c_a |xi|^(a-1) dxi, checked at x = 1.7
    a, x = 0.5, 1.7
    c = riesz_constant(a, 1)
    head = integrate.quad(lambda k: k ** (a - 1) * math.cos(k * x), 0, 1)[0]
    tail = integrate.quad(lambda k: k ** (a - 1), 1, np.inf, weight="cos", wvar=x)[0]
    val = 2 * c * (head + tail)
    assert val == pytest.approx(x**-a, rel=1e-6)


def test_spectral_density_exponential_roundtrip():
    s = SpatialKernel("exponential", 1, length=0.8)
    x = 0.9
    val = 2 * integrate.quad(lambda k: s.spectral_density(k), 0, np.inf, weight="cos", wvar=x)[0]
    assert val == pytest.approx(math.exp(-x / 0.8), rel=1e-6)


def test_violations_report_riesz_range():
    msgs = SpatialKernel("riesz", 1, alpha=1.5).violations()
    assert any("(0, 1)" in m for m in msgs)
    assert TemporalKernel("power", hurst=0.4).violations()
    assert TemporalKernel("exponential", scale=0.0).violations()

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from anderson_chaos.cases import case_kernel, case_spec
from anderson_chaos.chaos import covariance, second_moment
from anderson_chaos.errors import DomainError, UnsupportedConfigurationError
from anderson_chaos.fields import (
    AverageSeries,
    ModelSpec,
    PicardSampler,
    assemble,
    average_representation,
    ball_weights,
    default_half_width,
    dense_average_samples,
    geometric_grid,
    sample_path,
    sample_paths,
    solution_representation,
    solution_samples,
)
from anderson_chaos.kernels import SpatialKernel, CorrelationKernel, TemporalKernel
from anderson_chaos.noise import GridSpec, sample_realizations


def test_zeroth_order_is_constant(tiny_heat):
    m0 = assemble(ModelSpec("heat", case_kernel(1), tiny_heat.grid, truncation=0))
    rep = solution_representation(m0, 0.0)
    assert rep.mean == 1.0 and rep.truncation == 0
    assert second_moment(rep, m0.noise) == 1.0
    assert average_representation(m0, 1.0).mean == 0.0
    assert second_moment(average_representation(m0, 1.0), m0.noise) == 0.0


@pytest.mark.parametrize("fixture", ["tiny_heat", "tiny_wave_riesz"])
def test_solution_moments(fixture, request):
    m = request.getfixturevalue(fixture)
    for x in (-1.2, 0.0, 0.7):
        rep = solution_representation(m, x)
        assert rep.mean == 1.0
        assert second_moment(rep, m.noise) > 1.0
        assert rep.info["captured_fraction"] > 0.9


def test_point_covariance_nonnegative(tiny_heat):
    reps = [solution_representation(tiny_heat, x) for x in (-2.5, -0.5, 0.5, 2.5)]
    for a in reps:
        for b in reps:
            assert covariance(a, b, tiny_heat.noise) >= -1e-15


def test_picard_sampler_matches_dense_wick(tiny_heat, tiny_wave_riesz):
    # two independent constructions of F_R on the same noise: sample-by-sample equality
    for m in (tiny_heat, tiny_wave_riesz):
        r = sample_realizations(m.noise, 9, 30)
        dense = dense_average_samples(m, 1.5, r)
        u = PicardSampler(m).solution(r.w)
        via_sampler = (u - 1.0) @ ball_weights(m.grid, 1.5)
        assert np.allclose(dense, via_sampler, rtol=1e-9, atol=1e-12)


def test_average_variance_matches_response(tiny_heat):
    rep = average_representation(tiny_heat, 1.5)
    assert second_moment(rep, tiny_heat.noise) == pytest.approx(tiny_heat.average_covariance(1.5, 1.5), rel=1e-10)


def test_average_variance_monte_carlo(small_heat):
    n, R = 4000, 4.0
    series = sample_paths(small_heat, [R], seed=21, count=n)
    var = series.values[:, 0].var()
    assert abs(var - 1) < 0.05
    assert abs(series.values[:, 0].mean()) < 5 / math.sqrt(n)


def test_truncation_monotone(small_heat):
    var = [assemble(ModelSpec("heat", small_heat.spec.kernel, small_heat.grid, truncation=p))
           .average_covariance(4.0, 4.0) for p in (1, 2, 3)]
    assert var[0] < var[1] < var[2]


def test_nested_additivity(small_heat):
    r = sample_realizations(small_heat.noise, 3, 1)
    u = PicardSampler(small_heat).solution(r.w)[0]
    w1, w2 = ball_weights(small_heat.grid, 2.0), ball_weights(small_heat.grid, 5.5)
    annulus = w2 - w1
    assert np.all(annulus >= 0)
    f1, f2 = (u - 1) @ w1, (u - 1) @ w2
    assert f2 - f1 == pytest.approx((u - 1) @ annulus, abs=1e-12)


def test_path_determinism_and_coupling(small_heat):
    radii = [1.0, 2.0, 4.0]
    batch = sample_paths(small_heat, radii, seed=5, count=3, start=10)
    single = sample_path(small_heat, radii, sample_realizations(small_heat.noise, 5, 1, start=12)[0])
    assert np.allclose(batch.values[2], single, rtol=1e-12)
    again = sample_paths(small_heat, radii, seed=5, count=3, start=10)
    assert np.array_equal(batch.values, again.values)


def test_interior_variance_constant(small_heat):
    comps = solution_samples(small_heat, seed=1, count=4000)
    u = comps.sum(axis=0)
    exact = np.array([sum(small_heat.point_response(j) @ small_heat.prop.K0[j]) for j in (8, 12, 16)])
    assert np.ptp(exact) / exact.mean() < 1e-6
    emp = u[[8, 12, 16]].var(axis=1)
    assert np.all(np.abs(emp / exact - 1) < 5 * math.sqrt(2 / 4000) * 2)


def test_radius_outside_box_rejected(small_heat):
    with pytest.raises(DomainError):
        average_representation(small_heat, small_heat.grid.x_max - 0.5)
    with pytest.raises(DomainError):
        small_heat.check_radius(0.0)


@given(st.floats(0.1, 6.0))
def test_ball_weights_volume_d1(R):
    g = GridSpec(1.0, 2, 8.0, 32)
    w = ball_weights(g, R)
    assert w.sum() == pytest.approx(2 * R, rel=1e-12)
    assert np.all((w >= 0) & (w <= g.dx + 1e-15))


def test_ball_weights_area_d2():
    g = GridSpec(1.0, 2, 4.0, 16, 2)
    assert ball_weights(g, 2.3).sum() == pytest.approx(math.pi * 2.3**2, rel=1e-7)


def test_wave_in_three_dimensions_rejected():
    k = CorrelationKernel(TemporalKernel(), SpatialKernel("exponential", 3))
    with pytest.raises(UnsupportedConfigurationError):
        ModelSpec("wave", k, GridSpec(1.0, 2, 2.0, 2, 3))


def test_padding_rule():
    assert default_half_width("wave", 10, 1.0) == 11.0
    assert default_half_width("heat", 10, 4.0) == pytest.approx(20.0)
    assert case_spec(2, r_max=8).grid.x_max >= 8 + 1 + 3


def test_geometric_grid():
    g = geometric_grid(1, 64, 2.0, extra=(3.0, 100.0))
    assert list(g) == [1, 2, 3, 4, 8, 16, 32, 64]


def test_series_roundtrip(tmp_path, small_heat):
    s = sample_paths(small_heat, [1.0, 2.0], seed=2, count=4)
    back = AverageSeries.from_npz(s.to_npz(tmp_path / "s.npz"))
    assert np.array_equal(back.values, s.values)
    csvd = AverageSeries.from_csv(s.to_csv(tmp_path / "s.csv"), sigma=s.sigma)
    assert np.array_equal(csvd.values, s.values)
    assert np.array_equal(csvd.indices, s.indices)

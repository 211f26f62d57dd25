import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matrixtx import (
    ChannelParams,
    DomainError,
    GeometryError,
    MatrixParams,
    absorbed_fraction_point,
    absorbed_fraction_surface,
    hitting_rate_surface,
    integrate,
    peak_time_point,
)
from matrixtx.regimes import absorption_time

from conftest import eval_channel, eval_matrix


@pytest.mark.parametrize("d", [2e-6, 5e-6, 20e-6])
def test_long_time_limit_is_radius_over_distance(d):
    m, c = eval_matrix(), eval_channel(d)
    assert absorbed_fraction_surface(math.inf, m, c) == pytest.approx(c.r_rx / d, abs=1e-15)
    assert absorbed_fraction_point(math.inf, c) == pytest.approx(c.r_rx / d, abs=1e-15)
    # the approach is slow, ~ (d - r_rx) / sqrt(pi D_c t)
    assert absorbed_fraction_surface(1e12, m, c) == pytest.approx(c.r_rx / d, rel=1e-6)


def test_everything_vanishes_at_zero():
    m, c = eval_matrix(), eval_channel()
    assert hitting_rate_surface(0.0, m, c) == 0.0
    assert absorbed_fraction_surface(0.0, m, c) == 0.0
    assert absorbed_fraction_point(0.0, c) == 0.0


@pytest.mark.parametrize("d", [2e-6, 5e-6])
def test_surface_cdf_is_integral_of_density(d):
    m, c = eval_matrix(), eval_channel(d)
    for t in [1e-4, 1e-3, 1e-2, 1e-1]:
        q = integrate(lambda u: hitting_rate_surface(u, m, c), 0.0, t, rel_tol=1e-11)
        assert absorbed_fraction_surface(t, m, c) == pytest.approx(q, rel=1e-9, abs=1e-15)


def test_surface_density_is_derivative_of_cdf_over_three_decades():
    m, c = eval_matrix(), eval_channel()
    for t in np.geomspace(1e-3, 1.0, 13):
        h = 1e-5 * t
        fd = (absorbed_fraction_surface(t + h, m, c) - absorbed_fraction_surface(t - h, m, c)) / (2 * h)
        assert hitting_rate_surface(t, m, c) == pytest.approx(fd, rel=1e-6)


def test_surface_density_by_direct_average_over_the_sphere():
    # average the point-source density over the carrier surface numerically
    m, c = eval_matrix(), eval_channel()

    def point_density(t, rho):
        s = rho - c.r_rx
        return c.r_rx / rho * s / math.sqrt(4 * math.pi * c.D_c * t ** 3) * math.exp(-s * s / (4 * c.D_c * t))

    for t in [2e-3, 2e-2]:
        avg = integrate(
            lambda u: 0.5 * point_density(t, math.sqrt(c.d ** 2 + m.a ** 2 - 2 * c.d * m.a * u)), -1.0, 1.0,
            rel_tol=1e-11,
        )
        assert hitting_rate_surface(t, m, c) == pytest.approx(avg, rel=1e-8)


@settings(max_examples=50)
@given(st.floats(1e-6, 1e3), st.floats(2.05e-6, 50e-6))
def test_surface_density_is_non_negative(t, d):
    assert hitting_rate_surface(t, eval_matrix(), eval_channel(d)) >= 0.0


def test_point_peak_time():
    c = eval_channel()
    t0 = peak_time_point(c)
    rate = lambda t: (absorbed_fraction_point(t * (1 + 1e-6), c) - absorbed_fraction_point(t * (1 - 1e-6), c)) / (2e-6 * t)  # noqa: E731
    assert rate(t0) > rate(0.9 * t0) and rate(t0) > rate(1.1 * t0)


def test_surface_and_point_converge():
    m, c = eval_matrix(), eval_channel()
    t = 10 * absorption_time(0.99, c)
    diff = abs(absorbed_fraction_surface(t, m, c) - absorbed_fraction_point(t, c))
    assert diff < 1e-3 * c.r_rx / c.d


def test_surface_release_arrives_earlier_than_point_release():
    m, c = eval_matrix(), eval_channel(2e-6)
    t = np.geomspace(1e-5, 1e-3, 20)
    assert np.all(absorbed_fraction_surface(t, m, c) > absorbed_fraction_point(t, c))


@settings(max_examples=30)
@given(st.floats(0.1, 10.0), st.floats(1e-3, 10.0))
def test_lengths_and_squared_times_scale_together(lam, s):
    m1, c1 = eval_matrix(), eval_channel(5e-6)
    m2 = MatrixParams(m1.a * lam, m1.D_m, 1.0)
    c2 = ChannelParams(c1.D_c, c1.d * lam, c1.r_rx * lam)
    t1 = s * 1e-3
    t2 = t1 * lam ** 2
    assert absorbed_fraction_surface(t2, m2, c2) == pytest.approx(absorbed_fraction_surface(t1, m1, c1), rel=1e-10, abs=1e-300)
    assert absorbed_fraction_point(t2, c2) == pytest.approx(absorbed_fraction_point(t1, c1), rel=1e-10, abs=1e-300)


def test_vector_and_scalar_inputs():
    m, c = eval_matrix(), eval_channel()
    t = np.array([1e-3, 1e-2])
    v = absorbed_fraction_surface(t, m, c)
    assert isinstance(v, np.ndarray) and v.shape == (2,)
    assert isinstance(absorbed_fraction_surface(1e-3, m, c), float)
    with pytest.raises(DomainError):
        hitting_rate_surface(-1.0, m, c)


def test_overlapping_bodies_are_rejected():
    with pytest.raises(GeometryError):
        absorbed_fraction_surface(1.0, MatrixParams(3e-6, 1e-9, 1.0), eval_channel(3e-6))

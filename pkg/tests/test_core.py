import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matrixtx import (
    AccuracyError,
    BracketError,
    ChannelParams,
    DomainError,
    GeometryError,
    GridError,
    MatrixParams,
    ReleaseCurve,
    ResponseCurve,
    TimeGrid,
    erf,
    erfc,
    erfc_inv,
    find_root_monotone,
    integrate,
)

mpmath.mp.dps = 40


# ---------------------------------------------------------------------------
# special functions against arbitrary precision
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("x", [-6.0, -2.5, -0.3, 0.0, 1e-8, 0.5, 1.7, 3.2, 5.9])
def test_erf_erfc_match_mpmath(x):
    assert erf(x) == pytest.approx(float(mpmath.erf(x)), rel=1e-14, abs=1e-300)
    assert erfc(x) == pytest.approx(float(mpmath.erfc(x)), rel=1e-13, abs=1e-300)


@given(st.floats(-6.0, 6.0))
def test_erf_plus_erfc_is_one(x):
    assert abs(erf(x) + erfc(x) - 1.0) < 1e-14


@pytest.mark.parametrize("y", [1e-300, 1e-30, 1e-10, 0.01, 0.5, 0.99, 1.0, 1.3, 1.99, 2 - 1e-12])
def test_erfc_inv_matches_mpmath(y):
    expected = float(mpmath.findroot(lambda x: mpmath.erfc(x) - mpmath.mpf(y), erfc_inv(y)))
    assert erfc_inv(y) == pytest.approx(expected, rel=1e-13, abs=1e-15)


def test_erfc_inv_known_value():
    # the 99 % level used for the absorption time
    assert erfc_inv(0.99) == pytest.approx(0.008862501280950, rel=1e-12)
    assert erfc_inv(1.0) == 0.0


@given(st.floats(0.01, 1.99))
def test_erfc_inv_round_trip(y):
    assert abs(erfc(erfc_inv(y)) - y) < 1e-11 * y


@given(st.floats(1e-300, 0.01))
def test_erfc_inv_round_trip_deep_tail(y):
    assert erfc(erfc_inv(y)) == pytest.approx(y, rel=1e-11)


def test_erfc_inv_is_vectorized_and_odd_about_one():
    y = np.array([0.2, 0.7, 1.3, 1.8])
    x = erfc_inv(y)
    assert x.shape == y.shape
    assert np.allclose(x[:2], -x[::-1][:2], rtol=1e-14)


@pytest.mark.parametrize("y", [0.0, 2.0, -0.1, 2.5, float("nan"), float("inf")])
def test_erfc_inv_rejects_outside_open_interval(y):
    with pytest.raises(DomainError):
        erfc_inv(y)


# ---------------------------------------------------------------------------
# quadrature and root finding
# ---------------------------------------------------------------------------


def test_integrate_polynomial_exact():
    assert integrate(lambda x: 3 * x * x, 0.0, 2.0) == pytest.approx(8.0, rel=1e-13)


def test_integrate_half_line_gaussian():
    val = integrate(lambda x: math.exp(-x * x), 0.0, math.inf)
    assert val == pytest.approx(math.sqrt(math.pi) / 2, rel=1e-10)


def test_integrate_half_line_shifted_start():
    val = integrate(lambda x: math.exp(-x), 2.0, math.inf)
    assert val == pytest.approx(math.exp(-2.0), rel=1e-10)


def test_integrate_inverse_sqrt_endpoint_singularity():
    val = integrate(lambda x: 0.0 if x == 0 else 1.0 / math.sqrt(x), 0.0, 1.0)
    assert val == pytest.approx(2.0, rel=1e-9)


def test_integrate_breakpoints_help_with_a_kink():
    f = lambda x: abs(x - 0.3137)  # noqa: E731
    exact = 0.5 * (0.3137 ** 2 + 0.6863 ** 2)
    assert integrate(f, 0.0, 1.0, points=[0.3137]) == pytest.approx(exact, rel=1e-13)


def test_integrate_empty_interval_and_bad_order():
    assert integrate(math.sin, 1.0, 1.0) == 0.0
    with pytest.raises(DomainError):
        integrate(math.sin, 2.0, 1.0)


def test_integrate_reports_failure_on_budget_exhaustion():
    with pytest.raises(AccuracyError) as info:
        integrate(lambda x: math.sin(1.0 / x) if x > 0 else 0.0, 0.0, 1.0, rel_tol=1e-12, limit=5)
    assert math.isfinite(info.value.estimate)


@settings(max_examples=50)
@given(
    st.floats(-5, 5), st.floats(-5, 5),
    st.lists(st.floats(-3, 3), min_size=1, max_size=5),
    st.lists(st.floats(-3, 3), min_size=1, max_size=5),
)
def test_integrate_is_linear_on_polynomials(alpha, beta, pc, qc):
    p = np.polynomial.Polynomial(pc)
    q = np.polynomial.Polynomial(qc)
    lo, hi = -1.0, 2.0
    ip = integrate(lambda x: p(x), lo, hi)
    iq = integrate(lambda x: q(x), lo, hi)
    both = integrate(lambda x: alpha * p(x) + beta * q(x), lo, hi)
    scale = abs(alpha) * (abs(ip) + 1) + abs(beta) * (abs(iq) + 1)
    assert both == pytest.approx(alpha * ip + beta * iq, abs=1e-10 * scale)


def test_find_root_monotone():
    assert find_root_monotone(lambda x: x ** 3 - 2.0, 0.0, 2.0) == pytest.approx(2 ** (1 / 3), rel=1e-14)
    assert find_root_monotone(lambda x: x, 0.0, 1.0) == 0.0
    with pytest.raises(BracketError):
        find_root_monotone(lambda x: x + 1.0, 0.0, 1.0)


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


def test_matrix_params_validation():
    m = MatrixParams(1e-6, 1e-9, 25.0)
    assert m.diffusion_time == pytest.approx(1e-3)
    assert m.with_ratio(4.0).loading_ratio == 4.0
    assert MatrixParams(1e-6, 0.0, 1.0).diffusion_time == math.inf
    for bad in [(0.0, 1e-9, 1.0), (1e-6, -1e-9, 1.0), (1e-6, 1e-9, 0.0), (1e-6, 1e-9, float("nan"))]:
        with pytest.raises(DomainError):
            MatrixParams(*bad)
    with pytest.raises(DomainError):
        MatrixParams(1e-6, 1e-9, 1.0, M_inf=0.5)


def test_channel_params_validation_and_clearance():
    c = ChannelParams(1e-9, 5e-6, 1e-6)
    assert c.hit_fraction == pytest.approx(0.2)
    with pytest.raises(DomainError):
        ChannelParams(0.0, 5e-6, 1e-6)
    with pytest.raises(GeometryError):
        ChannelParams(1e-9, 1e-6, 1e-6)
    m = MatrixParams(1e-6, 1e-9, 1.0)
    c.check_clearance(m)
    ChannelParams(1e-9, 2e-6, 1e-6).check_clearance(m)  # touching is allowed
    with pytest.raises(GeometryError):
        ChannelParams(1e-9, 1.9e-6, 1e-6).check_clearance(m)


def test_time_grid_constructors():
    g = TimeGrid.linear(1.0, 11)
    assert len(g) == 11 and g.points[-1] == 1.0 and g.spacing == "linear"
    lg = TimeGrid.log(1e-3, 1.0, 4, include_zero=True)
    assert lg.points[0] == 0.0 and lg.points[1] == pytest.approx(1e-3)
    assert g == TimeGrid.linear(1.0, 11)
    assert g != lg
    with pytest.raises(ValueError):
        g.points[0] = 5.0


@pytest.mark.parametrize("pts", [[0.0], [0.0, 0.0], [1.0, 0.5], [-1.0, 1.0], [0.0, float("inf")]])
def test_time_grid_rejects_bad_points(pts):
    with pytest.raises(GridError):
        TimeGrid(np.array(pts))


def test_release_curve_invariants():
    g = TimeGrid.linear(1.0, 3)
    c = ReleaseCurve(g, [0.0, 0.4, 0.9], [1.0, 0.5, 0.1])
    assert c.at(0.25) == pytest.approx(0.2)
    with pytest.raises(DomainError):
        ReleaseCurve(g, [0.0, 0.5, 0.4])
    with pytest.raises(DomainError):
        ReleaseCurve(g, [0.0, 0.5, 1.2])
    with pytest.raises(DomainError):
        ReleaseCurve(g, [0.0, 0.4, 0.9], [1.0, 0.2, 0.5])
    with pytest.raises(GridError):
        ReleaseCurve(g, [0.0, 1.0])


def test_response_curve_invariants():
    g = TimeGrid.linear(1.0, 3)
    r = ResponseCurve(g, [0.0, 1.0, 2.0])
    assert r.within_bound(2.0) and not r.within_bound(1.5)
    with pytest.raises(DomainError):
        ResponseCurve(g, [0.0, 2.0, 1.0])
    with pytest.raises(DomainError):
        ResponseCurve(g, [-1.0, 0.0, 1.0])


def test_integrate_rejects_unreachable_tolerance():
    with pytest.raises(DomainError):
        integrate(math.sin, 0.0, 1.0, rel_tol=1e-17)

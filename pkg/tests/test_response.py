import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matrixtx import (
    GridError,
    ResponseCurve,
    TimeGrid,
    absorbed_fraction_surface,
    absorption_rate,
    frenning_fraction,
    hitting_rate_surface,
    instantaneous_fraction,
    lee_release_curve,
    release_time,
    response_convolution,
    response_instantaneous,
)
from matrixtx.release import frenning_final_jump, frenning_release_rate
from matrixtx.response import (
    response_convolution_rate,
    response_instantaneous_curve,
    surface_response_curve,
    write_response_csv,
)

from conftest import eval_channel, eval_matrix


def test_empty_interval_gives_zero():
    m, c = eval_matrix(), eval_channel()
    g = TimeGrid(np.array([0.0, 1e-3]))
    assert response_convolution(lambda x: 1.0, m, c, g).absorbed[0] == 0.0
    assert response_instantaneous(0.0, m, c) == 0.0


def test_step_release_reproduces_surface_cdf():
    m, c = eval_matrix(), eval_channel()
    g = TimeGrid.log(1e-4, 1.0, 30)
    conv = response_convolution(lambda x: 1.0, m, c, g).absorbed
    assert np.allclose(conv, m.M_inf * absorbed_fraction_surface(g.points, m, c), rtol=1e-7, atol=1e-9)


@pytest.mark.parametrize("d", [2e-6, 5e-6])
def test_closed_form_matches_convolution_of_series(d):
    m, c = eval_matrix(), eval_channel(d)
    g = TimeGrid.log(1e-4, 1e-1, 40)
    closed = response_instantaneous(g.points, m, c)
    conv = response_convolution(lambda x: instantaneous_fraction(x, m), m, c, g).absorbed
    lim = m.M_inf * c.r_rx / c.d
    # observed agreement is near 1e-5 of the limit; the tolerance below
    # leaves room for quadrature noise
    assert np.max(np.abs(closed - conv)) < 1e-4 * lim


def test_closed_form_reference_values():
    # values of the closed form at d = 5 um, checked against the convolution
    m, c = eval_matrix(M_inf=1.0), eval_channel(5e-6)
    for t, ref in [(1e-3, 0.0013856871), (1e-2, 0.0746951743), (1e-1, 0.1554811536)]:
        assert response_instantaneous(t, m, c) == pytest.approx(ref, rel=1e-6)


def test_closed_form_limits():
    m, c = eval_matrix(), eval_channel()
    assert response_instantaneous(math.inf, m, c) == pytest.approx(m.M_inf * 0.2, rel=1e-15)
    assert response_instantaneous(1e9, m, c) == pytest.approx(m.M_inf * 0.2, rel=1e-4)


def test_closed_form_stays_finite_with_many_terms():
    m, c = eval_matrix(), eval_channel(2e-6)
    v = response_instantaneous(np.geomspace(1e-9, 1e3, 60), m, c, n_terms=5000)
    assert np.all(np.isfinite(v))
    assert np.all(np.diff(v) >= -1e-9 * m.M_inf)


def test_two_convolution_forms_agree_on_frenning_release():
    m, c = eval_matrix(100.0), eval_channel()
    t_rel = release_time(m)
    g = TimeGrid.log(1e-3 * t_rel, 3 * t_rel, 25)
    a = response_convolution(lambda x: frenning_fraction(x, m), m, c, g, t_rel=t_rel).absorbed
    b = response_convolution_rate(
        lambda x: frenning_release_rate(x, m), m, c, g, t_end=t_rel,
        jumps=[(t_rel, frenning_final_jump(m))],
    ).absorbed
    assert np.allclose(a, b, rtol=1e-6, atol=1e-6 * m.M_inf * c.r_rx / c.d)


@settings(max_examples=8, deadline=None)
@given(st.sampled_from([25.0, 100.0, 400.0]), st.sampled_from([2e-6, 5e-6, 10e-6]))
def test_response_is_monotone_and_bounded(ratio, d):
    m, c = eval_matrix(ratio), eval_channel(d)
    t_rel = release_time(m)
    curve = lee_release_curve(m, TimeGrid.linear(t_rel, 300))
    g = TimeGrid.log(1e-4 * t_rel, 20 * t_rel, 30, include_zero=True)
    n = response_convolution(curve, m, c, g)
    lim = m.M_inf * c.r_rx / c.d
    assert n.within_bound(lim, slack=1e-6)
    assert np.all(np.diff(n.absorbed) >= -1e-6 * lim)


def test_absorption_rate_of_constant_is_zero():
    g = TimeGrid.linear(1.0, 5)
    assert np.all(absorption_rate(ResponseCurve(g, np.full(5, 3.0))).rate == 0.0)
    with pytest.raises(GridError):
        absorption_rate(ResponseCurve(TimeGrid.linear(1.0, 2), [0.0, 1.0]))


def test_absorption_rate_of_surface_release_is_hitting_density():
    m, c = eval_matrix(), eval_channel()
    g = TimeGrid.linear(0.5, 20001, t_start=1e-3)
    rate = absorption_rate(surface_response_curve(m, c, g)).rate
    exact = m.M_inf * hitting_rate_surface(g.points, m, c)
    inner = slice(1, -1)
    # second-order differences: error ~ h^2 f''' / 6, largest on the early rise
    assert np.allclose(rate[inner], exact[inner], rtol=5e-4)


def test_gradual_release_spreads_the_absorption_rate():
    c = eval_channel()
    g = TimeGrid.log(1e-5, 2.0, 300, include_zero=True)
    fast = absorption_rate(response_instantaneous_curve(eval_matrix(1.0), c, g)).rate
    m = eval_matrix(400.0)
    curve = lee_release_curve(m, TimeGrid.linear(release_time(m), 2001))
    slow = absorption_rate(response_convolution(curve, m, c, g)).rate
    assert slow.max() < fast.max()
    assert g.points[np.argmax(slow)] > g.points[np.argmax(fast)]


def test_response_csv(tmp_path):
    m, c = eval_matrix(), eval_channel()
    curve = response_instantaneous_curve(m, c, TimeGrid.linear(1e-2, 5))
    path = tmp_path / "r.csv"
    write_response_csv(path, curve)
    lines = path.read_text().splitlines()
    assert lines[0] == "t_s,N_expected,dN_dt"
    assert len(lines) == 6
    assert lines[1].split(",")[0] == "0.000000000e+00"

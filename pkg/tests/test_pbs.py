import math

import numpy as np
import pytest

from matrixtx import (
    ConfigError,
    DomainError,
    GeometryError,
    GridError,
    MatrixParams,
    ChannelParams,
    instantaneous_fraction,
    lee_release_curve,
    release_time,
    response_instantaneous,
)
from matrixtx import _kernels
from matrixtx.pbs import (
    PbsConfig,
    constant_front,
    fdm_front_table,
    simulate_end_to_end,
    simulate_release,
    statistics,
    write_pbs_csv,
)

from conftest import eval_channel, eval_matrix


def _instant_cfg(dt, n_steps, realizations=4, seed=0, **kw):
    return PbsConfig(dt=dt, n_steps=n_steps, front_table=constant_front(0.0, dt * n_steps),
                     realizations=realizations, seed=seed, **kw)


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------


def test_statistics_two_realizations():
    r = statistics([[0.0, 0.0], [0.0, 2.0]])
    assert r.released_mean[1] == 1.0
    assert r.released_stderr[1] == pytest.approx(1.0)


def test_statistics_identical_realizations_have_zero_stderr():
    r = statistics(np.tile([0.0, 3.0, 5.0], (6, 1)))
    assert np.all(r.released_stderr == 0.0)
    assert np.array_equal(statistics([[0.0, 4.0]]).released_stderr, [0.0, 0.0])


def test_statistics_binomial_stderr():
    rng = np.random.default_rng(7)
    n, p = 1000, 0.3
    counts = rng.binomial(n, p, size=(100, 1)).astype(float)
    r = statistics(np.hstack([np.zeros((100, 1)), counts]))
    assert r.released_stderr[1] == pytest.approx(math.sqrt(n * p * (1 - p) / 100), rel=0.2)


def test_statistics_rejects_bad_input():
    with pytest.raises(GridError):
        statistics([[0.0, 1.0]], [[0.0, 1.0, 2.0]])
    with pytest.raises(DomainError):
        statistics([[0.0, 2.0]], [[0.0, 3.0]])


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "kw",
    [
        dict(dt=0.0),
        dict(n_steps=0),
        dict(realizations=0),
        dict(absorption_mode="sometimes"),
        dict(release_mode="never"),
        dict(record_every=0),
        dict(seed=-1),
        dict(front_table=(np.array([0.0, 1.0]), np.array([0.5, 0.8]))),
        dict(front_table=(np.array([0.0, 0.0]), np.array([1.0, 0.5]))),
        dict(front_table=(np.array([0.0, 1.0]), np.array([1.5, 0.5]))),
    ],
)
def test_config_rejects_invalid_settings(kw):
    base = dict(dt=1e-5, n_steps=10, front_table=constant_front(0.0, 1e-4))
    base.update(kw)
    with pytest.raises(ConfigError):
        PbsConfig(**base)


def test_front_table_must_cover_the_horizon():
    m = eval_matrix(25.0, M_inf=100)
    cfg = PbsConfig(dt=1e-4, n_steps=100, front_table=(np.array([0.0, 1e-3]), np.array([1.0, 0.5])))
    with pytest.raises(GridError):
        simulate_release(m, cfg)


def test_end_to_end_rejects_overlapping_receiver():
    m = eval_matrix(M_inf=100)
    with pytest.raises(GeometryError):
        simulate_end_to_end(m, ChannelParams(1e-9, 1.5e-6, 1e-6), _instant_cfg(1e-5, 10))


# ---------------------------------------------------------------------------
# release-only behavior
# ---------------------------------------------------------------------------


def test_no_motion_releases_nothing():
    m = MatrixParams(1e-6, 0.0, 1.0, 500)
    res = simulate_release(m, _instant_cfg(1e-5, 200))
    assert np.all(res.released_raw == 0)


def test_census_conserves_molecules():
    m = eval_matrix(25.0, M_inf=2000)
    t_rel = release_time(m)
    cfg = PbsConfig(dt=t_rel / 400, n_steps=200, front_table=fdm_front_table(m), realizations=3, seed=4,
                    release_mode="intra-step-crossing")
    res = simulate_release(m, cfg)
    assert np.all(res.census.sum(axis=1) == 2000)
    # halfway through, some molecules are still undissolved and some inside
    assert np.all(res.census[:, 0] > 0) and np.all(res.census[:, 1] > 0)
    res = simulate_end_to_end(m, eval_channel(), cfg)
    assert np.all(res.census.sum(axis=1) == 2000)
    assert np.array_equal(res.census[:, 3], res.absorbed_raw[:, -1])


def test_released_molecules_stay_frozen():
    m = eval_matrix(M_inf=1000)
    res = simulate_release(m, _instant_cfg(1e-5, 200, realizations=3))
    assert np.all(np.diff(res.released_raw, axis=1) >= 0)
    assert np.array_equal(res.census[:, 3], res.released_raw[:, -1])


@pytest.mark.parametrize("workers", [2, 3])
def test_counts_do_not_depend_on_worker_count(workers):
    m, c = eval_matrix(M_inf=500), eval_channel()
    one = simulate_end_to_end(m, c, _instant_cfg(1e-5, 300, realizations=5, seed=9, workers=1))
    many = simulate_end_to_end(m, c, _instant_cfg(1e-5, 300, realizations=5, seed=9, workers=workers))
    assert np.array_equal(one.released_raw, many.released_raw)
    assert np.array_equal(one.absorbed_raw, many.absorbed_raw)
    other = simulate_end_to_end(m, c, _instant_cfg(1e-5, 300, realizations=5, seed=10, workers=1))
    assert not np.array_equal(one.absorbed_raw, other.absorbed_raw)


@pytest.mark.parametrize("mode", ["end-of-step", "intra-step-crossing", "a-priori"])
def test_backends_agree_bit_for_bit(mode, monkeypatch):
    m = MatrixParams(4.5e-9, 2.42e-21, 370.4, 300)
    c = ChannelParams(1e-9, 10e-6, 5e-6)
    ft = (np.array([0.0, 2e4, 4e4, 6e5]), np.array([1.0, 0.9, 0.8, 0.0]))
    cfg = PbsConfig(dt=360.0, n_steps=200, front_table=ft, realizations=2, seed=5, absorption_mode=mode,
                    release_mode="intra-step-crossing")
    out = {}
    for be in ["numba", "numpy"]:
        monkeypatch.setattr(_kernels, "ACTIVE_BACKEND", be)
        r = simulate_end_to_end(m, c, cfg)
        out[be] = (r.released_raw, r.absorbed_raw, r.census)
    for x, y in zip(out["numba"], out["numpy"]):
        assert np.array_equal(x, y)


def test_no_molecule_moves_inside_the_front():
    # freeze the front at half radius: the core must stay empty of movers and
    # only the outer shell (7/8 of the molecules) can ever be released
    m = eval_matrix(1e6, M_inf=4000)
    n = 2000
    cfg = PbsConfig(dt=1e-5, n_steps=n, front_table=constant_front(0.5, n * 1e-5), realizations=2, seed=1)
    res = simulate_release(m, cfg)
    inner = res.census[:, 0]
    assert np.all(res.released_raw[:, -1] <= 4000 - inner)
    # the frozen core holds an eighth of the molecules, binomially spread
    assert np.all(np.abs(inner - 500) < 5 * math.sqrt(4000 * 0.125 * 0.875))
    # everything in the shell has had time to leave
    assert np.all(res.census[:, 1] < 0.02 * 4000)


def test_instantaneous_release_matches_series():
    m = eval_matrix(M_inf=4000)
    res = simulate_release(m, _instant_cfg(1e-6, 500, realizations=5, seed=2, release_mode="intra-step-crossing"))
    frac = res.released_mean / m.M_inf
    assert np.max(np.abs(frac - instantaneous_fraction(res.grid.points, m))) < 0.02


def test_gradual_release_follows_moving_front():
    m = eval_matrix(25.0, M_inf=4000)
    t_rel = release_time(m)
    cfg = PbsConfig(dt=t_rel / 1000, n_steps=1000, front_table=fdm_front_table(m), realizations=4, seed=8,
                    release_mode="intra-step-crossing", record_every=10)
    res = simulate_release(m, cfg)
    lee = lee_release_curve(m, res.grid).fraction
    assert np.max(np.abs(res.released_mean / m.M_inf - lee)) < 0.03


def test_result_csv(tmp_path):
    res = simulate_release(eval_matrix(M_inf=100), _instant_cfg(1e-5, 4, realizations=2))
    p = tmp_path / "pbs.csv"
    write_pbs_csv(p, res)
    lines = p.read_text().splitlines()
    assert lines[0] == "t_s,released_mean,released_stderr,absorbed_mean,absorbed_stderr"
    assert len(lines) == 6


# ---------------------------------------------------------------------------
# end-to-end
# ---------------------------------------------------------------------------


def test_end_to_end_follows_closed_form_within_bands():
    m, c = eval_matrix(M_inf=2000), eval_channel(5e-6)
    n = 2000
    cfg = _instant_cfg(1e-5, n, realizations=20, seed=7, absorption_mode="intra-step-crossing",
                       release_mode="intra-step-crossing", record_every=100)
    res = simulate_end_to_end(m, c, cfg)
    exact = response_instantaneous(res.grid.points, m, c)
    band = 3 * np.maximum(res.absorbed_stderr, 1.0)
    assert np.all(np.abs(res.absorbed_mean - exact) <= band)
    assert np.all(res.absorbed_mean <= res.released_mean)


def test_terminal_fraction_is_radius_over_distance():
    m, c = eval_matrix(M_inf=2000), eval_channel(5e-6)
    cfg = _instant_cfg(1e-5, 1000, realizations=10, seed=12, absorption_mode="intra-step-crossing",
                       release_mode="intra-step-crossing")
    res = simulate_end_to_end(m, c, cfg)
    assert abs(res.terminal_mean - 0.2 * m.M_inf) <= 3 * res.terminal_stderr


@pytest.mark.slow
def test_halving_dt_stays_within_the_statistical_band():
    m, c = eval_matrix(M_inf=1000), eval_channel(5e-6)
    runs = []
    for dt in [1e-5, 5e-6]:
        n = int(round(0.02 / dt))
        runs.append(simulate_end_to_end(m, c, _instant_cfg(dt, n, realizations=100, seed=11, record_every=n // 20)))
    a, b = runs
    band = 3 * np.hypot(a.absorbed_stderr, b.absorbed_stderr)
    assert np.all(np.abs(b.absorbed_mean - a.absorbed_mean)[1:] < band[1:])

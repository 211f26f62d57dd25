"""Particle-based simulation of matrix release and receiver absorption.

Molecules are seeded uniformly in the matrix sphere and stay put until the
dissolution front passes them.  They then random-walk with ``D_m`` and
bounce off the undissolved core; crossing the surface releases them.  In
end-to-end runs released molecules keep walking with ``D_c`` (the carrier
is transparent to them) until a spherical receiver absorbs them.

Every realization owns a numpy ``Generator`` spawned from the master seed
and consumes its normals in one fixed order, so results do not depend on
the number of worker threads or on how steps are chunked.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from ._accel import thread_count
from .core import (
    AccuracyError,
    ChannelParams,
    ConfigError,
    DomainError,
    GridError,
    MatrixParams,
    TimeGrid,
)

MODES = {
    "end-of-step": _kernels.MODE_END_OF_STEP,
    "intra-step-crossing": _kernels.MODE_BRIDGE,
    "a-priori": _kernels.MODE_APRIORI,
}

RELEASE_MODES = ("end-of-step", "intra-step-crossing")

NOISE_BUDGET = 1 << 22  # normals generated per chunk


@dataclass(frozen=True, eq=False)
class PbsConfig:
    """Simulation settings.

    ``front_table`` holds ``(t_s, R_over_a)`` with ``R/a`` non-increasing;
    when it ends at ``R/a = 0`` the front is held at the centre afterwards.
    ``release_mode="intra-step-crossing"`` also releases molecules whose
    Brownian path touched the matrix surface between two inside positions,
    which removes most of the step-size bias at coarse ``dt``.
    ``record_every`` thins the stored time series.
    """

    dt: float
    n_steps: int
    front_table: Tuple[np.ndarray, np.ndarray]
    realizations: int = 20
    seed: int = 0
    absorption_mode: str = "end-of-step"
    release_mode: str = "end-of-step"
    record_every: int = 1
    workers: Optional[int] = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.n_steps < 1:
            raise ConfigError("n_steps must be >= 1")
        if self.realizations < 1:
            raise ConfigError("realizations must be >= 1")
        if self.absorption_mode not in MODES:
            raise ConfigError(f"absorption_mode must be one of {sorted(MODES)}")
        if self.release_mode not in RELEASE_MODES:
            raise ConfigError(f"release_mode must be one of {RELEASE_MODES}")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        t, R = (np.asarray(x, dtype=float) for x in self.front_table)
        if t.ndim != 1 or t.shape != R.shape or t.size < 2:
            raise ConfigError("front_table needs matching time and R/a columns of length >= 2")
        if np.any(np.diff(t) <= 0):
            raise ConfigError("front_table times must be strictly increasing")
        if np.any(np.diff(R) > 0):
            raise ConfigError("front_table R/a must be non-increasing")
        if np.any(R < 0) or np.any(R > 1):
            raise ConfigError("front_table R/a must lie in [0, 1]")
        object.__setattr__(self, "front_table", (t, R))

    @property
    def horizon(self):
        return self.dt * self.n_steps


@dataclass(frozen=True, eq=False)
class PbsResult:
    grid: TimeGrid
    released_mean: np.ndarray
    released_stderr: np.ndarray
    absorbed_mean: np.ndarray
    absorbed_stderr: np.ndarray
    released_raw: Optional[np.ndarray] = None
    absorbed_raw: Optional[np.ndarray] = None
    census: Optional[np.ndarray] = None
    terminal_mean: Optional[float] = None
    terminal_stderr: Optional[float] = None

    def __post_init__(self):
        if np.any(self.released_stderr < 0) or np.any(self.absorbed_stderr < 0):
            raise DomainError("standard errors must be non-negative")
        if np.any(np.diff(self.released_mean) < 0) or np.any(np.diff(self.absorbed_mean) < 0):
            raise DomainError("cumulative means must be non-decreasing")
        if np.any(self.absorbed_mean > self.released_mean):
            raise DomainError("cannot absorb more molecules than were released")


def statistics(raw_released, raw_absorbed=None, grid: Optional[TimeGrid] = None) -> PbsResult:
    """Mean and standard error across realizations (rows) per time point."""
    rel = np.atleast_2d(np.asarray(raw_released, dtype=float))
    ab = np.zeros_like(rel) if raw_absorbed is None else np.atleast_2d(np.asarray(raw_absorbed, dtype=float))
    if rel.shape != ab.shape:
        raise GridError("released and absorbed counts have different shapes")
    n = rel.shape[0]
    if n < 1:
        raise DomainError("statistics need at least one realization")
    if grid is None:
        grid = TimeGrid(np.arange(rel.shape[1], dtype=float), "custom")

    def mean_err(x):
        if n == 1:
            return x[0].copy(), np.zeros(x.shape[1])
        return x.mean(axis=0), x.std(axis=0, ddof=1) / math.sqrt(n)

    rm, rs = mean_err(rel)
    am, as_ = mean_err(ab)
    return PbsResult(grid, rm, rs, am, as_, rel, ab)


# ---------------------------------------------------------------------------
# setup helpers
# ---------------------------------------------------------------------------


def front_positions(cfg: PbsConfig, a: float):
    """Front radius [m] at every step time ``k dt``, ``k = 0..n_steps``."""
    t_tab, R_tab = cfg.front_table
    times = np.arange(cfg.n_steps + 1) * cfg.dt
    beyond = times > t_tab[-1] * (1 + 1e-12)
    if np.any(beyond) and R_tab[-1] > 0:
        raise GridError(
            f"front table ends at {t_tab[-1]:g} s with R/a={R_tab[-1]:g}; "
            f"the simulation runs to {times[-1]:g} s"
        )
    if times[0] < t_tab[0]:
        raise GridError("front table must start at or before t = 0")
    return a * np.interp(times, t_tab, R_tab)


def constant_front(value, horizon):
    """Front table with ``R/a`` fixed (0 for instantaneous dissolution)."""
    return (np.array([0.0, horizon]), np.array([float(value), float(value)]))


def fdm_front_table(m: MatrixParams, fdm_cfg=None):
    """Front table from the moving-boundary solver, closed at ``R = 0``."""
    from .release import FdmConfig, fdm_release_oracle

    curve = fdm_release_oracle(m, fdm_cfg or FdmConfig())
    t = np.array(curve.t)
    R = np.array(curve.front)
    return np.append(t, t[-1] * (1 + 1e-9)), np.append(R, 0.0)


def _seed_positions(rng, n, a):
    # rejection sampling in the bounding cube
    out = np.empty((n, 3))
    filled = 0
    while filled < n:
        want = int((n - filled) * 2.0) + 16
        cand = rng.uniform(-a, a, size=(want, 3))
        ok = cand[np.einsum("ij,ij->i", cand, cand) <= a * a]
        take = min(ok.shape[0], n - filled)
        out[filled:filled + take] = ok[:take]
        filled += take
    return out


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def _run_one(seed_seq, n_mol, m: MatrixParams, c: Optional[ChannelParams], cfg: PbsConfig, front):
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    pos = _seed_positions(rng, n_mol, m.a)
    radius = np.sqrt(np.einsum("ij,ij->i", pos, pos))
    order = np.argsort(-radius, kind="stable")
    pos = np.ascontiguousarray(pos[order])
    radius = np.ascontiguousarray(radius[order])
    status = np.zeros(n_mol, dtype=np.int8)
    active = np.zeros(n_mol, dtype=np.int64)

    bridge = cfg.release_mode == "intra-step-crossing"
    if c is None:
        mode = _kernels.MODE_RELEASE_ONLY
        sd_c, rx_x, r_rx, dcdt = 0.0, 0.0, 0.0, 1.0
    else:
        mode = MODES[cfg.absorption_mode]
        sd_c = math.sqrt(2.0 * c.D_c * cfg.dt)
        rx_x, r_rx, dcdt = c.d, c.r_rx, c.D_c * cfg.dt
    per = 4 if (c is not None or bridge) else 3
    sd_m = math.sqrt(2.0 * m.D_m * cfg.dt)
    dmdt = m.D_m * cfg.dt if m.D_m > 0 else 1.0

    kernel = _kernels.select("pbs")
    released = np.zeros(cfg.n_steps + 1, dtype=np.int64)
    absorbed = np.zeros(cfg.n_steps + 1, dtype=np.int64)
    activated, n_active = 0, 0
    leftover = np.empty(0)
    k = 0
    while k < cfg.n_steps:
        # bound the number of movers in this chunk by those the front will
        # have reached at its end (radii are sorted in decreasing order)
        probe = min(cfg.n_steps, k + 64)
        reach = int(np.searchsorted(-radius, -front[probe], side="right"))
        movers = max(n_active + reach - activated, 1)
        steps = max(1, min(cfg.n_steps - k, NOISE_BUDGET // (per * movers)))
        probe = k + steps
        reach = int(np.searchsorted(-radius, -front[probe], side="right"))
        movers = n_active + reach - activated
        need = per * movers * steps
        if mode == _kernels.MODE_APRIORI:
            need += 3 * movers  # half-step moves right after release
        fresh = max(need - leftover.size, 0)
        noise = np.concatenate((leftover, rng.standard_normal(fresh))) if fresh else leftover
        rel_chunk = np.empty(steps + 1, dtype=np.int64)
        abs_chunk = np.empty(steps + 1, dtype=np.int64)
        rel_chunk[0] = released[k]
        abs_chunk[0] = absorbed[k]
        activated, n_active, used = kernel(
            pos, radius, status, front, sd_m, sd_c, m.a, rx_x, r_rx, dmdt, dcdt, mode, bridge,
            noise, k, k + steps, n_active, activated, active, rel_chunk, abs_chunk,
        )
        leftover = noise[used:]
        released[k + 1:k + steps + 1] = rel_chunk[1:]
        absorbed[k + 1:k + steps + 1] = abs_chunk[1:]
        k += steps

    census = np.bincount(status, minlength=4)[:4]
    expected = np.array(
        [n_mol - activated, activated - released[-1], released[-1] - absorbed[-1], absorbed[-1]]
    )
    if c is None:
        expected = np.array([n_mol - activated, activated - released[-1], 0, released[-1]])
    if not np.array_equal(census, expected):
        raise AccuracyError(f"molecule bookkeeping mismatch: census {census}, counters {expected}")

    terminal = None
    if c is not None:
        # each molecule still in the channel is absorbed eventually with
        # probability r_rx / rho, the exact hitting probability from rho
        free = status == 2
        shift = pos[free] - np.array([c.d, 0.0, 0.0])
        rho = np.sqrt(np.einsum("ij,ij->i", shift, shift))
        terminal = int(absorbed[-1]) + int(np.count_nonzero(rng.random(rho.size) < c.r_rx / rho))
    return released, absorbed, census, terminal


def _simulate(m: MatrixParams, c: Optional[ChannelParams], cfg: PbsConfig) -> PbsResult:
    n_mol = int(round(m.M_inf))
    front = front_positions(cfg, m.a)
    seeds = np.random.SeedSequence(int(cfg.seed)).spawn(cfg.realizations)
    workers = cfg.workers or thread_count()
    workers = max(1, min(workers, cfg.realizations))
    run = lambda s: _run_one(s, n_mol, m, c, cfg, front)  # noqa: E731
    if workers == 1:
        results = [run(s) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, seeds))
    keep = np.arange(0, cfg.n_steps + 1, cfg.record_every)
    if keep[-1] != cfg.n_steps:
        keep = np.append(keep, cfg.n_steps)
    grid = TimeGrid(keep * cfg.dt, "linear")
    rel = np.stack([r[0][keep] for r in results])
    ab = np.stack([r[1][keep] for r in results])
    base = statistics(rel, ab, grid)
    census = np.stack([r[2] for r in results])
    t_mean = t_err = None
    if c is not None:
        term = np.array([r[3] for r in results], dtype=float)
        t_mean = float(term.mean())
        t_err = float(term.std(ddof=1) / math.sqrt(term.size)) if term.size > 1 else 0.0
    return PbsResult(
        grid, base.released_mean, base.released_stderr, base.absorbed_mean, base.absorbed_stderr,
        rel, ab, census, t_mean, t_err,
    )


def simulate_release(m: MatrixParams, cfg: PbsConfig) -> PbsResult:
    """Release-only simulation: released molecules are frozen at the surface."""
    return _simulate(m, None, cfg)


def simulate_end_to_end(m: MatrixParams, c: ChannelParams, cfg: PbsConfig) -> PbsResult:
    """Release followed by free diffusion to an absorbing receiver.

    ``terminal_mean`` estimates the count absorbed as ``t -> inf``: molecules
    absorbed by the horizon plus one Bernoulli draw per survivor with its
    exact eventual hitting probability ``r_rx / rho``.
    """
    c.check_clearance(m)
    return _simulate(m, c, cfg)


def write_pbs_csv(path, result: PbsResult):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "released_mean", "released_stderr", "absorbed_mean", "absorbed_stderr"])
        for row in zip(
            result.grid.points, result.released_mean, result.released_stderr,
            result.absorbed_mean, result.absorbed_stderr,
        ):
            w.writerow([f"{v:.9e}" for v in row])

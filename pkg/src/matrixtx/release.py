"""Release of drug molecules from a spherical homogeneous matrix.

Models, from most to least general:

* Lee moving-boundary model, parametrized by the normalized front
  penetration ``delta = 1 - R/a``.
* Frenning closed form for large loading ratios.
* Simplified micelle form for very large loading ratios.
* Crank series for instantaneous dissolution (``loading_ratio <= 1``).
* A finite-difference moving-boundary solver used as an oracle.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .core import (
    AccuracyError,
    ConfigError,
    DomainError,
    MatrixParams,
    ReleaseCurve,
    TimeGrid,
    find_root_monotone,
)


class ModelValidityWarning(UserWarning):
    """A model is used outside the loading range where it is accurate."""


ARG_SLACK = 1e-12


# ---------------------------------------------------------------------------
# Lee model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LeeCoefficients:
    a1: float
    a2: float
    a3: float
    lam: float


def lee_coefficients(delta, loading_ratio):
    _check_lee(delta, loading_ratio)
    lam = 1.0 + (loading_ratio - 1.0) * (1.0 - delta)
    # a3 = lam - sqrt(lam^2 - 1), written without cancellation
    a3 = 1.0 / (lam + math.sqrt(lam * lam - 1.0))
    return LeeCoefficients(1.0, -a3 - 1.0, a3, lam)


def _check_lee(delta, loading_ratio):
    if not 0.0 <= delta <= 1.0:
        raise DomainError(f"front penetration delta must lie in [0, 1], got {delta!r}")
    if not loading_ratio >= 1.0:
        raise DomainError(f"the Lee model needs loading_ratio >= 1, got {loading_ratio!r}")


def lee_fraction(delta, loading_ratio):
    """Released fraction for a front that has penetrated ``delta`` of the radius."""
    co = lee_coefficients(delta, loading_ratio)
    r = loading_ratio
    shell = 1.0 - (1.0 - delta) ** 3
    # 12 [(1 + a2/2 + a3/3) - (1/2 + a2/3 + a3/4) delta] with a2 = -a3 - 1
    # folded in; integer coefficients keep the endpoint exact
    profile12 = 6.0 - 2.0 * delta - co.a3 * (2.0 - delta)
    return shell * (1.0 - 1.0 / r) + delta * profile12 / (4.0 * r)


def lee_normalized_time(delta, loading_ratio):
    """``D_m t / a^2`` at which the front has penetrated ``delta``."""
    co = lee_coefficients(delta, loading_ratio)
    r = loading_ratio
    return (6.0 * r - 4.0 - co.a3) * delta * delta / 12.0 - (r - 1.0) * delta ** 3 / 3.0


def lee_time_of_front(delta, params: MatrixParams):
    return lee_normalized_time(delta, params.loading_ratio) * params.diffusion_time


def release_time(params: MatrixParams):
    """Time for the front to reach the centre, ``(a^2/D_m)(ratio/6 - 1/12)``."""
    if not params.loading_ratio >= 1.0:
        raise DomainError("release_time needs loading_ratio >= 1")
    return params.diffusion_time * (params.loading_ratio / 6.0 - 1.0 / 12.0)


def _lee_guard(loading_ratio):
    if loading_ratio < 1.0:
        raise DomainError(f"the Lee model needs loading_ratio >= 1, got {loading_ratio!r}")
    if 1.0 < loading_ratio < 10.0:
        warnings.warn(
            f"Lee model is inaccurate for small loading ratios ({loading_ratio:g} < 10)",
            ModelValidityWarning,
            stacklevel=3,
        )


def lee_increasing_branch(loading_ratio, n=1000):
    """Sampled ``(delta, D_m t / a^2)`` on the increasing part of the time map.

    Near ``delta = 1`` the coefficient ``a3`` has a square-root singularity
    and the map turns over slightly (by about 1% of ``t_rel`` at ratio 25),
    so the branch ends at its first maximum.  That maximum always lies past
    ``t_rel``; if it did not, the inversion would be ambiguous and
    ``AccuracyError`` is raised.
    """
    deltas = np.linspace(0.0, 1.0, n)
    times = np.array([lee_normalized_time(d, loading_ratio) for d in deltas])
    falls = np.flatnonzero(np.diff(times) <= 0)
    end = falls[0] + 1 if falls.size else n
    t_rel = loading_ratio / 6.0 - 1.0 / 12.0
    if times[end - 1] < t_rel * (1 - 1e-12):
        raise AccuracyError(
            f"Lee time map stops increasing at delta={deltas[end - 1]:.4f} "
            f"before reaching t_rel (ratio {loading_ratio:g})"
        )
    return deltas[:end], times[:end]


def lee_release_curve(params: MatrixParams, grid: TimeGrid) -> ReleaseCurve:
    """Released fraction and front on ``grid``; fraction is 1 from ``t_rel`` on."""
    r = params.loading_ratio
    _lee_guard(r)
    deltas, times = lee_increasing_branch(r)
    tau = grid.points / params.diffusion_time
    tau_rel = r / 6.0 - 1.0 / 12.0
    frac = np.empty_like(tau)
    front = np.empty_like(tau)
    for i, s in enumerate(tau):
        if s <= 0.0:
            frac[i], front[i] = 0.0, 1.0
            continue
        if s >= tau_rel:
            frac[i], front[i] = 1.0, 0.0
            continue
        j = int(np.searchsorted(times, s))
        lo, hi = deltas[max(j - 1, 0)], deltas[min(j, deltas.size - 1)]
        delta = find_root_monotone(lambda d: lee_normalized_time(d, r) - s, lo, hi, tol=1e-15)
        frac[i] = lee_fraction(delta, r)
        front[i] = 1.0 - delta
    return ReleaseCurve(grid, np.clip(frac, 0.0, 1.0), np.clip(front, 0.0, 1.0))


# ---------------------------------------------------------------------------
# Frenning and micelle closed forms
# ---------------------------------------------------------------------------


def _large_ratio_guard(loading_ratio, name):
    if loading_ratio < 10.0:
        raise DomainError(f"{name} needs loading_ratio >= 10, got {loading_ratio:g}")
    if loading_ratio < 100.0:
        warnings.warn(
            f"{name} assumes a large loading ratio; {loading_ratio:g} < 100 reduces accuracy",
            ModelValidityWarning,
            stacklevel=3,
        )


def _clamped_arg(arg, fn):
    arg = np.asarray(arg, dtype=float)
    if np.any(arg < -1.0 - ARG_SLACK) or np.any(arg > 1.0 + ARG_SLACK):
        raise DomainError(f"{fn} argument outside [-1, 1]; time beyond the model's range")
    return np.clip(arg, -1.0, 1.0)


def _out(t, value):
    return float(value) if np.ndim(t) == 0 else value


def _check_time(t):
    arr = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise DomainError("time must be finite and non-negative")
    return arr


def frenning_front(t, params: MatrixParams):
    """Front position ``R/a`` from the cubic-root closed form, clamped to [0, 1].

    Valid for ``0 <= t <= ratio a^2 / (6 D_m)``, slightly beyond ``t_rel``.
    """
    _large_ratio_guard(params.loading_ratio, "Frenning model")
    c = 1.0 / params.loading_ratio
    arg = _clamped_arg(12.0 * c * _check_time(t) / params.diffusion_time - 1.0, "arccos")
    front = 0.5 * (1.0 - c / 3.0) + (1.0 + c / 3.0) * np.cos((np.arccos(arg) + 4.0 * np.pi) / 3.0)
    return _out(t, np.clip(front, 0.0, 1.0))


def frenning_fraction(t, params: MatrixParams):
    """Released fraction of the Frenning model; exactly 1 from ``t_rel`` on.

    The closed form stops a little short of 1 at ``t_rel`` (0.998 at ratio
    25), so the value is stepped up to full release there.
    """
    tt = _check_time(t)
    t_rel = release_time(params)
    inside = np.minimum(tt, t_rel)
    R = np.asarray(frenning_front(inside, params))
    c = 1.0 / params.loading_ratio
    frac = 1.0 - R ** 3 + 0.5 * c * (2.0 * R ** 3 - R ** 2 - R)
    frac = np.where(tt >= t_rel, 1.0, np.clip(frac, 0.0, 1.0))
    return _out(t, frac)


def micelle_completion_time(params: MatrixParams):
    """Time at which the simplified micelle front reaches the centre."""
    return params.loading_ratio * params.diffusion_time / 6.0


def micelle_front(t, params: MatrixParams):
    _large_ratio_guard(params.loading_ratio, "micelle model")
    c = 1.0 / params.loading_ratio
    arg = _clamped_arg(1.0 - 12.0 * c * _check_time(t) / params.diffusion_time, "arcsin")
    return _out(t, np.clip(0.5 + np.sin(np.arcsin(arg) / 3.0), 0.0, 1.0))


def micelle_fraction(t, params: MatrixParams):
    R = np.asarray(micelle_front(t, params))
    return _out(t, np.clip(1.0 - R ** 3, 0.0, 1.0))


def frenning_fraction_fn(params: MatrixParams):
    """Fast scalar version of ``frenning_fraction`` for use inside quadrature."""
    _large_ratio_guard(params.loading_ratio, "Frenning model")
    c = 1.0 / params.loading_ratio
    scale = 12.0 * c / params.diffusion_time
    t_rel = release_time(params)
    amp = 1.0 + c / 3.0
    mid = 0.5 * (1.0 - c / 3.0)

    def fraction(t):
        if t <= 0.0:
            return 0.0
        if t >= t_rel:
            return 1.0
        x = min(scale * t - 1.0, 1.0)
        R = mid + amp * math.cos((math.acos(x) + 4.0 * math.pi) / 3.0)
        R = min(max(R, 0.0), 1.0)
        return min(max(1.0 - R ** 3 + 0.5 * c * (2.0 * R ** 3 - R * R - R), 0.0), 1.0)

    return fraction


def frenning_release_rate(t, params: MatrixParams):
    """Time derivative of ``frenning_fraction`` [1/s] on ``(0, t_rel)``, else 0.

    The step up to full release at ``t_rel`` is not included; its size is
    ``1 - frenning_fraction(t_rel^-)``.
    """
    tt = _check_time(t)
    t_rel = release_time(params)
    c = 1.0 / params.loading_ratio
    T = params.diffusion_time
    inside = (tt > 0) & (tt < t_rel)
    ts = np.where(inside, tt, 0.5 * t_rel)
    x = 12.0 * c * ts / T - 1.0
    theta = (np.arccos(x) + 4.0 * np.pi) / 3.0
    R = 0.5 * (1.0 - c / 3.0) + (1.0 + c / 3.0) * np.cos(theta)
    dR = (1.0 + c / 3.0) * np.sin(theta) * 4.0 * c / (T * np.sqrt(1.0 - x * x))
    dF = -3.0 * R * R + 0.5 * c * (6.0 * R * R - 2.0 * R - 1.0)
    return _out(t, np.where(inside, dF * dR, 0.0))


def frenning_final_jump(params: MatrixParams):
    """Fraction added by the step to full release at ``t_rel``."""
    t_rel = release_time(params)
    c = 1.0 / params.loading_ratio
    R = frenning_front(t_rel, params)
    return 1.0 - (1.0 - R ** 3 + 0.5 * c * (2.0 * R ** 3 - R ** 2 - R))


def micelle_release_rate(t, params: MatrixParams):
    """Time derivative of ``micelle_fraction`` [1/s]; 0 after completion."""
    tt = _check_time(t)
    t_end = micelle_completion_time(params)
    c = 1.0 / params.loading_ratio
    T = params.diffusion_time
    inside = (tt > 0) & (tt < t_end)
    ts = np.where(inside, tt, 0.5 * t_end)
    x = 1.0 - 12.0 * c * ts / T
    phase = np.arcsin(x) / 3.0
    R = 0.5 + np.sin(phase)
    dR = -np.cos(phase) * 4.0 * c / (T * np.sqrt(1.0 - x * x))
    return _out(t, np.where(inside, -3.0 * R * R * dR, 0.0))


def _step_extended(params, grid, t_end, front_fn, frac_fn):
    t = grid.points
    inside = np.minimum(t, t_end)
    front = np.where(t >= t_end, 0.0, front_fn(inside, params))
    frac = np.where(t >= t_end, 1.0, frac_fn(inside, params))
    return ReleaseCurve(grid, frac, front)


def frenning_release_curve(params: MatrixParams, grid: TimeGrid) -> ReleaseCurve:
    return _step_extended(params, grid, release_time(params), frenning_front, frenning_fraction)


def micelle_release_curve(params: MatrixParams, grid: TimeGrid) -> ReleaseCurve:
    return _step_extended(
        params, grid, micelle_completion_time(params), micelle_front, micelle_fraction
    )


# ---------------------------------------------------------------------------
# Instantaneous dissolution
# ---------------------------------------------------------------------------


def instantaneous_fraction(t, params: MatrixParams, n_terms: int = 300):
    """Crank series for a sphere with a perfect-sink surface.

    ``t = 0`` returns exactly 0; the truncated series alone would leave a
    residual of about ``6 / (pi^2 n_terms)``.
    """
    if n_terms < 1:
        raise DomainError("n_terms must be positive")
    tt = _check_time(t)
    n = np.arange(1, n_terms + 1, dtype=float)
    scaled = np.atleast_1d(tt)[:, None] / params.diffusion_time
    series = np.sum(np.exp(-(n * n * math.pi ** 2) * scaled) / (n * n), axis=1)
    frac = 1.0 - 6.0 / math.pi ** 2 * series
    frac = np.where(np.atleast_1d(tt) == 0.0, 0.0, np.clip(frac, 0.0, 1.0))
    return float(frac[0]) if np.ndim(t) == 0 else frac.reshape(tt.shape)


def instantaneous_release_curve(params: MatrixParams, grid: TimeGrid, n_terms: int = 300):
    return ReleaseCurve(grid, instantaneous_fraction(grid.points, params, n_terms))


# ---------------------------------------------------------------------------
# Finite-difference oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FdmConfig:
    """Moving-boundary solver settings.

    ``dt`` caps the time step [s]; ``None`` uses the stability bound
    ``0.25 (a / n_space)^2 / D_m``.  The solver additionally shrinks steps
    while the diffusion layer is thin and while the front moves fast.
    """

    n_space: int = 101
    dt: Optional[float] = None
    front_tol: float = 1e-3
    max_steps: int = 500_000_000
    n_records: int = 2000
    start_depth: float = 0.05

    def __post_init__(self):
        if self.n_space < 100:
            raise ConfigError(f"n_space must be >= 100, got {self.n_space}")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt must be positive")
        if not 0 < self.front_tol < 0.5:
            raise ConfigError("front_tol must lie in (0, 0.5)")
        if not 0 < self.start_depth < 0.5:
            raise ConfigError("start_depth must lie in (0, 0.5)")
        if self.n_records < 10:
            raise ConfigError("n_records must be >= 10")

    def stability_limit(self, params: MatrixParams):
        return 0.25 * (params.a / self.n_space) ** 2 / params.D_m


def _planar_start(loading_ratio, depth, n):
    """Similarity solution of the planar problem, used as the initial state."""
    from scipy.special import erf as _erf

    stefan = 1.0 / (loading_ratio - 1.0)
    lam = find_root_monotone(
        lambda l: math.sqrt(math.pi) * l * math.exp(l * l) * math.erf(l) - stefan, 1e-14, 10.0
    )
    t0 = (depth / (2.0 * lam)) ** 2
    R = 1.0 - depth
    x = R + np.linspace(0.0, 1.0, n) * depth
    u = x * _erf((1.0 - x) / (2.0 * math.sqrt(t0))) / math.erf(lam)
    u[0] = R
    u[-1] = 0.0
    return u, R, t0, lam


def fdm_release_oracle(params: MatrixParams, cfg: FdmConfig = FdmConfig()) -> ReleaseCurve:
    """Solve the moving-boundary diffusion problem numerically.

    Returns the released fraction and front on the solver's own output
    times, from ``t = 0`` until ``R/a < front_tol``.
    """
    r = params.loading_ratio
    if not r > 1.0:
        raise DomainError("the moving-boundary solver needs loading_ratio > 1")
    if params.D_m <= 0:
        raise DomainError("the moving-boundary solver needs D_m > 0")
    limit = cfg.stability_limit(params)
    dt = limit if cfg.dt is None else cfg.dt
    if dt > limit * (1 + 1e-12):
        raise ConfigError(f"dt={dt:g} s exceeds the stability bound {limit:g} s")
    dt_cap = dt / params.diffusion_time

    u, R, t0, lam = _planar_start(r, cfg.start_depth, cfg.n_space)
    t_rel = r / 6.0 - 1.0 / 12.0
    t_rec = np.unique(
        np.concatenate(
            (
                np.geomspace(t0 * 1.0001, t_rel, cfg.n_records // 4),
                np.linspace(t0 * 1.0001, 1.5 * t_rel, cfg.n_records - cfg.n_records // 4),
            )
        )
    )
    size = t_rec.size + 1
    t_out, R_out, F_out = np.zeros(size), np.zeros(size), np.zeros(size)
    t_end, R_end, m, k = _kernels.select("fdm")(
        u, R, t0, float(r), dt_cap, cfg.front_tol, cfg.max_steps, t_rec, t_out, R_out, F_out
    )
    if R_end > cfg.front_tol:
        raise AccuracyError(
            f"front stalled at R/a={R_end:.4g} after {k} steps", estimate=float(F_out[max(m - 1, 0)])
        )
    # final state
    h = 1.0 / (cfg.n_space - 1)
    x = R_end + np.arange(cfg.n_space) * h * (1.0 - R_end)
    final = 1.0 - R_end ** 3 - 3.0 / r * np.trapezoid(x * u, dx=h * (1.0 - R_end))
    # before t0 the thin layer follows the planar similarity solution
    t_early = t0 * np.geomspace(1e-6, 1.0, 40)
    depth = 2.0 * lam * np.sqrt(t_early)
    F_early = [_start_fraction(r, dep) for dep in depth]
    t_all = np.concatenate(([0.0], t_early, t_out[:m], [t_end]))
    R_all = np.concatenate(([1.0], 1.0 - depth, R_out[:m], [R_end]))
    F_all = np.concatenate(([0.0], F_early, F_out[:m], [final]))
    keep = np.concatenate(([True], np.diff(t_all) > 0))
    grid = TimeGrid(t_all[keep] * params.diffusion_time, "custom")
    F = np.clip(F_all[keep], 0.0, 1.0)
    return ReleaseCurve(grid, F, np.clip(R_all[keep], 0.0, 1.0))


def _start_fraction(loading_ratio, depth):
    u, R, _, _ = _planar_start(loading_ratio, depth, 401)
    x = R + np.linspace(0.0, 1.0, u.size) * depth
    return 1.0 - R ** 3 - 3.0 / loading_ratio * np.trapezoid(x * u, x)


# ---------------------------------------------------------------------------
# Front table exchange
# ---------------------------------------------------------------------------


def front_table(curve: ReleaseCurve):
    """``(t_s, R_over_a)`` arrays from a curve carrying a front."""
    if curve.front is None:
        raise DomainError("release curve has no front positions")
    return np.array(curve.t), np.array(curve.front)


def write_front_table(path, t, front):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "R_over_a"])
        for ti, ri in zip(t, front):
            w.writerow([f"{ti:.9e}", f"{ri:.9e}"])


def read_front_table(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0].copy(), data[:, 1].copy()

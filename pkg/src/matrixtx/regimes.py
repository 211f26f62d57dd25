"""Which process limits the channel response: release or propagation.

``tau = t_rel / t_abs`` compares the release duration with the time the
channel needs to deliver a fraction ``sigma`` of the absorbable molecules.
For small ``tau`` the release looks instantaneous; for large ``tau`` the
channel looks instantaneous.  Both limits have closed-form approximations
with simple error bounds, assessed here by NRMSE and percent deviation.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np

from .channel import absorbed_fraction_surface, hitting_rate_surface, peak_time_point
from .core import (
    ChannelParams,
    DomainError,
    GridError,
    MatrixParams,
    ReleaseCurve,
    ResponseCurve,
    TimeGrid,
    erfc_inv,
    integrate,
)
from .release import release_time
from .response import CONV_TOL, _Kernel

DEFAULT_SIGMA = 0.99
DEFAULT_THRESHOLDS = (1e-2, 1e2)

CHANNEL = "channel-dominated"
INTERMEDIATE = "intermediate"
RELEASE = "release-dominated"


@dataclass(frozen=True)
class RegimeReport:
    t_rel: float
    t_abs: float
    t_peak_point: float
    t_max: float
    tau: float
    sigma: float
    classification: str
    thresholds: Tuple[float, float]

    def to_dict(self):
        out = asdict(self)
        out["thresholds"] = list(self.thresholds)
        return out

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    def to_table(self):
        rows = [
            ("t_rel [s]", f"{self.t_rel:.6g}"),
            ("t_abs [s]", f"{self.t_abs:.6g}"),
            ("t_peak_point [s]", f"{self.t_peak_point:.6g}"),
            ("t_max [s]", f"{self.t_max:.6g}"),
            ("tau", f"{self.tau:.6g}"),
            ("sigma", f"{self.sigma:g}"),
            ("classification", self.classification),
            ("thresholds", f"{self.thresholds[0]:g} / {self.thresholds[1]:g}"),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def _check_sigma(sigma):
    if not 0.0 < sigma < 1.0:
        raise DomainError(f"sigma must lie in (0, 1), got {sigma!r}")


def absorption_time(sigma: float, c: ChannelParams) -> float:
    """Time until a point source has delivered ``sigma * r_rx / d``."""
    _check_sigma(sigma)
    return (c.d - c.r_rx) ** 2 / (4.0 * c.D_c) / erfc_inv(sigma) ** 2


def absorption_time_from_peak(sigma: float, c: ChannelParams) -> float:
    """Same quantity expressed through the point-source peak time."""
    _check_sigma(sigma)
    return 1.5 * peak_time_point(c) / erfc_inv(sigma) ** 2


def classify(tau, thresholds=DEFAULT_THRESHOLDS):
    low, high = thresholds
    if tau <= low:
        return CHANNEL
    if tau >= high:
        return RELEASE
    return INTERMEDIATE


def tau_closed_form(m: MatrixParams, c: ChannelParams, sigma=DEFAULT_SIGMA):
    _check_sigma(sigma)
    if m.loading_ratio <= 1.0:
        return 0.0
    return (
        2.0 * m.a ** 2 / (3.0 * (c.d - c.r_rx) ** 2)
        * (c.D_c / m.D_m)
        * (m.loading_ratio - 0.5)
        * erfc_inv(sigma) ** 2
    )


def loading_ratio_for_tau(tau, m: MatrixParams, c: ChannelParams, sigma=DEFAULT_SIGMA):
    """Loading ratio giving a target ``tau`` with everything else fixed."""
    unit = tau_closed_form(m.with_ratio(1.5), c, sigma)  # tau at ratio - 1/2 = 1
    ratio = tau / unit + 0.5
    if not ratio > 1.0:
        raise DomainError(f"tau={tau:g} is below {0.5 * unit:g}, the smallest value a gradual release reaches")
    return ratio


def regime_ratio(
    m: MatrixParams, c: ChannelParams, sigma=DEFAULT_SIGMA, thresholds=DEFAULT_THRESHOLDS
) -> RegimeReport:
    low, high = thresholds
    if not 0 < low < high:
        raise DomainError("thresholds must satisfy 0 < low < high")
    t_abs = absorption_time(sigma, c)
    t_rel = release_time(m) if m.loading_ratio > 1.0 else 0.0
    tau = tau_closed_form(m, c, sigma)
    return RegimeReport(
        t_rel=t_rel,
        t_abs=t_abs,
        t_peak_point=peak_time_point(c),
        t_max=t_abs + t_rel,
        tau=tau,
        sigma=sigma,
        classification=classify(tau, thresholds),
        thresholds=(low, high),
    )


# ---------------------------------------------------------------------------
# limiting approximations and their error bounds
# ---------------------------------------------------------------------------


def approx_channel_dominated(m: MatrixParams, c: ChannelParams, grid: TimeGrid) -> ResponseCurve:
    """Everything released at once: ``M_inf * N_s(t)``."""
    return ResponseCurve(grid, m.M_inf * absorbed_fraction_surface(grid.points, m, c))


def approx_release_dominated(
    release: Union[ReleaseCurve, Callable], c: ChannelParams, M_inf: float = 1.0, grid: Optional[TimeGrid] = None
) -> ResponseCurve:
    """Instant propagation: ``M_inf * F(t) * r_rx / d``."""
    if isinstance(release, ReleaseCurve):
        if grid is None:
            grid = release.grid
        frac = release.at(grid.points) if grid is not release.grid else release.fraction
    else:
        if grid is None:
            raise GridError("a grid is needed when the release is given as a function")
        frac = np.asarray(release(grid.points), dtype=float)
    return ResponseCurve(grid, M_inf * frac * c.r_rx / c.d)


def error_bound_channel_dominated(t, m: MatrixParams, c: ChannelParams):
    """``M_inf * p_s(t) * t_rel``; zero for instantaneous release."""
    t_rel = release_time(m) if m.loading_ratio > 1.0 else 0.0
    out = m.M_inf * t_rel * np.asarray(hitting_rate_surface(t, m, c))
    return float(out) if np.ndim(t) == 0 else out


def error_bound_release_dominated(t, release_rate, c: ChannelParams, t_abs: float):
    """``(r_rx / d) * m(t) * t_abs`` for a release rate ``m(t)`` [count/s].

    ``release_rate`` is either a function of time or an array on ``t``.
    """
    rate = release_rate(t) if callable(release_rate) else release_rate
    rate = np.asarray(rate, dtype=float)
    if np.any(rate < 0):
        raise DomainError("release rate must be non-negative")
    out = c.r_rx / c.d * rate * t_abs
    return float(out) if np.ndim(t) == 0 else out


# direct evaluation of the approximation errors (per molecule)


def actual_error_channel_dominated(t, fraction: Callable, t_rel: float, m: MatrixParams, c: ChannelParams):
    """``N_s(t) - N(t)`` per molecule, as the integral of the unreleased part.

    Equals ``integral_0^min(t, t_rel) (1 - F(x)) p_s(t - x) dx``, which avoids
    the cancellation of differencing two nearly equal responses.
    """
    kern = _Kernel(m, c)
    abs_tol = 0.01 * CONV_TOL * kern.limit
    out = []
    for ti in np.atleast_1d(t):
        hi = min(ti, t_rel)
        if hi <= 0:
            out.append(0.0)
            continue
        pts = [ti - p for p in kern.scale_points(ti) if 0 < ti - p < hi]
        out.append(
            integrate(lambda x, ti=ti: (1.0 - fraction(x)) * kern.rate(ti - x), 0.0, hi, abs_tol=abs_tol, points=pts)
        )
    out = np.array(out)
    return float(out[0]) if np.ndim(t) == 0 else out


def actual_error_release_dominated(t, fraction: Callable, t_rel: float, m: MatrixParams, c: ChannelParams):
    """``F(t) r/d - N(t)`` per molecule, evaluated without cancellation.

    Splits into ``integral_0^t p_s(u) [F(t) - F(t - u)] du`` and the
    undelivered tail ``F(t) (r/d - N_s(t))``.
    """
    kern = _Kernel(m, c)
    abs_tol = 0.01 * CONV_TOL * kern.limit
    out = []
    for ti in np.atleast_1d(t):
        if ti <= 0:
            out.append(0.0)
            continue
        Ft = fraction(ti)
        pts = kern.scale_points(ti)
        if 0 < ti - t_rel < ti:
            pts.append(ti - t_rel)
        body = integrate(
            lambda u, ti=ti: kern.rate(u) * (Ft - fraction(ti - u)), 0.0, ti, abs_tol=abs_tol, points=pts
        )
        tail = kern.limit - kern.cdf(ti)
        out.append(body + Ft * tail)
    out = np.array(out)
    return float(out[0]) if np.ndim(t) == 0 else out


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def _check_same_grid(a: ResponseCurve, b: ResponseCurve):
    if a.grid != b.grid:
        raise GridError("curves are sampled on different grids")


def nrmse_of_error(t, error, n_inf, weight="log"):
    """Root mean square of ``error`` over ``t``, divided by ``n_inf``.

    ``weight="log"`` averages uniformly in ``ln t`` over the grid span
    (points at ``t = 0`` are skipped); ``weight="time"`` is the plain
    ``sqrt(integral error^2 dt)``, trapezoid rule, with no averaging.
    """
    t = np.asarray(t, dtype=float)
    e = np.asarray(error, dtype=float)
    if t.shape != e.shape:
        raise GridError("error does not match its time grid")
    if not n_inf > 0:
        raise DomainError("n_inf must be positive")
    if weight == "time":
        return math.sqrt(np.trapezoid(e * e, t)) / n_inf
    if weight != "log":
        raise DomainError(f"unknown weight {weight!r}")
    keep = t > 0
    lt = np.log(t[keep])
    if lt.size < 2:
        raise GridError("log weighting needs at least two positive times")
    mean_sq = np.trapezoid(e[keep] ** 2, lt) / (lt[-1] - lt[0])
    return math.sqrt(mean_sq) / n_inf


def nrmse(approx: ResponseCurve, actual: ResponseCurve, n_inf: Optional[float] = None, weight="log"):
    """NRMSE of ``approx - actual``; ``n_inf`` defaults to the last actual value."""
    _check_same_grid(approx, actual)
    if n_inf is None:
        n_inf = float(actual.absorbed[-1])
    return nrmse_of_error(approx.t, approx.absorbed - actual.absorbed, n_inf, weight)


def percent_deviation(approx: ResponseCurve, actual: ResponseCurve):
    """``100 (approx - actual) / actual``; NaN where ``actual`` is zero."""
    _check_same_grid(approx, actual)
    out = np.full(len(actual.grid), np.nan)
    pos = actual.absorbed > 0
    out[pos] = 100.0 * (approx.absorbed[pos] - actual.absorbed[pos]) / actual.absorbed[pos]
    return out


# ---------------------------------------------------------------------------
# sweep over tau with a Frenning release
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepPoint:
    tau: float
    loading_ratio: float
    t_max: float
    t: np.ndarray
    error_channel: np.ndarray
    bound_channel: np.ndarray
    error_release: np.ndarray
    bound_release: np.ndarray
    nrmse_channel: float
    nrmse_channel_bound: float
    nrmse_release: float
    nrmse_release_bound: float


def sweep_grid(t_max, n_points=400, span=(1e-7, 1.0)):
    """Default evaluation grid for a sweep point: log-spaced in ``t / t_max``."""
    return np.geomspace(span[0] * t_max, span[1] * t_max, n_points)


def regime_sweep_point(
    tau, m: MatrixParams, c: ChannelParams, sigma=DEFAULT_SIGMA, n_points=400, span=(1e-7, 1.0)
) -> SweepPoint:
    """Errors, bounds and NRMSEs of both approximations at one ``tau``.

    The loading ratio is chosen to hit ``tau``; release follows the
    Frenning model, which is accurate at the large ratios involved.
    """
    import warnings

    from .release import frenning_fraction_fn, frenning_release_rate

    ratio = loading_ratio_for_tau(tau, m, c, sigma)
    mm = m.with_ratio(ratio)
    rep = regime_ratio(mm, c, sigma)
    t = sweep_grid(rep.t_max, n_points, span)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        frac = frenning_fraction_fn(mm)
        e_ch = actual_error_channel_dominated(t, frac, rep.t_rel, mm, c)
        e_re = actual_error_release_dominated(t, frac, rep.t_rel, mm, c)
        rate = frenning_release_rate(t, mm)
    b_ch = error_bound_channel_dominated(t, mm, c) / mm.M_inf
    b_re = error_bound_release_dominated(t, rate, c, rep.t_abs)
    lim = c.r_rx / c.d
    return SweepPoint(
        tau=tau,
        loading_ratio=ratio,
        t_max=rep.t_max,
        t=t,
        error_channel=e_ch,
        bound_channel=b_ch,
        error_release=e_re,
        bound_release=b_re,
        nrmse_channel=nrmse_of_error(t, e_ch, lim),
        nrmse_channel_bound=nrmse_of_error(t, b_ch, lim),
        nrmse_release=nrmse_of_error(t, e_re, lim),
        nrmse_release_bound=nrmse_of_error(t, b_re, lim),
    )

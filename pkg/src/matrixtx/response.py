"""Expected number of molecules absorbed by the receiver over time.

The channel response is the convolution of the release profile with the
surface hitting density.  It is evaluated pointwise by adaptive quadrature,
or in closed form when the matrix dissolves instantaneously.
"""

from __future__ import annotations

import csv
import math
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import special
from scipy.interpolate import PchipInterpolator

from .channel import absorbed_fraction_surface, hitting_rate_surface, surface_constants
from .core import (
    DomainError,
    GridError,
    ChannelParams,
    MatrixParams,
    ReleaseCurve,
    ResponseCurve,
    TimeGrid,
    integrate,
)

CONV_TOL = 1e-6  # absolute, in units of M_inf * r_rx / d

FractionLike = Union[ReleaseCurve, Callable[[float], float]]


class _Kernel:
    """Scalar ``p_s`` and ``N_s`` with the constants hoisted out."""

    def __init__(self, m: MatrixParams, c: ChannelParams):
        k = surface_constants(m, c)
        self.b1, self.b2 = k.beta1, k.beta2
        self.sb1, self.sb2 = math.sqrt(k.beta1), math.sqrt(k.beta2)
        self.rate_pref = 2.0 * k.rho * m.a * c.r_rx / c.d * math.sqrt(math.pi * c.D_c)
        self.cdf_pref = c.r_rx * math.sqrt(math.pi * c.D_c) / (math.pi * m.a * c.d)
        self.limit = c.r_rx / c.d

    def rate(self, t):
        if t <= 0.0:
            return 0.0
        return self.rate_pref / math.sqrt(t) * (math.exp(-self.b1 / t) - math.exp(-self.b2 / t))

    def cdf(self, t):
        if t <= 0.0:
            return 0.0
        st = math.sqrt(t)
        return self.cdf_pref * (
            st * (math.exp(-self.b1 / t) - math.exp(-self.b2 / t))
            + math.sqrt(math.pi) * (self.sb2 * math.erfc(self.sb2 / st) - self.sb1 * math.erfc(self.sb1 / st))
        )

    def scale_points(self, t):
        """Breakpoints bracketing the bulk of the hitting density below ``t``."""
        base = self.b1 if self.b1 > 0 else self.b2
        return [base * 4.0 ** k for k in range(-3, 40) if base * 4.0 ** k < t]


def _fraction_fn(release: FractionLike):
    """Scalar fraction function and the time after which it is constant 1."""
    if isinstance(release, ReleaseCurve):
        tp, fp = release.t, release.fraction
        t_last = float(tp[-1])
        reached = np.flatnonzero(fp >= 1.0)
        t_full = float(tp[reached[0]]) if reached.size else t_last
        # monotone C1 interpolant: the kinks of a piecewise-linear one stall
        # the adaptive quadrature at tight tolerances
        shape = PchipInterpolator(tp, fp, extrapolate=False)

        def frac(x):
            if x >= t_last:
                return 1.0
            return float(shape(x))

        return frac, t_full
    return (lambda x: float(release(x))), None


def response_convolution(
    release: FractionLike,
    m: MatrixParams,
    c: ChannelParams,
    grid: TimeGrid,
    t_rel: Optional[float] = None,
    rel_tol: float = 1e-8,
) -> ResponseCurve:
    """``N(t) = M_inf * integral_0^t p_s(u) F(t - u) du`` on every grid point.

    ``release`` is a ``ReleaseCurve`` (monotone cubic interpolation, full release
    beyond its last time) or a scalar function ``F(t)``.  ``t_rel`` marks
    the end of the release for callables and is used as a breakpoint.
    """
    kern = _Kernel(m, c)
    frac, t_full = _fraction_fn(release)
    if t_rel is None:
        t_rel = t_full
    abs_tol = CONV_TOL * 0.1 * kern.limit
    out = np.empty(len(grid))
    for i, t in enumerate(grid.points):
        if t <= 0.0:
            out[i] = 0.0
            continue
        pts = kern.scale_points(t)
        if t_rel is not None and 0.0 < t - t_rel < t:
            pts.append(t - t_rel)
        out[i] = integrate(
            lambda u, t=t: kern.rate(u) * frac(t - u), 0.0, t, rel_tol=rel_tol, abs_tol=abs_tol, points=pts
        )
    return ResponseCurve(grid, m.M_inf * out)


def response_convolution_rate(
    rate: Callable[[float], float],
    m: MatrixParams,
    c: ChannelParams,
    grid: TimeGrid,
    t_end: float,
    jumps: Sequence = (),
    rel_tol: float = 1e-8,
) -> ResponseCurve:
    """Equivalent form ``N(t) = M_inf * integral_0^t N_s(t - x) f(x) dx``.

    ``rate`` is the release density ``f = dF/dt`` supported on ``[0, t_end]``;
    ``jumps`` lists ``(time, size)`` steps of ``F`` that the density misses.
    """
    kern = _Kernel(m, c)
    abs_tol = CONV_TOL * 0.1 * kern.limit
    out = np.empty(len(grid))
    for i, t in enumerate(grid.points):
        if t <= 0.0:
            out[i] = 0.0
            continue
        hi = min(t, t_end)
        pts = [t - p for p in kern.scale_points(t) if 0 < t - p < hi]
        total = integrate(
            lambda x, t=t: kern.cdf(t - x) * rate(x), 0.0, hi, rel_tol=rel_tol, abs_tol=abs_tol, points=pts
        )
        for tj, size in jumps:
            if tj <= t:
                total += size * kern.cdf(t - tj)
        out[i] = total
    return ResponseCurve(grid, m.M_inf * out)


def response_instantaneous(t, m: MatrixParams, c: ChannelParams, n_terms: int = 300):
    """Closed-form channel response when every molecule dissolves at once.

    The series terms are written with the Faddeeva function
    ``w(z) = exp(-z^2) erfc(-iz)``, which keeps every factor bounded: each term
    pairs ``exp(-beta/t)`` with ``Im w(sqrt(g_n t) + i sqrt(beta/t))``.
    """
    if n_terms < 1:
        raise DomainError("n_terms must be positive")
    k = surface_constants(m, c)
    tt = np.asarray(t, dtype=float)
    if np.any(np.isnan(tt)) or np.any(tt < 0):
        raise DomainError("time must be non-negative")
    flat = np.atleast_1d(tt).ravel()
    result = np.zeros(flat.shape)
    finite = (flat > 0) & np.isfinite(flat)
    result[np.isinf(flat)] = c.r_rx / c.d
    if np.any(finite):
        ts = flat[finite][:, None]
        n = np.arange(1, n_terms + 1, dtype=float)[None, :]
        g = m.D_m * (n * math.pi / m.a) ** 2
        y = np.sqrt(g * ts)
        s1 = np.sqrt(k.beta1 / ts)
        s2 = np.sqrt(k.beta2 / ts)
        term = (
            np.exp(-k.beta1 / ts) * special.wofz(y + 1j * s1).imag
            - np.exp(-k.beta2 / ts) * special.wofz(y + 1j * s2).imag
        )
        coef = 3.0 * c.r_rx * math.sqrt(c.D_c) / (math.pi ** 2 * m.a * c.d) / (n * n * np.sqrt(g))
        series = np.sum(coef * term, axis=1)
        result[finite] = absorbed_fraction_surface(flat[finite], m, c) - series
    result = m.M_inf * result
    if np.ndim(t) == 0:
        return float(result[0])
    return result.reshape(tt.shape)


def response_instantaneous_curve(m: MatrixParams, c: ChannelParams, grid: TimeGrid, n_terms=300):
    return ResponseCurve(grid, response_instantaneous(grid.points, m, c, n_terms))


def surface_response_curve(m: MatrixParams, c: ChannelParams, grid: TimeGrid):
    """All molecules released on the surface at ``t = 0``: ``M_inf * N_s``."""
    return ResponseCurve(grid, m.M_inf * absorbed_fraction_surface(grid.points, m, c))


def absorption_rate(curve: ResponseCurve) -> ResponseCurve:
    """Finite-difference ``dN/dt``; second order inside, one-sided at the ends."""
    if len(curve.grid) < 3:
        raise GridError("absorption rate needs at least 3 grid points")
    rate = np.gradient(curve.absorbed, curve.t, edge_order=1)
    return ResponseCurve(curve.grid, curve.absorbed, rate)


def write_response_csv(path, curve: ResponseCurve):
    rate = curve.rate if curve.rate is not None else absorption_rate(curve).rate
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "N_expected", "dN_dt"])
        for row in zip(curve.t, curve.absorbed, rate):
            w.writerow([f"{v:.9e}" for v in row])

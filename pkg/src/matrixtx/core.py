"""Shared types, special functions, quadrature and root finding.

All quantities are SI (m, s, molecule counts).  The drug loading ``A`` and
solubility ``C_s`` only ever enter through their ratio, so ``MatrixParams``
stores ``loading_ratio = A / C_s`` and never an absolute concentration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate as _integrate
from scipy import optimize as _optimize
from scipy import special as _special

DEFAULT_REL_TOL = 1e-8


class MatrixTxError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(MatrixTxError, ValueError):
    """An argument lies outside the domain of the model or function."""


class GeometryError(MatrixTxError, ValueError):
    """Transmitter and receiver overlap or the receiver encloses the source."""


class BracketError(MatrixTxError, ValueError):
    """Root finding was given an interval without a sign change."""


class ConfigError(MatrixTxError, ValueError):
    """Invalid numerical or experiment configuration."""


class GridError(MatrixTxError, ValueError):
    """Time grids are malformed, too short or do not match."""


class AccuracyError(MatrixTxError, RuntimeError):
    """A numerical procedure did not reach its accuracy target.

    ``estimate`` carries the best value obtained and ``error`` its estimated
    absolute error (``nan`` when unknown).
    """

    def __init__(self, message, estimate=math.nan, error=math.nan):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MatrixParams:
    """Spherical matrix carrier.

    Parameters
    ----------
    a : float
        Radius of the matrix core [m].
    D_m : float
        Diffusion coefficient inside the matrix [m^2/s].
    loading_ratio : float
        Initial loading over solubility, ``A / C_s``.  Values below one are
        only meaningful for the instantaneous-release model.
    M_inf : float
        Total number of loaded molecules.
    """

    a: float
    D_m: float
    loading_ratio: float
    M_inf: float = 1e4

    def __post_init__(self):
        if not (self.a > 0 and math.isfinite(self.a)):
            raise DomainError(f"matrix radius a must be positive, got {self.a!r}")
        # D_m == 0 is allowed: a frozen matrix never releases anything.
        if not (self.D_m >= 0 and math.isfinite(self.D_m)):
            raise DomainError(f"D_m must be non-negative, got {self.D_m!r}")
        if not (self.loading_ratio > 0 and math.isfinite(self.loading_ratio)):
            raise DomainError(f"loading_ratio must be positive, got {self.loading_ratio!r}")
        if not self.M_inf >= 1:
            raise DomainError(f"M_inf must be >= 1, got {self.M_inf!r}")

    @property
    def diffusion_time(self):
        """``a**2 / D_m`` [s], the natural time unit of the release models."""
        if self.D_m == 0:
            return math.inf
        return self.a * self.a / self.D_m

    def with_ratio(self, loading_ratio):
        return MatrixParams(self.a, self.D_m, loading_ratio, self.M_inf)


@dataclass(frozen=True)
class ChannelParams:
    """Unbounded diffusive channel with a fully absorbing spherical receiver."""

    D_c: float
    d: float
    r_rx: float

    def __post_init__(self):
        if not (self.D_c > 0 and math.isfinite(self.D_c)):
            raise DomainError(f"D_c must be positive, got {self.D_c!r}")
        if not self.r_rx > 0:
            raise DomainError(f"r_rx must be positive, got {self.r_rx!r}")
        if not self.d > self.r_rx:
            raise GeometryError(f"distance d={self.d!r} must exceed r_rx={self.r_rx!r}")

    @property
    def hit_fraction(self):
        """Asymptotic hitting probability ``r_rx / d``."""
        return self.r_rx / self.d

    def check_clearance(self, m: MatrixParams):
        # touching bodies (d == a + r_rx) are allowed; the evaluation geometry
        # with a = r_rx = 1 um, d = 2 um is exactly that case
        if self.d < (m.a + self.r_rx) * (1.0 - 1e-12):
            raise GeometryError(
                f"transmitter (a={m.a:g}) and receiver (r_rx={self.r_rx:g}) overlap at d={self.d:g}"
            )


@dataclass(frozen=True, eq=False)
class TimeGrid:
    points: np.ndarray
    spacing: str = "linear"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise GridError("a time grid needs at least two points")
        if not np.all(np.isfinite(pts)) or pts[0] < 0:
            raise GridError("grid times must be finite and non-negative")
        if np.any(np.diff(pts) <= 0):
            raise GridError("grid times must be strictly increasing")
        if self.spacing not in ("linear", "log", "custom"):
            raise GridError(f"unknown spacing {self.spacing!r}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def linear(cls, t_end, n=400, t_start=0.0):
        return cls(np.linspace(t_start, t_end, n), "linear")

    @classmethod
    def log(cls, t_start, t_end, n=400, include_zero=False):
        if not 0 < t_start < t_end:
            raise GridError("log grid needs 0 < t_start < t_end")
        pts = np.geomspace(t_start, t_end, n)
        if include_zero:
            pts = np.concatenate(([0.0], pts))
        return cls(pts, "log")

    def __len__(self):
        return self.points.size

    def __eq__(self, other):
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return self.points.shape == other.points.shape and bool(np.all(self.points == other.points))

    def __hash__(self):
        return hash(self.points.tobytes())


def _readonly(x):
    arr = np.array(x, dtype=float)
    arr.setflags(write=False)
    return arr


_MONO_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class ReleaseCurve:
    """Released fraction ``M(t)/M_inf`` and optional front ``R(t)/a``."""

    grid: TimeGrid
    fraction: np.ndarray
    front: Optional[np.ndarray] = None

    def __post_init__(self):
        frac = _readonly(self.fraction)
        if frac.shape != self.grid.points.shape:
            raise GridError("fraction does not match the grid")
        if np.any(frac < -_MONO_SLACK) or np.any(frac > 1 + _MONO_SLACK):
            raise DomainError("released fraction must lie in [0, 1]")
        if np.any(np.diff(frac) < -1e-9):
            raise DomainError("released fraction must be non-decreasing")
        object.__setattr__(self, "fraction", frac)
        if self.front is not None:
            front = _readonly(self.front)
            if front.shape != frac.shape:
                raise GridError("front does not match the grid")
            if np.any(front < -_MONO_SLACK) or np.any(front > 1 + _MONO_SLACK):
                raise DomainError("front position R/a must lie in [0, 1]")
            if np.any(np.diff(front) > 1e-9):
                raise DomainError("front position must be non-increasing")
            object.__setattr__(self, "front", front)

    @property
    def t(self):
        return self.grid.points

    def at(self, t):
        """Linear interpolation of the released fraction; held constant outside."""
        return np.interp(t, self.grid.points, self.fraction)


@dataclass(frozen=True, eq=False)
class ResponseCurve:
    """Expected absorbed count ``N(t)`` and optional rate ``dN/dt``."""

    grid: TimeGrid
    absorbed: np.ndarray
    rate: Optional[np.ndarray] = None

    def __post_init__(self):
        n = _readonly(self.absorbed)
        if n.shape != self.grid.points.shape:
            raise GridError("absorbed counts do not match the grid")
        # slack matches the quadrature tolerance of the convolution
        scale = float(np.max(np.abs(n))) if n.size else 0.0
        if np.any(n < -1e-6 * scale):
            raise DomainError("absorbed count must be non-negative")
        if np.any(np.diff(n) < -1e-6 * scale):
            raise DomainError("absorbed count must be non-decreasing")
        object.__setattr__(self, "absorbed", n)
        if self.rate is not None:
            r = _readonly(self.rate)
            if r.shape != n.shape:
                raise GridError("rate does not match the grid")
            object.__setattr__(self, "rate", r)

    @property
    def t(self):
        return self.grid.points

    def within_bound(self, limit, slack=1e-6):
        """True when every ``N(t) <= limit`` up to ``slack * limit``."""
        return bool(np.all(self.absorbed <= limit * (1 + slack)))


# ---------------------------------------------------------------------------
# special functions
# ---------------------------------------------------------------------------


def _scalar_or_array(x, out):
    return float(out) if np.ndim(x) == 0 else out


def erf(x):
    return _scalar_or_array(x, _special.erf(np.asarray(x, dtype=float)))


def erfc(x):
    return _scalar_or_array(x, _special.erfc(np.asarray(x, dtype=float)))


_WINITZKI_A = 0.147


def _erfc_inv_lower(y):
    """Inverse of erfc for ``0 < y <= 1`` (non-negative results)."""
    # Winitzki's closed-form erf^-1 as a starting point; 1 - z^2 = y (2 - y).
    log_term = np.log(y * (2.0 - y))
    c = 2.0 / (math.pi * _WINITZKI_A) + 0.5 * log_term
    x = np.sqrt(np.maximum(np.sqrt(c * c - log_term / _WINITZKI_A) - c, 0.0))
    log_y = np.log(y)
    half_sqrt_pi = 0.5 * math.sqrt(math.pi)
    for _ in range(6):
        # q = f / f' for f(x) = erfc(x) - y, scaled by exp(x^2) to stay finite
        q = -half_sqrt_pi * (_special.erfcx(x) - np.exp(log_y + x * x))
        step = q / (1.0 + x * q)  # Halley: f''/f' = -2x
        x = x - step
        if np.all(np.abs(step) <= 1e-17 * np.maximum(1.0, np.abs(x))):
            break
    return x


def erfc_inv(y):
    """Inverse complementary error function on ``(0, 2)``.

    Starts from a closed-form approximation and polishes it with Halley
    iterations on ``erfc`` itself, so the round trip ``erfc(erfc_inv(y))``
    is accurate to a few ulps of ``y``.
    """
    arr = np.asarray(y, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0) or np.any(arr >= 2):
        raise DomainError("erfc_inv is defined on the open interval (0, 2)")
    upper = arr > 1.0
    base = np.where(upper, 2.0 - arr, arr)
    x = _erfc_inv_lower(base)
    x = np.where(upper, -x, x)
    x = np.where(arr == 1.0, 0.0, x)
    return _scalar_or_array(y, x)


# ---------------------------------------------------------------------------
# quadrature and root finding
# ---------------------------------------------------------------------------


def integrate(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = 0.0,
    points: Optional[Sequence[float]] = None,
    limit: int = 400,
) -> float:
    """Adaptive quadrature of a scalar function on ``[lo, hi]``.

    ``hi`` may be ``inf``; the half line is then mapped onto ``[0, 1)`` with
    ``t = lo + u / (1 - u)``.  The integrand must return its limiting value
    (usually 0) at singular endpoints rather than raising.

    Raises
    ------
    AccuracyError
        When the subdivision budget is exhausted before the estimated error
        meets ``max(abs_tol, rel_tol * |result|)``.
    """
    if not lo <= hi:
        raise DomainError(f"integration bounds out of order: [{lo}, {hi}]")
    if abs_tol <= 0 and not rel_tol >= 50 * np.finfo(float).eps:
        raise DomainError(f"rel_tol={rel_tol!r} is below what double precision can deliver")
    if lo == hi:
        return 0.0
    if math.isinf(hi):
        def g(u):
            if u >= 1.0:
                return 0.0
            w = 1.0 - u
            return f(lo + u / w) / (w * w)

        mapped = None
        if points:
            mapped = [(p - lo) / (1.0 + p - lo) for p in points if lo < p < math.inf]
        return integrate(g, 0.0, 1.0, rel_tol, abs_tol, mapped or None, limit)

    pts = None
    if points:
        pts = sorted({float(p) for p in points if lo < p < hi})
    value, err, info, *rest = _integrate.quad(
        f, lo, hi, epsabs=abs_tol, epsrel=rel_tol, limit=limit, points=pts or None, full_output=1
    )
    target = max(abs_tol, rel_tol * abs(value))
    if rest and err > 10.0 * target and err > 1e-300:
        raise AccuracyError(
            f"quadrature did not converge on [{lo:g}, {hi:g}]: {rest[0]}", estimate=value, error=err
        )
    return value


def find_root_monotone(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12) -> float:
    """Root of a monotone function bracketed by ``[lo, hi]`` (Brent's method)."""
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if flo * fhi > 0:
        raise BracketError(f"no sign change on [{lo}, {hi}]: f(lo)={flo:g}, f(hi)={fhi:g}")
    return _optimize.brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=200)

"""Hitting statistics of an absorbing spherical receiver.

Molecules start uniformly on a sphere of radius ``a`` (the carrier surface)
or at a point, a distance ``d`` from the receiver centre, and diffuse freely
with coefficient ``D_c``.  The carrier itself is transparent to them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .core import ChannelParams, DomainError, GeometryError, MatrixParams


@dataclass(frozen=True)
class SurfaceChannelConstants:
    beta1: float
    beta2: float
    rho: float


def surface_constants(m: MatrixParams, c: ChannelParams) -> SurfaceChannelConstants:
    c.check_clearance(m)
    four_d = 4.0 * c.D_c
    beta1 = max(c.d - m.a - c.r_rx, 0.0) ** 2 / four_d
    beta2 = (c.d + m.a - c.r_rx) ** 2 / four_d
    return SurfaceChannelConstants(beta1, beta2, 1.0 / (4.0 * math.pi * m.a * m.a))


def _times(t):
    arr = np.asarray(t, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise DomainError("time must be non-negative")
    return arr


def _out(t, value):
    return float(value) if np.ndim(t) == 0 else value


def hitting_rate_surface(t, m: MatrixParams, c: ChannelParams):
    """First-passage density ``p_s(t)`` [1/s] for a surface-released molecule."""
    k = surface_constants(m, c)
    tt = _times(t)
    pos = tt > 0
    ts = np.where(pos, tt, 1.0)
    with np.errstate(over="ignore"):
        val = (
            2.0 * k.rho * m.a * c.r_rx / c.d
            * np.sqrt(math.pi * c.D_c / ts)
            * (np.exp(-k.beta1 / ts) - np.exp(-k.beta2 / ts))
        )
    val = np.where(pos & np.isfinite(tt), val, 0.0)
    return _out(t, val)


def _surface_cdf(tt, k: SurfaceChannelConstants, m: MatrixParams, c: ChannelParams):
    # Integral of p_s on [0, t].  Written with erfc so the t -> inf limit
    # r/d emerges from the difference of two well-conditioned terms.
    pos = tt > 0
    ts = np.where(pos & np.isfinite(tt), tt, 1.0)
    sb1, sb2 = math.sqrt(k.beta1), math.sqrt(k.beta2)
    gauss = np.sqrt(ts) * (np.exp(-k.beta1 / ts) - np.exp(-k.beta2 / ts))
    tails = math.sqrt(math.pi) * (
        sb2 * special.erfc(sb2 / np.sqrt(ts)) - sb1 * special.erfc(sb1 / np.sqrt(ts))
    )
    pref = c.r_rx * math.sqrt(math.pi * c.D_c) / (math.pi * m.a * c.d)
    inf_mask = np.isinf(tt)
    val = np.where(pos, pref * (gauss + tails), 0.0)
    return np.where(inf_mask, c.r_rx / c.d, val)


def absorbed_fraction_surface(t, m: MatrixParams, c: ChannelParams):
    """Probability ``N_s(t)`` that a surface-released molecule is absorbed by ``t``."""
    k = surface_constants(m, c)
    return _out(t, _surface_cdf(_times(t), k, m, c))


def absorbed_fraction_point(t, c: ChannelParams):
    """Probability ``N_p(t)`` for a molecule released at a point."""
    if not c.d > c.r_rx:
        raise GeometryError("point transmitter inside the receiver")
    tt = _times(t)
    pos = tt > 0
    ts = np.where(pos, tt, 1.0)
    val = c.r_rx / c.d * special.erfc((c.d - c.r_rx) / np.sqrt(4.0 * c.D_c * ts))
    return _out(t, np.where(pos, val, 0.0))


def peak_time_point(c: ChannelParams):
    """Time of the maximum of the point-source hitting density."""
    return (c.d - c.r_rx) ** 2 / (6.0 * c.D_c)

"""Kolmogorov and Levy distances, and the distance-decay measurement for
normalized free sums.

Distances are computed on a merged refinement grid (plus atom positions),
so for continuous pairs they are grid lower bounds; the report carries an
error estimate max-slope * spacing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .convolve import clt_measure
from .errors import MeasureError
from .measures import Atoms, Measure, Semicircle, absolute_moment, support
from .transforms import cdf

DEFAULT_RESOLUTION = 4096


def _atom_positions(measure) -> list:
    if isinstance(measure, Atoms):
        return [p for p, _ in measure.points]
    return []


def _merged_grid(mu: Measure, nu: Measure, resolution: int) -> np.ndarray:
    lo1, hi1 = support(mu)
    lo2, hi2 = support(nu)
    lo, hi = min(lo1, lo2), max(hi1, hi2)
    pad = 1e-9 + 1e-9 * max(abs(lo), abs(hi))
    base = np.linspace(lo - pad, hi + pad, resolution)
    extra = []
    for p in _atom_positions(mu) + _atom_positions(nu):
        extra.extend((p - 1e-12, p, p + 1e-12))
    if extra:
        base = np.unique(np.concatenate([base, np.array(extra)]))
    return base


def kolmogorov(mu: Measure, nu: Measure,
               resolution: int = DEFAULT_RESOLUTION) -> float:
    """d_K = sup_x |F_mu(x) - F_nu(x)| over the merged grid; exact for pairs
    of atomic measures (the sup of a pair of step functions is attained at
    an atom from either side)."""
    xs = _merged_grid(mu, nu, resolution)
    d = float(np.max(np.abs(cdf(mu, xs) - cdf(nu, xs))))
    return min(d, 1.0)


def levy(mu: Measure, nu: Measure,
         resolution: int = DEFAULT_RESOLUTION, depth: int = 20) -> float:
    """Levy distance by binary search (depth ~ 1e-6) on the sandwich
    condition F_mu(x - s) - s <= F_nu(x) <= F_mu(x + s) + s for all x."""
    xs = _merged_grid(mu, nu, resolution)
    f_nu = cdf(nu, xs)
    f_mu = cdf(mu, xs)

    def ok(s: float) -> bool:
        lo = cdf(mu, xs - s) - s
        hi = cdf(mu, xs + s) + s
        if np.any(f_nu < lo - 1e-15) or np.any(f_nu > hi + 1e-15):
            return False
        # symmetric roles (the metric is symmetric; the grid check is not)
        lo2 = cdf(nu, xs - s) - s
        hi2 = cdf(nu, xs + s) + s
        return not (np.any(f_mu < lo2 - 1e-15) or np.any(f_mu > hi2 + 1e-15))

    lo_s, hi_s = 0.0, 1.0
    if ok(0.0):
        return 0.0
    for _ in range(depth):
        mid = 0.5 * (lo_s + hi_s)
        if ok(mid):
            hi_s = mid
        else:
            lo_s = mid
    return hi_s


@dataclass(frozen=True)
class DistanceReport:
    d_K: float
    d_L: float
    grid_resolution: int
    error_estimate: float


def distance_report(mu: Measure, nu: Measure,
                    resolution: int = DEFAULT_RESOLUTION) -> DistanceReport:
    xs = _merged_grid(mu, nu, resolution)
    spacing = float(np.max(np.diff(xs)))
    slope = 0.0
    for m in (mu, nu):
        f = cdf(m, xs)
        slope = max(slope, float(np.max(np.abs(np.diff(f)))) / spacing)
    return DistanceReport(
        d_K=kolmogorov(mu, nu, resolution),
        d_L=levy(mu, nu, resolution),
        grid_resolution=resolution,
        error_estimate=slope * spacing,
    )


def berry_esseen_slope(mu: Measure, n_list) -> tuple:
    """Fit of log d_K(omega, mu_n) against log n.

    Returns (slope, c_fit) with c_fit = max_n d_K * sqrt(n) / beta_3; the
    slope is NaN when every distance sits at solver/grid noise (<= 1e-6).
    """
    n_list = list(n_list)
    if len(n_list) < 2:
        raise MeasureError("need at least two n values to fit a slope")
    omega = Semicircle(0.0, 1.0)
    beta3 = absolute_moment(mu, 3)
    dists = []
    for n in n_list:
        cm = clt_measure(mu, n, window_delta=None)
        dists.append(kolmogorov(cm.grid_density, omega))
    dists = np.asarray(dists)
    c_fit = float(np.max(dists * np.sqrt(np.asarray(n_list, dtype=float))
                         / beta3)) if beta3 > 0 else math.nan
    if np.all(dists <= 1e-6):
        return math.nan, c_fit
    slope = float(np.polyfit(np.log(np.asarray(n_list, float)),
                             np.log(np.maximum(dists, 1e-300)), 1)[0])
    return slope, c_fit

"""Compactly supported probability measures and their moment/tail functionals.

Four variants are supported: finite atomic measures, semicircle laws,
free-Poisson (Marchenko-Pastur) laws under an affine map, and densities
sampled on a uniform grid.  All values are immutable; every operation is a
pure function of its arguments.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

import numpy as np

from .errors import MeasureError, UnsupportedOrderError

MASS_TOL = 1e-9
MASS_RENORM_LIMIT = 1e-6
MAX_MOMENT_ORDER = 16

# Catalan numbers C_0..C_8: even moments of the standard semicircle law.
_CATALAN = (1, 1, 2, 5, 14, 42, 132, 429, 1430)


@dataclass(frozen=True)
class Atoms:
    """Finite atomic measure: ``points`` is ((position, weight), ...)."""

    points: tuple

    def __post_init__(self):
        pts = tuple((float(p), float(w)) for p, w in self.points)
        if not pts:
            raise MeasureError("atomic measure needs at least one atom")
        positions = [p for p, _ in pts]
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise MeasureError("atom positions must be strictly increasing")
        if any(w <= 0 for _, w in pts):
            raise MeasureError("atom weights must be positive")
        mass = math.fsum(w for _, w in pts)
        if abs(mass - 1.0) > MASS_RENORM_LIMIT:
            raise MeasureError(f"atom weights sum to {mass}, not 1")
        if abs(mass - 1.0) > MASS_TOL:
            pts = tuple((p, w / mass) for p, w in pts)
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class Semicircle:
    """Semicircle law with the given mean and variance."""

    mean: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        if not self.variance > 0:
            raise MeasureError("semicircle variance must be positive")


@dataclass(frozen=True)
class FreePoisson:
    """Affine image ``scale * Y + shift`` of a Marchenko-Pastur law Y.

    ``rate`` is the Marchenko-Pastur parameter; free cumulants of Y all
    equal ``rate``.  Rates below 1 put an atom at the origin and are not
    supported.
    """

    rate: float = 1.0
    shift: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.rate < 1.0:
            raise MeasureError(
                "free-Poisson rate < 1 carries an atom at 0; not supported")
        if self.scale == 0.0:
            raise MeasureError("free-Poisson scale must be nonzero")

    def mp_edges(self):
        """Support edges of the underlying Marchenko-Pastur law."""
        r = math.sqrt(self.rate)
        return (1.0 - r) ** 2, (1.0 + r) ** 2


@dataclass(frozen=True)
class GridDensity:
    """Density sampled on a uniform grid over [a, b] (trapezoid mass 1)."""

    a: float
    b: float
    samples: tuple

    def __post_init__(self):
        vals = np.asarray(self.samples, dtype=float)
        if vals.size < 16:
            raise MeasureError("grid density needs at least 16 samples")
        if not (np.isfinite(self.a) and np.isfinite(self.b) and self.a < self.b):
            raise MeasureError("grid support must be a bounded interval")
        if np.any(vals < -1e-12):
            raise MeasureError("grid samples must be non-negative")
        vals = np.maximum(vals, 0.0)
        mass = float(np.trapz(vals, dx=self.spacing_for(vals.size)))
        if abs(mass - 1.0) > MASS_RENORM_LIMIT:
            raise MeasureError(f"grid mass {mass} deviates from 1 beyond limit")
        if abs(mass - 1.0) > MASS_TOL:
            vals = vals / mass
        object.__setattr__(self, "samples", tuple(float(v) for v in vals))

    def spacing_for(self, count=None):
        n = len(self.samples) if count is None else count
        return (self.b - self.a) / (n - 1)

    @property
    def spacing(self):
        return self.spacing_for()

    @property
    def xs(self):
        return np.linspace(self.a, self.b, len(self.samples))


Measure = Union[Atoms, Semicircle, FreePoisson, GridDensity]


def atoms(points) -> Atoms:
    """Atomic measure from (position, weight) pairs (sorted by position)."""
    return Atoms(tuple(sorted((float(p), float(w)) for p, w in points)))


def point_mass(position: float) -> Atoms:
    return Atoms(((float(position), 1.0),))


def bernoulli(p: float = 0.5) -> Atoms:
    """Normalized two-point law: zero mean, unit variance, P(high) = p."""
    if not 0.0 < p < 1.0:
        raise MeasureError("bernoulli parameter must lie in (0, 1)")
    q = 1.0 - p
    lo = -math.sqrt(p / q)
    hi = math.sqrt(q / p)
    return Atoms(((lo, q), (hi, p)))


def is_point_mass(measure: Measure) -> bool:
    return isinstance(measure, Atoms) and len(measure.points) == 1


def support(measure: Measure):
    """Support interval [lo, hi] of the measure."""
    if isinstance(measure, Atoms):
        pos = [p for p, _ in measure.points]
        return min(pos), max(pos)
    if isinstance(measure, Semicircle):
        r = 2.0 * math.sqrt(measure.variance)
        return measure.mean - r, measure.mean + r
    if isinstance(measure, FreePoisson):
        lo, hi = measure.mp_edges()
        e1 = measure.scale * lo + measure.shift
        e2 = measure.scale * hi + measure.shift
        return (e1, e2) if e1 <= e2 else (e2, e1)
    if isinstance(measure, GridDensity):
        return measure.a, measure.b
    raise TypeError(f"not a measure: {measure!r}")


def support_radius(measure: Measure) -> float:
    lo, hi = support(measure)
    return max(abs(lo), abs(hi))


# ---------------------------------------------------------------------------
# quadrature helpers

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(160)


def _gauss(f, lo: float, hi: float) -> float:
    """Gauss-Legendre integral of f over [lo, hi]."""
    if hi <= lo:
        return 0.0
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    return float(half * np.dot(_GL_WEIGHTS, f(mid + half * _GL_NODES)))


def _semicircle_angle_integral(measure: Semicircle, f, lo: float, hi: float) -> float:
    """Integrate f(x) dmu for the semicircle over [lo, hi] ∩ support.

    Substituting x = mean + 2 sqrt(v) sin(theta) turns the sqrt edge factor
    into cos^2(theta), so plain Gauss-Legendre is accurate to machine level.
    """
    m, v = measure.mean, measure.variance
    r = 2.0 * math.sqrt(v)
    lo = max(lo, m - r)
    hi = min(hi, m + r)
    if hi <= lo:
        return 0.0
    t0 = math.asin(min(1.0, max(-1.0, (lo - m) / r)))
    t1 = math.asin(min(1.0, max(-1.0, (hi - m) / r)))

    def g(theta):
        x = m + r * np.sin(theta)
        return f(x) * (2.0 / math.pi) * np.cos(theta) ** 2

    return _gauss(g, t0, t1)


def _free_poisson_angle_integral(measure: FreePoisson, f, lo: float, hi: float) -> float:
    """Integrate f(x) dmu for the affine Marchenko-Pastur law over [lo, hi].

    Same sin^2 substitution on the underlying MP coordinate; the 1/y factor
    of the MP density stays smooth because y(theta)=0 only at the lower edge
    when rate == 1, where it cancels against sin^2(theta).
    """
    a, b = measure.mp_edges()
    s, c = measure.shift, measure.scale
    slo, shi = support(measure)
    lo = max(lo, slo)
    hi = min(hi, shi)
    if hi <= lo:
        return 0.0
    # map x-range back to MP coordinate y = (x - shift)/scale
    y0, y1 = sorted(((lo - s) / c, (hi - s) / c))
    y0 = max(y0, a)
    y1 = min(y1, b)
    w = b - a

    def theta_of(y):
        return math.asin(min(1.0, max(0.0, (y - a) / w)) ** 0.5)

    def g(theta):
        sin2 = np.sin(theta) ** 2
        y = a + w * sin2
        x = c * y + s
        dens = w * w * sin2 * np.cos(theta) ** 2 / (math.pi * y)
        return f(x) * dens

    return _gauss(g, theta_of(y0), theta_of(y1))


def _grid_integral(measure: GridDensity, f, lo: float, hi: float) -> float:
    """Trapezoid integral of f(x) p(x) over [lo, hi] with cell splitting."""
    lo = max(lo, measure.a)
    hi = min(hi, measure.b)
    if hi <= lo:
        return 0.0
    xs = measure.xs
    ps = np.asarray(measure.samples)
    keep = (xs > lo) & (xs < hi)
    grid = np.concatenate(([lo], xs[keep], [hi]))
    dens = np.interp(grid, xs, ps)
    return float(np.trapz(f(grid) * dens, grid))


def _integrate(measure: Measure, f, lo=-math.inf, hi=math.inf) -> float:
    """Integral of f against the measure, restricted to [lo, hi]."""
    if isinstance(measure, Atoms):
        return math.fsum(w * float(f(np.asarray(p)))
                         for p, w in measure.points if lo <= p <= hi)
    if isinstance(measure, Semicircle):
        return _semicircle_angle_integral(measure, f, lo, hi)
    if isinstance(measure, FreePoisson):
        return _free_poisson_angle_integral(measure, f, lo, hi)
    if isinstance(measure, GridDensity):
        return _grid_integral(measure, f, lo, hi)
    raise TypeError(f"not a measure: {measure!r}")


# ---------------------------------------------------------------------------
# moments

def moment(measure: Measure, order: int) -> float:
    """Raw moment m_k = ∫ x^k dmu (exact for atoms and closed-form laws)."""
    if order < 0 or order != int(order):
        raise UnsupportedOrderError("moment order must be a non-negative integer")
    order = int(order)
    if order > MAX_MOMENT_ORDER:
        raise UnsupportedOrderError(f"moment order {order} > {MAX_MOMENT_ORDER}")
    if order == 0:
        return 1.0
    if isinstance(measure, Atoms):
        return math.fsum(w * p ** order for p, w in measure.points)
    if isinstance(measure, Semicircle):
        # binomial expansion around the mean; central moments are Catalan
        m, v = measure.mean, measure.variance
        total = 0.0
        for j in range(0, order + 1, 2):
            central = _CATALAN[j // 2] * v ** (j // 2)
            total += math.comb(order, j) * m ** (order - j) * central
        return total
    if isinstance(measure, FreePoisson):
        return _free_poisson_moments(measure, order)[order]
    if isinstance(measure, GridDensity):
        return _grid_integral(measure, lambda x: x ** order, measure.a, measure.b)
    raise TypeError(f"not a measure: {measure!r}")


def _free_poisson_moments(measure: FreePoisson, upto: int):
    """Moments 0..upto of the affine MP law, from its free cumulants."""
    from .transforms import raw_moments_from_cumulants  # cycle-free at call time

    r, s, c = measure.rate, measure.shift, measure.scale
    # shift enters only kappa_1; dilation scales kappa_k by scale^k
    kappa = [c * r + s] + [r * c ** k for k in range(2, upto + 1)]
    return [float(v) for v in raw_moments_from_cumulants(kappa, upto)]


def absolute_moment(measure: Measure, order: float) -> float:
    """Absolute moment beta_q = ∫ |x|^q dmu; q may be any real >= 0."""
    if order < 0:
        raise UnsupportedOrderError("absolute moment order must be >= 0")
    if order > MAX_MOMENT_ORDER:
        raise UnsupportedOrderError(f"order {order} > {MAX_MOMENT_ORDER}")
    if order == 0:
        return 1.0
    lo, hi = support(measure)
    if lo >= 0 or hi <= 0 or isinstance(measure, Atoms):
        return _integrate(measure, lambda x: np.abs(x) ** order)
    # split at 0 so the |x| kink never sits inside a quadrature panel
    left = _integrate(measure, lambda x: np.abs(x) ** order, lo, 0.0)
    right = _integrate(measure, lambda x: np.abs(x) ** order, 0.0, hi)
    return left + right


def mean(measure: Measure) -> float:
    return moment(measure, 1)


def variance(measure: Measure) -> float:
    m1 = moment(measure, 1)
    return moment(measure, 2) - m1 * m1


def total_mass(measure: Measure) -> float:
    return _integrate(measure, lambda x: np.ones_like(np.asarray(x, dtype=float)))


def is_normalized(measure: Measure, tol: float = 1e-8) -> bool:
    return abs(mean(measure)) <= tol and abs(variance(measure) - 1.0) <= tol


# ---------------------------------------------------------------------------
# affine transforms

def dilate(measure: Measure, t: float) -> Measure:
    """Push-forward under x -> t*x (exact for every variant)."""
    if t == 0:
        raise MeasureError("dilation factor must be nonzero")
    t = float(t)
    if isinstance(measure, Atoms):
        return atoms((t * p, w) for p, w in measure.points)
    if isinstance(measure, Semicircle):
        return Semicircle(t * measure.mean, t * t * measure.variance)
    if isinstance(measure, FreePoisson):
        return FreePoisson(measure.rate, t * measure.shift, t * measure.scale)
    if isinstance(measure, GridDensity):
        samples = np.asarray(measure.samples) / abs(t)
        if t > 0:
            return GridDensity(t * measure.a, t * measure.b, tuple(samples))
        return GridDensity(t * measure.b, t * measure.a, tuple(samples[::-1]))
    raise TypeError(f"not a measure: {measure!r}")


def shift(measure: Measure, a: float) -> Measure:
    """Push-forward under x -> x + a."""
    a = float(a)
    if isinstance(measure, Atoms):
        return atoms((p + a, w) for p, w in measure.points)
    if isinstance(measure, Semicircle):
        return Semicircle(measure.mean + a, measure.variance)
    if isinstance(measure, FreePoisson):
        return FreePoisson(measure.rate, measure.shift + a, measure.scale)
    if isinstance(measure, GridDensity):
        return GridDensity(measure.a + a, measure.b + a, measure.samples)
    raise TypeError(f"not a measure: {measure!r}")


def normalized(measure: Measure) -> Measure:
    """Affine image with zero mean and unit variance."""
    m1 = mean(measure)
    sd = math.sqrt(variance(measure))
    if sd == 0:
        raise MeasureError("cannot normalize a point mass")
    return dilate(shift(measure, -m1), 1.0 / sd)


# ---------------------------------------------------------------------------
# tail functionals

def tail_moment(measure: Measure, q: float, t: float) -> float:
    """rho_q(mu, t) = ∫_{|x|>t} |x|^q dmu."""
    if q < 0:
        raise UnsupportedOrderError("tail moment order must be >= 0")
    if t <= 0:
        raise MeasureError("tail threshold must be positive")
    if isinstance(measure, Atoms):
        return math.fsum(w * abs(p) ** q for p, w in measure.points if abs(p) > t)
    lo, hi = support(measure)
    total = 0.0
    if lo < -t:
        total += _integrate(measure, lambda x: np.abs(x) ** q, lo, -t)
    if hi > t:
        total += _integrate(measure, lambda x: np.abs(x) ** q, t, hi)
    return total


def lyapunov_fraction(measure: Measure, q: float, n: int) -> float:
    """L_qn = beta_q / n^((q-2)/2)."""
    if q < 2:
        raise UnsupportedOrderError("lyapunov fraction needs q >= 2")
    if n < 1:
        raise MeasureError("n must be a positive integer")
    return absolute_moment(measure, q) / n ** ((q - 2.0) / 2.0)


_ETA_EPS_LO = 1e-6
_ETA_EPS_HI = 10.0 ** -0.5
_ETA_GRID = 1024


def eta_qs(measure: Measure, q: float, s: int, n: int) -> float:
    """inf over eps in (0, 10^(-1/2)] of
    eps^(s+2-q_s) + rho_{q_s}(mu, eps*sqrt(n)) / beta_{q_s} * eps^(-q_s)
    with q_s = min(q, s+2).  Grid scan plus golden-section refinement.
    """
    if s not in (1, 2, 3):
        raise MeasureError("s must be 1, 2 or 3")
    if q < s + 1:
        raise UnsupportedOrderError(f"eta_qs needs q >= s+1 = {s + 1}")
    if n < 1:
        raise MeasureError("n must be a positive integer")
    qs = min(q, s + 2.0)
    beta = absolute_moment(measure, qs)
    if beta <= 0:
        raise MeasureError("eta_qs undefined: beta_{q_s} vanishes")
    rn = math.sqrt(n)

    def g(eps):
        return eps ** (s + 2 - qs) + tail_moment(measure, qs, eps * rn) / beta * eps ** (-qs)

    grid = np.geomspace(_ETA_EPS_LO, _ETA_EPS_HI, _ETA_GRID)
    vals = np.array([g(e) for e in grid])
    k = int(np.argmin(vals))
    best = float(vals[k])
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, len(grid) - 1)]
    best = min(best, _golden_min(g, lo, hi))
    return best


def _golden_min(g, lo: float, hi: float, tol: float = 1e-9) -> float:
    """Golden-section minimum of g over [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = g(c), g(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = g(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = g(d)
    return min(fc, fd)


@dataclass(frozen=True)
class TailFunctionals:
    """Bundle of the tail quantities used by the expansion remainder bounds."""

    q: float
    L_qn: float
    rho_q_t: float
    eta_qs: float
    q_s: tuple = field(default=(3.0, 4.0, 5.0))


def tail_functionals(measure: Measure, q: float, n: int, t: float,
                     s: int = 3) -> TailFunctionals:
    if q < 2:
        raise UnsupportedOrderError("q must be >= 2")
    qs = tuple(min(q, k) for k in (3.0, 4.0, 5.0))
    return TailFunctionals(
        q=q,
        L_qn=lyapunov_fraction(measure, q, n),
        rho_q_t=tail_moment(measure, q, t),
        eta_qs=eta_qs(measure, q, s, n),
        q_s=qs,
    )


# ---------------------------------------------------------------------------
# JSON schema

def to_json_dict(measure: Measure) -> dict:
    if isinstance(measure, Atoms):
        return {"type": "atoms", "points": [[p, w] for p, w in measure.points]}
    if isinstance(measure, Semicircle):
        return {"type": "semicircle", "mean": measure.mean,
                "variance": measure.variance}
    if isinstance(measure, FreePoisson):
        doc = {"type": "free_poisson", "rate": measure.rate,
               "shift": measure.shift}
        if measure.scale != 1.0:
            doc["scale"] = measure.scale
        return doc
    if isinstance(measure, GridDensity):
        return {"type": "grid", "a": measure.a, "b": measure.b,
                "samples": list(measure.samples)}
    raise TypeError(f"not a measure: {measure!r}")


def from_json_dict(doc: dict) -> Measure:
    try:
        kind = doc["type"]
        if kind == "atoms":
            return Atoms(tuple((float(p), float(w)) for p, w in doc["points"]))
        if kind == "semicircle":
            return Semicircle(float(doc["mean"]), float(doc["variance"]))
        if kind == "free_poisson":
            return FreePoisson(float(doc["rate"]), float(doc["shift"]),
                               float(doc.get("scale", 1.0)))
        if kind == "grid":
            return GridDensity(float(doc["a"]), float(doc["b"]),
                               tuple(float(v) for v in doc["samples"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise MeasureError(f"bad measure document: {exc}") from exc
    raise MeasureError(f"unknown measure type {doc.get('type')!r}")


def to_json(measure: Measure) -> str:
    return json.dumps(to_json_dict(measure))


def from_json(text: str) -> Measure:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MeasureError(f"measure JSON does not parse: {exc}") from exc
    if not isinstance(doc, dict):
        raise MeasureError("measure JSON must be an object")
    return from_json_dict(doc)

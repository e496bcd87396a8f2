"""Cauchy transform, reciprocal transform, free cumulants, Stieltjes
inversion, and the analytic-window geometry.

Branch convention.  For an interval [a, b] the square root
``sigma(w) = sqrt((w-a)(w-b))`` is taken with ``sigma(w) ~ w`` at infinity
and the value continued *through* (a, b) from the upper half-plane.  With
this convention the semicircle transform ``(z - sigma(z))/(2t)`` is a single
analytic function on the upper half-plane together with a strip around the
open support interval, which is exactly where the expansions live.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import (AccuracyError, MeasureError, PoleError,
                     UnsupportedOrderError, WindowError)
from .measures import (Atoms, FreePoisson, GridDensity, Measure, Semicircle,
                       absolute_moment, moment, support)

MAX_CUMULANT_ORDER = 9


# ---------------------------------------------------------------------------
# branch-aware square root

def edge_sqrt(w: complex, a: float, b: float) -> complex:
    """sqrt((w-a)(w-b)), asymptotic to w, continued through (a, b) from above."""
    w = complex(w)
    if w.imag == 0.0 and (w.real <= a or w.real >= b):
        d = math.sqrt((w.real - a) * (w.real - b))
        return complex(d if w.real >= b else -d)
    return 1j * cmath.sqrt((a - w) * (w - b))


def _edge_sqrt_d1(w: complex, a: float, b: float) -> complex:
    s = edge_sqrt(w, a, b)
    return (w - 0.5 * (a + b)) / s


def _edge_sqrt_d2(w: complex, a: float, b: float) -> complex:
    s = edge_sqrt(w, a, b)
    d1 = (w - 0.5 * (a + b)) / s
    return (1.0 - d1 * d1) / s


# ---------------------------------------------------------------------------
# Cauchy transforms per variant

def semicircle_cauchy(z: complex, mean: float = 0.0, var: float = 1.0) -> complex:
    """G of the semicircle law; analytic on C+ plus a strip around the support."""
    u = complex(z) - mean
    r = 2.0 * math.sqrt(var)
    return (u - edge_sqrt(u, -r, r)) / (2.0 * var)


def _mp_cauchy(w: complex, rate: float) -> complex:
    a = (1.0 - math.sqrt(rate)) ** 2
    b = (1.0 + math.sqrt(rate)) ** 2
    w = complex(w)
    if abs(w) < 1e-12:
        if rate == 1.0:
            raise PoleError("Marchenko-Pastur transform is singular at 0 for rate 1")
        return complex(-1.0 / (rate - 1.0))
    return (w + 1.0 - rate - edge_sqrt(w, a, b)) / (2.0 * w)


def _mp_cauchy_d1(w: complex, rate: float) -> complex:
    a = (1.0 - math.sqrt(rate)) ** 2
    b = (1.0 + math.sqrt(rate)) ** 2
    s = edge_sqrt(w, a, b)
    sp = (w - 0.5 * (a + b)) / s
    num = -sp * w - 1.0 + rate + s
    return num / (2.0 * w * w)


def _mp_cauchy_d2(w: complex, rate: float) -> complex:
    a = (1.0 - math.sqrt(rate)) ** 2
    b = (1.0 + math.sqrt(rate)) ** 2
    s = edge_sqrt(w, a, b)
    sp = (w - 0.5 * (a + b)) / s
    spp = (1.0 - sp * sp) / s
    num = -sp * w - 1.0 + rate + s
    return (-spp * w * w - 2.0 * num) / (2.0 * w ** 3)


def _atoms_cauchy(measure: Atoms, z: complex, order: int = 0) -> complex:
    z = complex(z)
    total = 0.0 + 0.0j
    for p, w in measure.points:
        d = z - p
        if abs(d) < 1e-14 * max(1.0, abs(p)):
            raise PoleError(f"evaluation at atom {p}")
        if order == 0:
            total += w / d
        elif order == 1:
            total += -w / (d * d)
        else:
            total += 2.0 * w / (d * d * d)
    return total


def _grid_cauchy(measure: GridDensity, z: complex, order: int = 0) -> complex:
    z = complex(z)
    floor = 4.0 * measure.spacing
    if z.imag < floor:
        raise AccuracyError(
            f"grid transform needs Im z >= {floor:g} (got {z.imag:g})")
    xs = measure.xs
    ps = np.asarray(measure.samples)
    if order == 0:
        vals = ps / (z - xs)
    elif order == 1:
        vals = -ps / (z - xs) ** 2
    else:
        vals = 2.0 * ps / (z - xs) ** 3
    return complex(np.trapz(vals, xs))


def cauchy(measure: Measure, z: complex) -> complex:
    """Cauchy transform G(z) = ∫ dmu(x)/(z - x).

    Closed-form variants (semicircle, free Poisson) are evaluated through
    their analytic continuation, valid on the upper half-plane and on a
    strip around the open support interval; atoms are an exact rational
    sum; grid densities use quadrature and require Im z above the grid
    validity floor.
    """
    if isinstance(measure, Atoms):
        return _atoms_cauchy(measure, z)
    if isinstance(measure, Semicircle):
        return semicircle_cauchy(z, measure.mean, measure.variance)
    if isinstance(measure, FreePoisson):
        c, s = measure.scale, measure.shift
        w = (complex(z) - s) / c
        if c > 0:
            return _mp_cauchy(w, measure.rate) / c
        return (_mp_cauchy(w.conjugate(), measure.rate)).conjugate() / c
    if isinstance(measure, GridDensity):
        return _grid_cauchy(measure, z)
    raise TypeError(f"not a measure: {measure!r}")


def cauchy_derivative(measure: Measure, z: complex, order: int = 1) -> complex:
    """First or second derivative of the Cauchy transform."""
    if order not in (1, 2):
        raise UnsupportedOrderError("only derivative orders 1 and 2 are supported")
    if isinstance(measure, Atoms):
        return _atoms_cauchy(measure, z, order)
    if isinstance(measure, Semicircle):
        u = complex(z) - measure.mean
        r = 2.0 * math.sqrt(measure.variance)
        if order == 1:
            return (1.0 - _edge_sqrt_d1(u, -r, r)) / (2.0 * measure.variance)
        return -_edge_sqrt_d2(u, -r, r) / (2.0 * measure.variance)
    if isinstance(measure, FreePoisson):
        c, s = measure.scale, measure.shift
        w = (complex(z) - s) / c
        fn = _mp_cauchy_d1 if order == 1 else _mp_cauchy_d2
        if c > 0:
            return fn(w, measure.rate) / c ** (order + 1)
        return fn(w.conjugate(), measure.rate).conjugate() / c ** (order + 1)
    if isinstance(measure, GridDensity):
        return _grid_cauchy(measure, z, order)
    raise TypeError(f"not a measure: {measure!r}")


def reciprocal_transform(measure: Measure, z: complex) -> complex:
    """F(z) = 1/G(z)."""
    g = cauchy(measure, z)
    if g == 0:
        raise PoleError("Cauchy transform vanishes; reciprocal undefined")
    return 1.0 / g


@dataclass(frozen=True)
class CauchyValue:
    z: complex
    g: complex


def cauchy_value(measure: Measure, z: complex) -> CauchyValue:
    return CauchyValue(complex(z), cauchy(measure, z))


# ---------------------------------------------------------------------------
# densities / distribution functions

def semicircle_density(x, mean: float = 0.0, var: float = 1.0):
    u = np.asarray(x, dtype=float) - mean
    vals = np.sqrt(np.maximum(4.0 * var - u * u, 0.0)) / (2.0 * math.pi * var)
    return vals if vals.shape else float(vals)


def semicircle_cdf(x, mean: float = 0.0, var: float = 1.0):
    r = 2.0 * math.sqrt(var)
    u = np.clip(np.asarray(x, dtype=float) - mean, -r, r)
    vals = (0.5 + u * np.sqrt(r * r - u * u) / (4.0 * math.pi * var)
            + np.arcsin(u / r) / math.pi)
    return vals if vals.shape else float(vals)


def free_poisson_density(measure: FreePoisson, x):
    a, b = measure.mp_edges()
    c, s = measure.scale, measure.shift
    y = (np.asarray(x, dtype=float) - s) / c
    inside = (y > a) & (y < b)
    y_safe = np.where(inside, y, 0.5 * (a + b))
    vals = np.where(
        inside,
        np.sqrt(np.maximum((b - y_safe) * (y_safe - a), 0.0))
        / (2.0 * math.pi * y_safe) / abs(c),
        0.0,
    )
    return vals if vals.shape else float(vals)


def _mp_cdf(y, rate: float):
    """CDF of the Marchenko-Pastur law, via the smooth angular substitution."""
    a = (1.0 - math.sqrt(rate)) ** 2
    b = (1.0 + math.sqrt(rate)) ** 2
    w = b - a
    y = np.asarray(y, dtype=float)
    frac = np.clip((y - a) / w, 0.0, 1.0)
    theta = np.arcsin(np.sqrt(frac))
    nodes, weights = np.polynomial.legendre.leggauss(200)
    half = 0.5 * theta
    # (npts, nodes) panel of the integrand w^2 sin^2 cos^2 / (pi * y(theta))
    t = half[..., None] * (nodes + 1.0)
    sin2 = np.sin(t) ** 2
    yy = a + w * sin2
    integ = w * w * sin2 * np.cos(t) ** 2 / (math.pi * np.maximum(yy, 1e-300))
    return (integ @ weights) * half


def free_poisson_cdf(measure: FreePoisson, x):
    c, s = measure.scale, measure.shift
    y = (np.asarray(x, dtype=float) - s) / c
    vals = _mp_cdf(y, measure.rate)
    if c < 0:
        vals = 1.0 - vals
    return vals if vals.shape else float(vals)


def density(measure: Measure, x):
    """Density of the measure at x (zero outside the support)."""
    if isinstance(measure, Semicircle):
        return semicircle_density(x, measure.mean, measure.variance)
    if isinstance(measure, FreePoisson):
        return free_poisson_density(measure, x)
    if isinstance(measure, GridDensity):
        vals = np.interp(np.asarray(x, dtype=float), measure.xs,
                         np.asarray(measure.samples), left=0.0, right=0.0)
        return vals if vals.shape else float(vals)
    if isinstance(measure, Atoms):
        raise MeasureError("atomic measures have no density")
    raise TypeError(f"not a measure: {measure!r}")


def cdf(measure: Measure, x):
    """Distribution function mu((-inf, x]); non-decreasing, 1 at the right edge."""
    if isinstance(measure, Atoms):
        xs = np.asarray(x, dtype=float)
        pos = np.array([p for p, _ in measure.points])
        cum = np.concatenate(([0.0], np.cumsum([w for _, w in measure.points])))
        vals = cum[np.searchsorted(pos, xs, side="right")]
        return vals if vals.shape else float(vals)
    if isinstance(measure, Semicircle):
        return semicircle_cdf(x, measure.mean, measure.variance)
    if isinstance(measure, FreePoisson):
        return free_poisson_cdf(measure, x)
    if isinstance(measure, GridDensity):
        xs = measure.xs
        ps = np.asarray(measure.samples)
        cum = np.concatenate(([0.0], np.cumsum(
            0.5 * (ps[1:] + ps[:-1]) * measure.spacing)))
        cum = cum / cum[-1]
        vals = np.interp(np.asarray(x, dtype=float), xs, cum, left=0.0, right=1.0)
        return vals if vals.shape else float(vals)
    raise TypeError(f"not a measure: {measure!r}")


def stieltjes_density(source, x: float, y0: float = 1e-3) -> float:
    """Recover the density at x from the Cauchy transform.

    Closed-form variants evaluate the continuation at y = 0 directly.  Grid
    measures and transform providers use first-order Richardson
    extrapolation 2 v(y0/2) - v(y0) of v(y) = -Im G(x+iy)/pi toward y -> 0.
    Tiny negatives (>= -1e-8) are clamped to zero.
    """
    import warnings

    if isinstance(source, Atoms):
        nearest = min(abs(x - p) for p, _ in source.points)
        if nearest <= y0:
            warnings.warn(f"atom within {y0:g} of x = {x}; density is singular",
                          stacklevel=2)
        return 0.0
    if isinstance(source, (Semicircle, FreePoisson)):
        val = -cauchy(source, complex(x, 0.0)).imag / math.pi
    elif isinstance(source, GridDensity):
        floor = 4.0 * source.spacing
        if 0.5 * y0 < floor:
            raise AccuracyError(
                f"Richardson base y0 = {y0:g} below grid validity floor "
                f"{2 * floor:g}")
        v1 = -cauchy(source, complex(x, y0)).imag / math.pi
        v2 = -cauchy(source, complex(x, 0.5 * y0)).imag / math.pi
        val = 2.0 * v2 - v1
    else:  # transform provider with a .g(z) method
        v1 = -source.g(complex(x, y0)).imag / math.pi
        v2 = -source.g(complex(x, 0.5 * y0)).imag / math.pi
        val = 2.0 * v2 - v1
    if -1e-8 <= val < 0.0:
        val = 0.0
    return val


# ---------------------------------------------------------------------------
# moment <-> cumulant conversion

def _seed_one(values):
    one = 1
    for v in values:
        one = v * 0 + 1
        break
    return one


def raw_moments_from_cumulants(kappa, upto: int):
    """Raw moments m_0..m_upto from free cumulants (kappa_1, kappa_2, ...).

    Uses the free moment-cumulant recursion
    m_n = sum_k kappa_k * sum_{i_1+...+i_k = n-k} m_{i_1} ... m_{i_k};
    exact for Fraction inputs.
    """
    kappa = list(kappa)
    if len(kappa) < upto:
        raise UnsupportedOrderError("need cumulants up to the requested order")
    one = _seed_one(kappa)
    m = [one]
    for n in range(1, upto + 1):
        conv = [one] + [one * 0] * n  # k-fold self-convolution, k = 0
        tot = one * 0
        for k in range(1, n + 1):
            nxt = [one * 0] * (n - k + 1)
            for j in range(n - k + 1):
                acc = one * 0
                for i in range(j + 1):
                    acc += conv[i] * m[j - i]
                nxt[j] = acc
            conv = nxt
            tot += kappa[k - 1] * conv[n - k]
        m.append(tot)
    return m


def free_cumulants_from_raw_moments(m):
    """Free cumulants (kappa_1..kappa_K) from raw moments (m_0 = 1, ..., m_K)."""
    m = list(m)
    if not m or m[0] != 1:
        raise MeasureError("moment sequence must start with m_0 = 1")
    upto = len(m) - 1
    one = _seed_one(m[1:]) if upto else 1
    kappa = []
    for n in range(1, upto + 1):
        conv = [one] + [one * 0] * n
        acc_lower = one * 0
        for k in range(1, n):
            nxt = [one * 0] * (n - k + 1)
            for j in range(n - k + 1):
                s = one * 0
                for i in range(j + 1):
                    s += conv[i] * m[j - i]
                nxt[j] = s
            conv = nxt
            acc_lower += kappa[k - 1] * conv[n - k]
        kappa.append(m[n] - acc_lower)
    return kappa


@dataclass(frozen=True)
class MomentVector:
    """Raw and absolute moments m_0..m_K, beta_0..beta_K."""

    moments: tuple
    absolute_moments: tuple

    def __post_init__(self):
        if len(self.moments) != len(self.absolute_moments):
            raise MeasureError("moment and absolute-moment lengths differ")
        if not self.moments or self.moments[0] != 1:
            raise MeasureError("m_0 must equal 1")
        for mk, bk in zip(self.moments, self.absolute_moments):
            if bk < 0 or bk < abs(mk) - 1e-9 * max(1.0, abs(mk)):
                raise MeasureError("absolute moments must dominate |m_k|")

    @property
    def order(self) -> int:
        return len(self.moments) - 1


def moment_vector(measure: Measure, upto: int) -> MomentVector:
    ms = tuple(moment(measure, k) for k in range(upto + 1))
    bs = tuple(absolute_moment(measure, k) for k in range(upto + 1))
    return MomentVector(ms, bs)


@dataclass(frozen=True)
class FreeCumulants:
    """Free cumulants kappa_1..kappa_K with the support radius they came from."""

    kappa: tuple
    support_radius: float

    def __post_init__(self):
        if self.support_radius <= 0:
            raise MeasureError("support radius must be positive")

    def __getitem__(self, order: int):
        """kappa_order with 1-based indexing; zero beyond the stored range."""
        if order < 1:
            raise UnsupportedOrderError("cumulant orders start at 1")
        if order > len(self.kappa):
            return 0.0
        return self.kappa[order - 1]

    @property
    def order(self) -> int:
        return len(self.kappa)

    def bound_satisfied(self, slack: float = 1e-9) -> bool:
        """|kappa_l| <= 2L/(l-1) * (4L)^(l-1) for l >= 2."""
        L = self.support_radius
        for idx, k in enumerate(self.kappa[1:], start=2):
            if abs(k) > 2.0 * L / (idx - 1) * (4.0 * L) ** (idx - 1) + slack:
                return False
        return True


def cumulants_from_moments(moments: MomentVector, upto: int,
                           support_radius: float = None) -> FreeCumulants:
    """Free cumulants from a moment vector (orders up to 9)."""
    if upto > MAX_CUMULANT_ORDER:
        raise UnsupportedOrderError(
            f"cumulant order {upto} > {MAX_CUMULANT_ORDER}")
    if moments.order < upto:
        raise UnsupportedOrderError("moment vector shorter than requested order")
    kappa = free_cumulants_from_raw_moments(moments.moments[:upto + 1])
    if support_radius is None:
        # beta_k^(1/k) increases to the true support radius; use the best
        # available lower estimate
        support_radius = max(
            b ** (1.0 / k) if k else 1.0
            for k, b in enumerate(moments.absolute_moments)
            if k > 0 and b > 0) if upto >= 1 else 1.0
    return FreeCumulants(tuple(kappa), float(support_radius))


def moments_from_cumulants(cumulants: FreeCumulants, upto: int) -> MomentVector:
    """Raw-moment vector reconstructed from cumulants (exact inverse)."""
    if upto > len(cumulants.kappa):
        raise UnsupportedOrderError("cumulant list shorter than requested order")
    ms = raw_moments_from_cumulants(cumulants.kappa, upto)
    # absolute moments are not recoverable from cumulants; report the best
    # generic lower bound |m_k|
    bs = tuple(abs(v) for v in ms)
    return MomentVector(tuple(ms), bs)


def r_series(measure: Measure, upto: int):
    """Taylor coefficients (kappa_1, ..., kappa_K) of the R-transform."""
    if upto > MAX_CUMULANT_ORDER:
        raise UnsupportedOrderError(
            f"cumulant order {upto} > {MAX_CUMULANT_ORDER}")
    if isinstance(measure, Semicircle):
        out = [measure.mean, measure.variance] + [0.0] * (upto - 2)
        return out[:upto]
    if isinstance(measure, FreePoisson):
        r, s, c = measure.rate, measure.shift, measure.scale
        out = [c * r + s] + [r * c ** k for k in range(2, upto + 1)]
        return out[:upto]
    ms = [moment(measure, k) for k in range(upto + 1)]
    return free_cumulants_from_raw_moments(ms)


def free_cumulants(measure: Measure, upto: int) -> FreeCumulants:
    """Free cumulants of a measure with its true support radius attached."""
    from .measures import support_radius
    return FreeCumulants(tuple(float(v) for v in r_series(measure, upto)),
                         support_radius(measure))


# ---------------------------------------------------------------------------
# evaluation window

@dataclass(frozen=True)
class EvalWindow:
    """Rectangles K ⊂ K_delta around (-2, 2) and the image sector parameters.

    K       : x in [-2+2d, 2-2d], |y| < d*sqrt(d)
    K_delta : x in [-2+d, 2-d],  |y| <= 2d*sqrt(d)
    theta   : half-angle with 2 sin(theta) = sqrt(d/4 * (1 - d/4))
    The standard semicircle transform maps K_delta into the sector
    {arg in (-pi+theta, -theta), |w| < 1.4} of the lower half-plane.
    """

    delta: float
    theta: float
    sector_radius: float = 1.4

    @property
    def k_x(self):
        d = self.delta
        return (-2.0 + 2.0 * d, 2.0 - 2.0 * d)

    @property
    def k_y(self) -> float:
        return self.delta * math.sqrt(self.delta)

    @property
    def k_delta_x(self):
        d = self.delta
        return (-2.0 + d, 2.0 - d)

    @property
    def k_delta_y(self) -> float:
        return 2.0 * self.delta * math.sqrt(self.delta)

    def contains(self, z: complex, strict: bool = True) -> bool:
        z = complex(z)
        lo, hi = self.k_x
        if strict:
            return lo <= z.real <= hi and abs(z.imag) < self.k_y
        return lo <= z.real <= hi and abs(z.imag) <= self.k_y

    def require(self, z: complex):
        if not self.contains(z):
            raise WindowError(f"z = {z} outside the window K(delta={self.delta})")

    def grid(self, nx: int = 41, ny: int = 9):
        """Rectangular sample of K (including the real segment)."""
        lo, hi = self.k_x
        xs = np.linspace(lo, hi, nx)
        ys = np.linspace(-self.k_y, self.k_y, ny) * (1.0 - 1e-9)
        return np.array([complex(x, y) for y in ys for x in xs])


def make_window(delta: float) -> EvalWindow:
    """Validated evaluation window for a given delta in (0, 1/10)."""
    if not 0.0 < delta < 0.1:
        raise WindowError(f"delta must lie in (0, 1/10); got {delta}")
    theta = math.asin(0.5 * math.sqrt(delta / 4.0 * (1.0 - delta / 4.0)))
    return EvalWindow(delta=float(delta), theta=theta)


def check_window_mapping(window: EvalWindow, samples: int = 10_000) -> bool:
    """Sample the boundary of K_delta and verify the semicircle transform
    lands in the sector {|w| < 1.4, arg in (-pi+theta, -theta)} at every
    sample point."""
    lo, hi = window.k_delta_x
    h = window.k_delta_y
    width = hi - lo
    perimeter = 2.0 * width + 4.0 * h
    n_horiz = max(2, int(samples * width / perimeter))
    n_vert = max(2, (samples - 2 * n_horiz) // 2)
    pts = []
    for x in np.linspace(lo, hi, n_horiz):
        pts.append(complex(x, h))
        pts.append(complex(x, -h))
    for y in np.linspace(-h, h, n_vert):
        pts.append(complex(lo, y))
        pts.append(complex(hi, y))
    theta = window.theta
    for z in pts:
        g = semicircle_cauchy(z)
        if abs(g) >= window.sector_radius:
            return False
        arg = cmath.phase(g)
        if not (-math.pi + theta < arg < -theta):
            return False
    return True

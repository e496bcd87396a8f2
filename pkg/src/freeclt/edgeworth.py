"""Closed-form Edgeworth-type correction series for the free CLT.

Three kinds of series share the same order structure (powers n^0, n^-1/2,
n^-1, n^-3/2): the Cauchy-transform series in terms of w = G_omega(z), the
density series on (-2, 2), and the distribution series written through
Chebyshev polynomials of the second kind.  A shifted two-term variant
(evaluation at x + kappa_3/sqrt(n)) is provided as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .errors import MeasureError, PoleError, WindowError
from .measures import Measure, eta_qs, lyapunov_fraction
from .transforms import (EvalWindow, FreeCumulants, semicircle_cauchy,
                         semicircle_cdf, semicircle_density)


def chebyshev_u(n: int, x: float) -> float:
    """Chebyshev polynomial of the second kind, by the three-term recurrence
    U_0 = 1, U_1 = 2x, U_{n+1} = 2x U_n - U_{n-1}."""
    if n < 0:
        raise MeasureError("Chebyshev degree must be non-negative")
    if n == 0:
        return 1.0
    prev, cur = 1.0, 2.0 * x
    for _ in range(n - 1):
        prev, cur = cur, 2.0 * x * cur - prev
    return cur


def coefficient_B(k: int, w: complex, kappa: FreeCumulants) -> complex:
    """Correction coefficient B_k evaluated at w (normally w = G_omega(z)).

    B_1(w) = k3 w^3/(1/w - w); B_2 and B_3 carry the fourth and fifth
    cumulants.  Requires 1 - w^2 bounded away from zero.
    """
    w = complex(w)
    one_m = 1.0 - w * w
    if abs(one_m) < 1e-12:
        raise PoleError("B_k singular: 1 - w^2 vanishes")
    k3, k4, k5 = kappa[3], kappa[4], kappa[5]
    if k == 1:
        return k3 * w ** 4 / one_m
    if k == 2:
        return ((k4 - k3 ** 2) * w ** 5 / one_m
                + k3 ** 2 * (w ** 7 / one_m ** 2 + w ** 5 / one_m ** 3))
    if k == 3:
        return (k5 * w ** 6 / one_m
                - k3 * k4 * w ** 8 * (5.0 * w * w - 7.0) / one_m ** 3
                + k3 ** 3 * w ** 10
                * (5.0 * w ** 4 - 15.0 * w * w + 12.0) / one_m ** 5)
    raise MeasureError("coefficient_B supports k in {1, 2, 3}")


@dataclass(frozen=True)
class ExpansionSeries:
    """Per-order terms of a truncated correction series.

    ``orders[r]`` is the n-independent coefficient of n^(-r/2); ``total``
    is the truncated sum.  Density totals may be clamped at zero, with the
    clamp recorded.
    """

    kind: str
    orders: tuple
    total: complex
    n: int
    x_or_z: complex
    kappa: FreeCumulants
    clamped: bool = False

    def partial(self, upto: int) -> complex:
        return sum(self.orders[r] * self.n ** (-r / 2.0)
                   for r in range(upto + 1))


def _series(kind, terms, order, n, point, kappa, clamp=False):
    orders = tuple(terms[r] if r <= order else 0.0 * terms[0]
                   for r in range(4))
    total = sum(orders[r] * n ** (-r / 2.0) for r in range(4))
    clamped = False
    if clamp and total < 0.0:
        total, clamped = 0.0, True
    return ExpansionSeries(kind=kind, orders=orders, total=total, n=n,
                           x_or_z=point, kappa=kappa, clamped=clamped)


def expand_cauchy(z: complex, kappa: FreeCumulants, n: int, order: int,
                  window: EvalWindow) -> ExpansionSeries:
    """Cauchy-transform series at z in the window K."""
    _check_order(order)
    window.require(z)
    g = semicircle_cauchy(z)
    terms = [g] + [coefficient_B(k, g, kappa) for k in (1, 2, 3)]
    return _series("cauchy", terms, order, n, complex(z), kappa)


def _density_terms(x: float, kappa: FreeCumulants):
    k3, k4, k5 = kappa[3], kappa[4], kappa[5]
    p = semicircle_density(x)
    q = 4.0 - x * x
    x2 = x * x
    t1 = k3 * (x2 - 3.0) * x * p / q
    t2 = -(k4 * (x2 ** 3 - 8.0 * x2 ** 2 + 18.0 * x2 - 8.0)
           - k3 ** 2 * (2.0 * x2 ** 3 - 15.0 * x2 ** 2 + 30.0 * x2 - 10.0)
           ) * p / q ** 2
    t3 = (k5 * (x2 ** 2 - 5.0 * x2 + 5.0) * x / q
          + k3 * k4 * (5.0 * x2 ** 3 - 42.0 * x2 ** 2 + 105.0 * x2 - 70.0) * x / q ** 2
          + k3 ** 3 * (5.0 * x2 ** 4 - 60.0 * x2 ** 3 + 252.0 * x2 ** 2
                       - 420.0 * x2 + 210.0) * x / q ** 3) * p
    return [p, t1, t2, t3]


def expand_density(x: float, kappa: FreeCumulants, n: int, order: int,
                   window: EvalWindow) -> ExpansionSeries:
    """Density series at a real x in [-2+2d, 2-2d]."""
    _check_order(order)
    x = float(x)
    lo, hi = window.k_x
    if not lo <= x <= hi:
        raise WindowError(f"x = {x} outside [{lo}, {hi}]")
    terms = _density_terms(x, kappa)
    return _series("density", terms, order, n, x, kappa, clamp=True)


def _distribution_brackets(x: float, kappa: FreeCumulants):
    """The three bracket functions whose increment over [a, b] gives the
    distribution corrections (already including the sign conventions)."""
    k3, k4, k5 = kappa[3], kappa[4], kappa[5]
    p = semicircle_density(x)
    q = 4.0 - x * x
    u = lambda m: chebyshev_u(m, 0.5 * x)
    b1 = -k3 * u(2) * p / 3.0
    b2 = (-k4 * u(3) + 2.0 * k3 ** 2 * (u(3) + u(1) - u(1) / q)) * p / 4.0
    b3 = (k5 / 5.0 * u(4)
          - k3 * k4 * (u(6) - u(4)) / q
          - k3 ** 3 / 3.0 * (3.0 * u(8) - 7.0 * u(6) + 4.0 * u(4)) / q ** 2) * p
    return b1, b2, b3


def expand_distribution(a: float, b: float, kappa: FreeCumulants, n: int,
                        order: int, window: EvalWindow) -> ExpansionSeries:
    """Series for mu_n(a, b) with [a, b] inside the window interval."""
    _check_order(order)
    a, b = float(a), float(b)
    lo, hi = window.k_x
    if not (lo <= a <= hi and lo <= b <= hi):
        raise WindowError(f"[{a}, {b}] not contained in [{lo}, {hi}]")
    base = semicircle_cdf(b) - semicircle_cdf(a)
    br_a = _distribution_brackets(a, kappa)
    br_b = _distribution_brackets(b, kappa)
    terms = [base] + [hb - ha for ha, hb in zip(br_a, br_b)]
    return _series("distribution", terms, order, n, complex(a, 0), kappa)


def _check_order(order: int):
    if order not in (0, 1, 2, 3):
        raise MeasureError("expansion order must be 0, 1, 2 or 3")


# ---------------------------------------------------------------------------
# shifted (x + kappa_3/sqrt(n)) variants

@dataclass(frozen=True)
class CGCoefficients:
    """Shift/scale coefficients of the shifted expansions."""

    a_n: float
    b_n: float
    d_n: float
    E_n: float


def cg_coefficients(kappa: FreeCumulants, n: int) -> CGCoefficients:
    k3, k4 = kappa[3], kappa[4]
    a_n = k3 / math.sqrt(n)
    b_n = (k4 - k3 ** 2 + 1.0) / n
    d_n = (k4 - k3 ** 2 + 2.0) / n
    if d_n >= 1.0:
        raise MeasureError(f"d_n = {d_n} >= 1: scale factor undefined")
    e_n = (1.0 - b_n) / math.sqrt(1.0 - d_n)
    return CGCoefficients(a_n=a_n, b_n=b_n, d_n=d_n, E_n=e_n)


def cg_expand_distribution(x: float, kappa: FreeCumulants, n: int,
                           measure: Optional[Measure] = None,
                           q: float = 5.0):
    """Value of the shifted distribution expansion for mu_n(-inf, x + a_n)
    together with its remainder bound (absolute constant taken as 1).

    The bound needs tail functionals of the base measure; when ``measure``
    is omitted the bound is returned as ``None``.
    """
    co = cg_coefficients(kappa, n)
    a_n = co.a_n
    p = semicircle_density(x)
    u = lambda m: chebyshev_u(m, 0.5 * x)
    bracket = (0.5 * a_n ** 2 * u(1)
               + a_n / 3.0 * (3.0 - u(2))
               - 0.25 * (co.b_n - a_n ** 2 - 1.0 / n) * u(3))
    value = semicircle_cdf(x) + bracket * p
    bound = None
    if measure is not None:
        if q >= 5.0:
            bound = lyapunov_fraction(measure, 5.0, n)
        elif q >= 4.0:
            bound = (eta_qs(measure, q, 3, n) * lyapunov_fraction(measure, q, n)
                     + lyapunov_fraction(measure, 4.0, n) ** 1.5)
        else:
            raise MeasureError("remainder bound needs q >= 4")
    return value, bound


def cg_expand_density(x: float, kappa: FreeCumulants, n: int,
                      h: Optional[float] = None) -> float:
    """Main term of the shifted density expansion: approximates
    p_{mu_n}(x + a_n) for x in [-2/E_n + h, 2/E_n - h]."""
    co = cg_coefficients(kappa, n)
    if h is None:
        h = n ** -1.5
    if h <= 0:
        raise MeasureError("edge margin h must be positive")
    lim = 2.0 / co.E_n
    if not (-lim + h <= x <= lim - h):
        raise WindowError(f"x = {x} outside [{-lim + h}, {lim - h}]")
    a_n, b_n, d_n = co.a_n, co.b_n, co.d_n
    factor = (1.0 + 0.5 * d_n - a_n ** 2 - 1.0 / n - a_n * x
              - (b_n - a_n ** 2 - 1.0 / n) * x * x)
    return factor * semicircle_density(co.E_n * x)


def cg_density_remainder_envelope(x: float, kappa: FreeCumulants, n: int) -> float:
    """Envelope n^(-3/2) / sqrt(4 - (E_n x)^2) of the shifted density
    remainder, up to the absolute constant the theory leaves unspecified."""
    co = cg_coefficients(kappa, n)
    arg = 4.0 - (co.E_n * x) ** 2
    if arg <= 0:
        raise WindowError("envelope undefined at or beyond the scaled edge")
    return n ** -1.5 / math.sqrt(arg)

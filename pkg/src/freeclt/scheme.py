"""General expansion machinery: cumulant differential operators, Edgeworth
polynomial operators, implicit derivatives of the limiting subordination
function, and assembly of the correction series from those pieces.

Operator algebra is exact (Fraction coefficients, multisets of derivative
orders); derivative monomials act on the limiting function
h(e_1, ..., e_s; z) defined implicitly by

    sum_i e_i R(e_i h) + h + 1/h - z = 0,     h(0; z) = G_omega(z),

whose mixed derivatives at zero are obtained by an order-by-order
triangular solve of that equation (the "implicit" path) or by central
finite differences of the convolution solver (the "fd" validation path).
"""

from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .edgeworth import ExpansionSeries, _series
from .errors import MeasureError, UnsupportedOrderError, WindowError
from .convolve import (MeasureTransform, NFoldTransform, PairTransform,
                       partial_convolution, partial_convolution_transform)
from .measures import Measure, dilate
from .transforms import EvalWindow, free_cumulants, r_series, semicircle_cauchy

MAX_OPERATOR_ORDER = 6
MAX_DERIVATIVE_TOTAL = 6

KAPPA5_GENERATING = Fraction(1, 120)   # prefactor from the generating identity
KAPPA5_DISPLAYED = Fraction(1, 240)    # prefactor as displayed in the explicit
                                       # four-term series; see scheme-check


# ---------------------------------------------------------------------------
# operator algebra (exact rationals, multisets of derivative orders)

@dataclass(frozen=True)
class OperatorPoly:
    """Polynomial in derivative monomials D^{p1} D^{p2} ... with rational
    coefficients; a monomial is a multiset of orders, stored as a sorted
    tuple (descending)."""

    terms: tuple  # tuple of (Fraction, tuple-of-orders)

    @staticmethod
    def from_dict(d: dict) -> "OperatorPoly":
        items = tuple(sorted((tuple(sorted(k, reverse=True)), v)
                             for k, v in d.items() if v != 0))
        return OperatorPoly(tuple((v, k) for k, v in items))

    def to_dict(self) -> dict:
        return {mono: coeff for coeff, mono in self.terms}

    def __add__(self, other: "OperatorPoly") -> "OperatorPoly":
        d = self.to_dict()
        for coeff, mono in other.terms:
            d[mono] = d.get(mono, Fraction(0)) + coeff
        return OperatorPoly.from_dict(d)

    def __mul__(self, other):
        if isinstance(other, OperatorPoly):
            d = {}
            for c1, m1 in self.terms:
                for c2, m2 in other.terms:
                    mono = tuple(sorted(m1 + m2, reverse=True))
                    d[mono] = d.get(mono, Fraction(0)) + c1 * c2
            return OperatorPoly.from_dict(d)
        return OperatorPoly(tuple((coeff * Fraction(other), mono)
                                  for coeff, mono in self.terms))

    __rmul__ = __mul__

    @staticmethod
    def one() -> "OperatorPoly":
        return OperatorPoly(((Fraction(1), ()),))

    @staticmethod
    def zero() -> "OperatorPoly":
        return OperatorPoly(())


def _series_mul(a: dict, b: dict, max_pow: int) -> dict:
    out = {}
    for pa, qa in a.items():
        for pb, qb in b.items():
            p = pa + pb
            if p > max_pow:
                continue
            cur = out.get(p, OperatorPoly.zero())
            out[p] = cur + qa * qb
    return out


def cumulant_operator(p: int) -> OperatorPoly:
    """Cumulant differential operator kappa_p(D), defined by the formal
    logarithm  sum_p eps^p kappa_p(D)/p! = log(1 + sum_p eps^p D^p / p!)."""
    if not 2 <= p <= MAX_OPERATOR_ORDER:
        raise UnsupportedOrderError(
            f"cumulant operators supported for 2 <= p <= {MAX_OPERATOR_ORDER}")
    base = {q: OperatorPoly(((Fraction(1, math.factorial(q)), (q,)),))
            for q in range(2, p + 1)}
    log_series = {}
    power = dict(base)
    sign = Fraction(1)
    for j in range(1, p // 2 + 1):
        for deg, poly in power.items():
            cur = log_series.get(deg, OperatorPoly.zero())
            log_series[deg] = cur + (sign * Fraction(1, j)) * poly
        power = _series_mul(power, base, p)
        sign = -sign
    return math.factorial(p) * log_series.get(p, OperatorPoly.zero())


def edgeworth_polynomial(r: int) -> dict:
    """Edgeworth polynomial P_r as a dict {cumulant-index multiset: Fraction}.

    P_r = sum_m (1/m!) sum_{j_1+...+j_m = r, j_q >= 1}
          prod_q kappa_{j_q+2} / (j_q+2)!
    so P_0 = 1, P_1 = kappa_3/6, P_2 = kappa_4/24 + kappa_3^2/72, ...
    """
    if not 0 <= r <= 3:
        raise UnsupportedOrderError("Edgeworth polynomials supported for r <= 3")
    if r == 0:
        return {(): Fraction(1)}
    out = {}
    for m in range(1, r + 1):
        for js in itertools.product(range(1, r + 1), repeat=m):
            if sum(js) != r:
                continue
            coeff = Fraction(1, math.factorial(m))
            for j in js:
                coeff /= math.factorial(j + 2)
            key = tuple(sorted((j + 2 for j in js), reverse=True))
            out[key] = out.get(key, Fraction(0)) + coeff
    return out


def edgeworth_operator(r: int,
                       kappa5_prefactor: Fraction = KAPPA5_GENERATING
                       ) -> OperatorPoly:
    """P_r with cumulant symbols replaced by cumulant operators."""
    poly = edgeworth_polynomial(r)
    total = OperatorPoly.zero()
    for key, coeff in poly.items():
        if key == (5,):
            coeff = kappa5_prefactor
        term = OperatorPoly.one()
        for idx in key:
            term = term * cumulant_operator(idx)
        total = total + coeff * term
    return total


# ---------------------------------------------------------------------------
# implicit derivatives of the limiting subordination function

def _poly_mul(a: dict, b: dict, caps: tuple) -> dict:
    out = {}
    for ka, va in a.items():
        for kb, vb in b.items():
            k = tuple(x + y for x, y in zip(ka, kb))
            if any(x > c for x, c in zip(k, caps)):
                continue
            out[k] = out.get(k, 0.0) + va * vb
    return out


def _implicit_series(g: complex, kappa, caps: tuple) -> dict:
    """Coefficients of h(e_1,...,e_s) solving sum_i e_i R(e_i h) + h + 1/h = z
    with h(0) = g, truncated at the componentwise degree caps."""
    s = len(caps)
    zero = (0,) * s
    total = sum(caps)
    u_prime = 1.0 - 1.0 / (g * g)
    h = {zero: complex(g)}

    def residual():
        # delta = h - g and the geometric series for 1/h = 1/(g + delta)
        delta = {k: v for k, v in h.items() if k != zero}
        inv = {zero: 1.0 / g}
        power = {zero: 1.0 + 0.0j}
        for j in range(1, total + 1):
            power = _poly_mul(power, delta, caps)
            if not power:
                break
            for k, v in power.items():
                inv[k] = inv.get(k, 0.0) + v * (-1.0 / g) ** j / g
        out = dict(inv)
        for k, v in h.items():
            out[k] = out.get(k, 0.0) + v
        out[zero] = 0.0  # g + 1/g - z vanishes identically at this g
        # e_i R(e_i h) = sum_l kappa_{l+1} e_i^{l+1} h^l
        for i in range(s):
            hpow = {zero: 1.0 + 0.0j}
            for l in range(1, caps[i]):
                hpow = _poly_mul(hpow, h, caps)
                if l + 1 > len(kappa):
                    break
                kap = kappa[l]  # kappa_{l+1}
                if kap == 0:
                    continue
                for k, v in hpow.items():
                    kk = list(k)
                    kk[i] += l + 1
                    if kk[i] > caps[i]:
                        continue
                    kk = tuple(kk)
                    out[kk] = out.get(kk, 0.0) + kap * v
        return out

    for degree in range(1, total + 1):
        res = residual()
        for k in itertools.product(*(range(c + 1) for c in caps)):
            if sum(k) != degree:
                continue
            h[k] = h.get(k, 0.0) - res.get(k, 0.0) / u_prime
    return h


_FD_STENCILS = {
    1: {-1: -0.5, 1: 0.5},
    2: {-1: 1.0, 0: -2.0, 1: 1.0},
    3: {-2: -0.5, -1: 1.0, 1: -1.0, 2: 0.5},
    4: {-2: 1.0, -1: -4.0, 0: 6.0, 1: -4.0, 2: 1.0},
    5: {-3: -0.5, -2: 2.0, -1: -2.5, 1: 2.5, 2: -2.0, 3: 0.5},
    6: {-3: 1.0, -2: -6.0, -1: 15.0, 0: -20.0, 1: 15.0, 2: -6.0, 3: 1.0},
}


def _window_guard(g: complex, window: EvalWindow):
    if abs(g * g - 1.0) < window.delta / 16.0:
        raise WindowError(
            "1 - G^2 below the delta/16 floor; implicit inversion invalid")


def h_inf_derivative(alpha, mu: Measure, z: complex, window: EvalWindow,
                     method: str = "implicit", fd_step: float = 0.06,
                     richardson: int = 2) -> complex:
    """Mixed derivative D^alpha (one slot per entry, entry = order) of the
    limiting function h at zero weights, evaluated at z in the window.

    ``method="implicit"`` solves the defining equation order by order and is
    the reference path; ``method="fd"`` differentiates the convolution
    solver numerically and serves as the independent validator.  Total
    derivative orders are capped at 6; series assembly uses the uncapped
    internal path for the higher pure-implicit monomials it needs.
    """
    alpha = tuple(int(a) for a in alpha)
    if not alpha or any(a < 1 for a in alpha):
        raise UnsupportedOrderError("alpha must be a non-empty multiset of orders >= 1")
    if sum(alpha) > MAX_DERIVATIVE_TOTAL:
        raise UnsupportedOrderError(
            f"total derivative order limited to {MAX_DERIVATIVE_TOTAL}")
    return _h_derivative(alpha, mu, z, window, method, fd_step, richardson)


def _h_derivative(alpha, mu: Measure, z: complex, window: EvalWindow,
                  method: str = "implicit", fd_step: float = 0.06,
                  richardson: int = 2) -> complex:
    window.require(z)
    g = semicircle_cauchy(z)
    _window_guard(g, window)
    if method == "implicit":
        kap = [float(v) for v in r_series(mu, max(alpha))]
        coeffs = _implicit_series(g, kap, alpha)
        fact = 1.0
        for a in alpha:
            fact *= math.factorial(a)
        return coeffs.get(alpha, 0.0) * fact

    if method != "fd":
        raise MeasureError("method must be 'implicit' or 'fd'")

    from .measures import Semicircle

    omega = Semicircle(0.0, 1.0)

    def fd_value(h: float) -> complex:
        stencils = [_FD_STENCILS[a] for a in alpha]
        acc = 0.0 + 0.0j
        for offsets in itertools.product(*(st.items() for st in stencils)):
            coeff = 1.0
            eps = []
            for (off, c) in offsets:
                coeff *= c
                eps.append(off * h)
            acc += coeff * partial_convolution(mu, eps, omega, z)
        return acc / h ** sum(alpha)

    if richardson <= 1:
        return fd_value(fd_step)
    v1 = fd_value(fd_step)
    v2 = fd_value(fd_step / 2.0)
    return (4.0 * v2 - v1) / 3.0


def apply_operator(poly: OperatorPoly, mu: Measure, z: complex,
                   window: EvalWindow) -> complex:
    """Apply an operator polynomial to h at zero weights via the implicit
    derivative engine."""
    total = 0.0 + 0.0j
    for coeff, mono in poly.terms:
        if mono == ():
            total += float(coeff) * semicircle_cauchy(z)
        else:
            total += float(coeff) * _h_derivative(mono, mu, z, window)
    return total


def assemble_expansion(mu: Measure, n: int, z: complex, order: int,
                       window: EvalWindow,
                       kappa5_prefactor: Fraction = KAPPA5_GENERATING
                       ) -> ExpansionSeries:
    """Correction series assembled from Edgeworth operators acting on the
    implicit derivatives; must agree term-by-term with the closed-form
    Cauchy series."""
    if order not in (0, 1, 2, 3):
        raise MeasureError("expansion order must be 0, 1, 2 or 3")
    window.require(z)
    g = semicircle_cauchy(z)
    _window_guard(g, window)
    terms = [g]
    for r in range(1, 4):
        if r <= order:
            op = edgeworth_operator(r, kappa5_prefactor)
            terms.append(apply_operator(op, mu, z, window))
        else:
            terms.append(0.0 + 0.0j)
    kappa = free_cumulants(mu, 5)
    return _series("cauchy", terms, order, n, complex(z), kappa)


# ---------------------------------------------------------------------------
# finite-n probes

@dataclass(frozen=True)
class WeightVector:
    """Weight vector with 2s free slots bounded by n^{-1/2}; the remaining
    m - s slots sit at the fixed value m^{-1/2}."""

    m: int
    s: int
    free_slots: tuple
    n: int

    def __post_init__(self):
        if not (self.m >= self.n > self.s >= 3):
            raise MeasureError("weight vectors need m >= n > s >= 3")
        if len(self.free_slots) != 2 * self.s:
            raise MeasureError("expected 2s free slots")
        bound = self.n ** -0.5 + 1e-12
        if any(abs(e) > bound for e in self.free_slots):
            raise MeasureError("free slots must be bounded by n^(-1/2)")

    @property
    def fixed_value(self) -> float:
        return self.m ** -0.5


@dataclass(frozen=True)
class SchemeDiagnostics:
    """Empirical sup of |D^alpha h| over sampled weight vectors and window
    points; a sampled estimate, never a proven bound."""

    d_s_r: float
    fd_step: float
    richardson_levels: int


def finite_sum_transform(mu: Measure, m: int, count: int, epsilons):
    """Transform of [D_{1/sqrt(m)} mu]^{boxplus count} ⊞ D_{e_1} mu ⊞ ..."""
    acc = NFoldTransform(mu, m, count=count)
    for eps in epsilons:
        if eps == 0.0:
            continue
        acc = PairTransform(acc, MeasureTransform(dilate(mu, eps)))
    return acc


def probe_differences(mu: Measure, s: int, n_list, z: complex,
                      eps_scale: float = 1.0):
    """|h_{n+s}(n^{-1/2}, ..., eps_s; z) - h_inf(eps_s; z)| maximized over a
    small deterministic family of admissible eps vectors, one value per n."""
    from .measures import Semicircle

    omega = Semicircle(0.0, 1.0)
    z = complex(z)
    out = []
    for n in n_list:
        bound = eps_scale / math.sqrt(n)
        if s == 0:
            eps_family = [()]
        else:
            eps_family = [
                tuple(bound for _ in range(s)),
                tuple(-0.5 * bound for _ in range(s)),
                tuple(((-1) ** j) * 0.8 * bound for j in range(s)),
            ]
        worst = 0.0
        for eps in eps_family:
            finite = finite_sum_transform(mu, n, n, eps).g(z)
            limit = partial_convolution_transform(mu, eps, omega).g(z)
            worst = max(worst, abs(finite - limit))
        out.append(worst)
    return out


def convergence_probe(mu: Measure, s: int, n_list, z: complex) -> float:
    """Fitted log-log decay slope of the finite-n vs limiting difference;
    NaN when the differences sit at solver noise (e.g. exact fixed points)."""
    diffs = probe_differences(mu, s, n_list, z)
    if max(diffs) <= 1e-9:
        return math.nan
    xs = np.log(np.asarray(n_list, dtype=float))
    ys = np.log(np.maximum(diffs, 1e-300))
    slope = np.polyfit(xs, ys, 1)[0]
    return float(slope)


def empirical_derivative_sup(mu: Measure, s: int, r: int, n: int,
                             m_list=None, z_list=None, fd_step: float = 0.05,
                             richardson: int = 2) -> SchemeDiagnostics:
    """Sampled estimate of sup |D^alpha h_{m+s}| over |alpha| = r, finitely
    many m, weight vectors, and window points."""
    if r < 1 or r > 4:
        raise UnsupportedOrderError("diagnostics support 1 <= r <= 4")
    if m_list is None:
        m_list = [n, 2 * n]
    if z_list is None:
        z_list = [complex(-0.9, 0.004), complex(0.3, -0.003), complex(1.1, 0.0)]
    # split r over at most two slots, every part >= 1
    alphas = [(r,)] if r == 1 else [(r,), (r - 1, 1)]
    worst = 0.0
    for m in m_list:
        for z in z_list:
            for alpha in alphas:
                val = _fd_finite_sum_derivative(mu, m, s, alpha, z,
                                                fd_step, richardson)
                worst = max(worst, abs(val))
    return SchemeDiagnostics(d_s_r=worst, fd_step=fd_step,
                             richardson_levels=richardson)


def _fd_finite_sum_derivative(mu, m, s, alpha, z, fd_step, richardson):
    count = m - s

    def fd_value(h):
        stencils = [_FD_STENCILS[a] for a in alpha]
        acc = 0.0 + 0.0j
        for offsets in itertools.product(*(st.items() for st in stencils)):
            coeff = 1.0
            eps = []
            for (off, c) in offsets:
                coeff *= c
                eps.append(off * h)
            # remaining free slots of the weight vector held at zero
            acc += coeff * finite_sum_transform(mu, m, count, eps).g(z)
        return acc / h ** sum(alpha)

    if richardson <= 1:
        return fd_value(fd_step)
    v1 = fd_value(fd_step)
    v2 = fd_value(fd_step / 2.0)
    return (4.0 * v2 - v1) / 3.0

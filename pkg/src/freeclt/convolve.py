"""Free convolution via subordination: pairwise and n-fold solvers,
CLT measures, continuation diagnostics.

Every solve is a pure function of (transform inputs, z); transform objects
keep a warm-start hint from the previous solve, which is only an
acceleration and never changes results beyond the residual tolerance.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import (AccuracyError, ConvergenceError, MeasureError,
                     PoleError, WindowError)
from .measures import (Atoms, GridDensity, Measure, dilate, is_point_mass,
                       mean, support, variance)
from .transforms import (EvalWindow, cauchy, cauchy_derivative, make_window,
                         semicircle_cauchy)

MAX_ITERATIONS = 10_000
DEFAULT_TOL = 1e-12
SUCCESS_RESIDUAL = 1e-10

# iterates are kept strictly inside the upper half-plane
_IM_FLOOR = 1e-12


def worker_count() -> int:
    """Parallelism cap from FREECLT_THREADS (0 or unset = auto)."""
    raw = os.environ.get("FREECLT_THREADS", "0")
    try:
        cap = int(raw)
    except ValueError:
        cap = 0
    if cap <= 0:
        return 1  # solver sweeps are warm-start chains; serial is the default
    return cap


class MeasureTransform:
    """Cauchy/reciprocal transform of a fixed measure."""

    def __init__(self, measure: Measure):
        self.measure = measure

    def g(self, z: complex) -> complex:
        return cauchy(self.measure, z)

    def g_prime(self, z: complex) -> complex:
        return cauchy_derivative(self.measure, z, 1)

    def g_second(self, z: complex) -> complex:
        return cauchy_derivative(self.measure, z, 2)

    def f(self, z: complex) -> complex:
        return 1.0 / self.g(z)

    def f_prime(self, z: complex) -> complex:
        g = self.g(z)
        return -self.g_prime(z) / (g * g)


def _fd_second(transform, z: complex, h: float = 1e-5) -> complex:
    """Second derivative of a transform's g via Richardson of first derivatives."""
    d = lambda hh: (transform.g_prime(z + hh) - transform.g_prime(z - hh)) / (2 * hh)
    return (4.0 * d(h / 2) - d(h)) / 3.0


@dataclass(frozen=True)
class SubordinationSolution:
    """Solution record for a pairwise subordination solve at one point z."""

    z: complex
    Z1: complex
    Z2: complex
    g_value: complex
    iterations: int
    residual: float


class PairTransform:
    """Free convolution of two transforms, solved pointwise.

    Iterates w -> z + g1(z + g2(w)) with g_j(w) = F_j(w) - w (the analytic
    self-map whose Denjoy-Wolff point is the subordination function Z2),
    undamped first, averaging on oscillation, with a Newton polish once the
    residual is small.
    """

    def __init__(self, t1, t2, tol: float = DEFAULT_TOL):
        self.t1 = t1
        self.t2 = t2
        self.tol = tol
        self._warm = None

    # -- internal maps -----------------------------------------------------
    def _z1_of(self, z, w):
        return z + self.t2.f(w) - w

    def _step(self, z, w):
        z1 = self._z1_of(z, w)
        return z + self.t1.f(z1) - z1, z1

    def _residual(self, z, w):
        z1 = self._z1_of(z, w)
        return 2.0 * abs(self.t1.f(z1) - self.t2.f(w))

    def solve(self, z: complex, w0: complex = None) -> SubordinationSolution:
        z = complex(z)
        if w0 is None and self._warm is not None:
            zw, ww = self._warm
            if abs(z - zw) < 1.0:
                w0 = ww
        try:
            sol = self._solve_from(z, w0)
        except ConvergenceError:
            if w0 is None:
                raise
            sol = self._solve_from(z, None)
        self._warm = (z, sol.Z2)
        return sol

    def _initial(self, z):
        if z.imag > 0:
            return z + 1j
        # continuation starts: push the seed into the upper half-plane via
        # the first transform's own subordination-like shift
        return z + self.t1.f(complex(z.real, max(z.imag, 0.0) + 0.2)) - z

    def _solve_from(self, z, w0) -> SubordinationSolution:
        w = self._initial(z) if w0 is None else complex(w0)
        if w.imag <= _IM_FLOOR and z.imag > 0:
            w = complex(w.real, 0.5)
        res_prev = math.inf
        increases = 0
        damped = False
        best_w, best_res = w, math.inf
        for it in range(1, MAX_ITERATIONS + 1):
            try:
                t_w, z1 = self._step(z, w)
            except (AccuracyError, PoleError, ZeroDivisionError,
                    OverflowError, ConvergenceError):
                w = 0.5 * (w + best_w) + 1e-3j
                continue
            res = 2.0 * abs(t_w - w)
            if res < best_res:
                best_w, best_res = w, res
            if res <= self.tol:
                return self._record(z, w, it, res)
            if res < 1e-2:
                newton = self._newton_finish(z, w, it)
                if newton is not None:
                    return newton
            if res > res_prev:
                increases += 1
                if increases >= 2:
                    damped = True
            res_prev = res
            w_next = 0.5 * (w + t_w) if damped else t_w
            if w_next.imag <= _IM_FLOOR and z.imag > 0:
                w_next = 0.5 * (w + w_next)
                if w_next.imag <= _IM_FLOOR:
                    w_next = complex(w_next.real, 0.5 * abs(w.imag) + 1e-6)
            w = w_next
        if best_res <= SUCCESS_RESIDUAL:
            return self._record(z, best_w, MAX_ITERATIONS, best_res)
        raise ConvergenceError(
            f"subordination iteration stalled at z = {z} (residual {best_res:.3e})",
            residual=best_res)

    def _newton_finish(self, z, w, base_it):
        """Quadratic finish on Phi(w) = w - z - g1(z1(w)); returns None if it
        wanders out of the evaluable region or stops improving."""
        try:
            for extra in range(1, 40):
                z1 = self._z1_of(z, w)
                f1 = self.t1.f(z1)
                phi = w - z - f1 + z1
                dz1 = self.t2.f_prime(w) - 1.0
                dphi = 1.0 - (self.t1.f_prime(z1) - 1.0) * dz1
                if dphi == 0:
                    return None
                w_new = w - phi / dphi
                if not np.isfinite(w_new.real) or abs(w_new) > 1e6:
                    return None
                res = self._residual(z, w_new)
                w = w_new
                if res <= self.tol:
                    return self._record(z, w, base_it + extra, res)
        except (AccuracyError, PoleError, ZeroDivisionError, ConvergenceError):
            return None
        return None

    def _record(self, z, w, iterations, residual):
        z1 = self._z1_of(z, w)
        g = 1.0 / self.t1.f(z1)
        return SubordinationSolution(z=z, Z1=z1, Z2=w, g_value=g,
                                     iterations=iterations, residual=residual)

    # -- transform protocol -------------------------------------------------
    def g(self, z: complex) -> complex:
        return self.solve(z).g_value

    def g_prime(self, z: complex) -> complex:
        sol = self.solve(z)
        f1p = self.t1.f_prime(sol.Z1)
        f2p = self.t2.f_prime(sol.Z2)
        denom = f2p + f1p - f1p * f2p
        z1p = f2p / denom
        f_c = self.t1.f(sol.Z1)
        return -f1p * z1p / (f_c * f_c)

    def g_second(self, z: complex) -> complex:
        return _fd_second(self, z)

    def f(self, z: complex) -> complex:
        return 1.0 / self.g(z)

    def f_prime(self, z: complex) -> complex:
        g = self.g(z)
        return -self.g_prime(z) / (g * g)


class NFoldTransform:
    """Transform of the count-fold free self-convolution of D_{1/sqrt(n)} mu
    (count = n gives the normalized CLT sum).

    Solves count*w - (count-1)*F_nu(w) = z for the single subordination
    function w and returns G(z) = G_nu(w); Newton iteration with damped
    fixed-point fallback, warm-started along sweeps.
    """

    def __init__(self, measure: Measure, n: int, count: int = None,
                 tol: float = DEFAULT_TOL):
        if n < 1:
            raise MeasureError("n must be a positive integer")
        self.base = measure
        self.n = int(n)
        self.count = int(count) if count is not None else int(n)
        if self.count < 1:
            raise MeasureError("count must be a positive integer")
        self.nu = MeasureTransform(dilate(measure, 1.0 / math.sqrt(n))
                                   if n > 1 else measure)
        self.tol = tol
        self._warm = None

    def _phi(self, z, w):
        return self.count * w - (self.count - 1) * self.nu.f(w) - z

    def _initial(self, z):
        g = semicircle_cauchy(z) if abs(z) < 6.0 else 1.0 / z
        return 1.0 / g + g / self.n

    def solve(self, z: complex, w0: complex = None, max_iter: int = None):
        z = complex(z)
        n = self.count
        if n == 1:
            return z, 0, 0.0
        if w0 is None and self._warm is not None:
            zw, ww = self._warm
            if abs(z - zw) < 1.0:
                w0 = ww
        w = self._initial(z) if w0 is None else complex(w0)
        if w.imag <= _IM_FLOOR:
            w = complex(w.real, 0.5)
        limit = MAX_ITERATIONS if max_iter is None else int(max_iter)
        best_w, best_res = w, math.inf
        for it in range(1, limit + 1):
            try:
                phi = self._phi(z, w)
            except (AccuracyError, PoleError, ZeroDivisionError, OverflowError):
                # retreat toward the best admissible iterate, lifted upward
                w = 0.5 * (w + best_w) + 1e-3j
                continue
            res = abs(phi)
            if res < best_res and w.imag > -1.0:
                best_w, best_res = w, res
            if res <= self.tol:
                self._warm = (z, w)
                return w, it, res
            try:
                dphi = n - (n - 1) * self.nu.f_prime(w)
            except (AccuracyError, PoleError, ZeroDivisionError):
                dphi = 0.0
            w_new = w - phi / dphi if dphi != 0 else None
            if w_new is None or not np.isfinite(w_new.real) \
                    or not np.isfinite(w_new.imag) or abs(w_new) > 1e6:
                # damped fixed-point fallback; the self-map keeps iterates
                # admissible when Im z > 0
                t_w = z / n + (1.0 - 1.0 / n) * self.nu.f(w)
                w_new = 0.5 * (w + t_w)
                if w_new.imag <= _IM_FLOOR and z.imag > 0:
                    w_new = complex(w_new.real, 0.5 * abs(w.imag) + 1e-6)
            w = w_new
        if best_res <= SUCCESS_RESIDUAL:
            self._warm = (z, best_w)
            return best_w, limit, best_res
        raise ConvergenceError(
            f"n-fold subordination stalled at z = {z} (residual {best_res:.3e});"
            " n may be below the continuation threshold for this window",
            residual=best_res)

    def g(self, z: complex) -> complex:
        w, _, _ = self.solve(z)
        return self.nu.g(w)

    def g_with_residual(self, z: complex):
        w, it, res = self.solve(z)
        return self.nu.g(w), it, res

    def g_prime(self, z: complex) -> complex:
        w, _, _ = self.solve(z)
        wp = 1.0 / (self.count - (self.count - 1) * self.nu.f_prime(w))
        return self.nu.g_prime(w) * wp

    def g_second(self, z: complex) -> complex:
        return _fd_second(self, z)

    def f(self, z: complex) -> complex:
        return 1.0 / self.g(z)

    def f_prime(self, z: complex) -> complex:
        g = self.g(z)
        return -self.g_prime(z) / (g * g)


# ---------------------------------------------------------------------------
# public operations

def convolve_pair(mu1: Measure, mu2: Measure, z: complex,
                  tol: float = DEFAULT_TOL) -> SubordinationSolution:
    """Subordination solution of mu1 ⊞ mu2 at a point z in the upper
    half-plane.  Point-mass inputs short-circuit to exact translation."""
    z = complex(z)
    if z.imag <= 0:
        raise WindowError("convolve_pair requires Im z > 0")
    if is_point_mass(mu1) and is_point_mass(mu2):
        a = mu1.points[0][0] + mu2.points[0][0]
        g = 1.0 / (z - a)
        return SubordinationSolution(z, z - mu2.points[0][0],
                                     z - mu1.points[0][0], g, 0, 0.0)
    if is_point_mass(mu1):
        sol = convolve_pair(mu2, mu1, z, tol)
        return SubordinationSolution(z, sol.Z2, sol.Z1, sol.g_value,
                                     sol.iterations, sol.residual)
    if is_point_mass(mu2):
        a = mu2.points[0][0]
        g = cauchy(mu1, z - a)
        # Z1 = z - a; Z2 = F_mu1(Z1) + a so that F(Z1) - a = F(Z2) - 0 holds
        z1 = z - a
        z2 = 1.0 / g + a
        return SubordinationSolution(z, z1, z2, g, 0, 0.0)
    pair = PairTransform(MeasureTransform(mu1), MeasureTransform(mu2), tol=tol)
    return pair.solve(z)


def clt_transform(measure: Measure, n: int, tol: float = DEFAULT_TOL,
                  check: bool = True) -> NFoldTransform:
    """Transform object for the normalized n-fold sum of free copies."""
    if check:
        if abs(mean(measure)) > 1e-8 or abs(variance(measure) - 1.0) > 1e-8:
            raise MeasureError(
                "clt transform requires a zero-mean, unit-variance measure")
    return NFoldTransform(measure, n, tol=tol)


def clt_cauchy(measure: Measure, n: int, z: complex,
               tol: float = DEFAULT_TOL) -> complex:
    """Cauchy transform of the free CLT measure mu_n at z (C+ or the window)."""
    return clt_transform(measure, n, tol=tol).g(z)


@dataclass(frozen=True)
class CltMeasure:
    """Density of mu_n sampled on a grid, with solver diagnostics."""

    base: Measure
    n: int
    grid_density: GridDensity
    subordination_residual_sup: float
    mass_drift: float
    continuation_gap: np.ndarray  # l_n = G_mu_n - G_omega on the default K


def _solve_density_point(transform: NFoldTransform, x: float, w0):
    """Solve at x + i0, escalating a tiny imaginary offset near the
    square-root support edges where the on-axis fixed point is parabolic."""
    last = None
    for y in (0.0, 1e-8, 1e-6, 1e-4):
        try:
            w, _, res = transform.solve(complex(x, y), w0, max_iter=800)
            return w, res
        except ConvergenceError as exc:
            last = exc
            w0 = None
            transform._warm = None  # force genuinely cold restarts
    raise last


def _density_sweep(transform: NFoldTransform, xs: np.ndarray) -> tuple:
    dens = np.empty_like(xs)
    res_sup = 0.0
    # sweep outward from the center so warm starts come from the bulk,
    # where the fixed point is strongly attracting
    order = np.argsort(np.abs(xs - xs[len(xs) // 2]), kind="stable")
    halves = ([i for i in order if xs[i] >= xs[len(xs) // 2]],
              [i for i in order if xs[i] < xs[len(xs) // 2]])
    for chain in halves:
        w0 = None
        for i in chain:
            w, res = _solve_density_point(transform, xs[i], w0)
            w0 = w
            res_sup = max(res_sup, res)
            dens[i] = max(0.0, -transform.nu.g(w).imag / math.pi)
    return dens, res_sup


def clt_measure(measure: Measure, n: int, grid=None,
                window_delta=0.05) -> CltMeasure:
    """Free CLT measure mu_n with its density on a uniform grid.

    ``grid`` is (a, b, count); by default the support window
    [-2 - 4/sqrt(n), 2 + 4/sqrt(n)] is scanned, trimmed where the density
    falls below 1e-10, and sampled densely enough for the trapezoid mass to
    sit within 1e-6 of 1 before normalization.  ``window_delta=None`` skips
    the continuation-gap diagnostic.
    """
    transform = clt_transform(measure, n)
    if grid is None:
        pad = 4.0 / math.sqrt(n)
        a, b = -2.0 - pad, 2.0 + pad
        a, b = _trim_support(transform, a, b)
        count = int(math.ceil((b - a) / 2.0e-4)) + 1
        count = min(max(count, 1025), 32769)
    else:
        a, b, count = float(grid[0]), float(grid[1]), int(grid[2])
        if count < 16 or b <= a:
            raise MeasureError("grid must be (a, b, count >= 16)")

    xs = np.linspace(a, b, count)
    workers = worker_count()
    if workers > 1 and count >= 4 * workers:
        chunks = np.array_split(np.arange(count), workers)
        results = [None] * len(chunks)

        def run(idx):
            local = clt_transform(measure, n, check=False)
            return _density_sweep(local, xs[chunks[idx]])

        with ThreadPoolExecutor(max_workers=workers) as pool:
            for idx, out in enumerate(pool.map(run, range(len(chunks)))):
                results[idx] = out
        dens = np.concatenate([r[0] for r in results])
        res_sup = max(r[1] for r in results)
    else:
        dens, res_sup = _density_sweep(transform, xs)

    raw_mass = float(np.trapz(dens, xs))
    if raw_mass <= 0:
        raise MeasureError("clt density integrated to zero mass")
    grid_density = GridDensity(a, b, tuple(dens / raw_mass))

    if window_delta is None:
        gap = np.empty(0, dtype=complex)
    else:
        window = make_window(window_delta)
        gap = continuation_gap(measure, n, window, transform=transform)
    return CltMeasure(base=measure, n=n, grid_density=grid_density,
                      subordination_residual_sup=res_sup,
                      mass_drift=raw_mass - 1.0, continuation_gap=gap)


def _trim_support(transform: NFoldTransform, a: float, b: float,
                  threshold: float = 1e-10) -> tuple:
    """Shrink [a, b] until the density at the edges exceeds the threshold."""
    lo, hi = support(transform.base)
    # count-fold support never extends past the Minkowski sum of the
    # rescaled base supports
    scale = transform.count / math.sqrt(transform.n)
    a = max(a, lo * scale - 1e-9)
    b = min(b, hi * scale + 1e-9)
    xs = np.linspace(a, b, 257)
    dens, _ = _density_sweep(transform, xs)
    alive = np.nonzero(dens > threshold)[0]
    if alive.size == 0:
        return a, b
    i0, i1 = alive[0], alive[-1]
    a2 = xs[max(i0 - 1, 0)]
    b2 = xs[min(i1 + 1, len(xs) - 1)]
    return a2, b2


def continuation_gap(measure: Measure, n: int, window: EvalWindow,
                     nx: int = 41, ny: int = 9,
                     transform: NFoldTransform = None) -> np.ndarray:
    """l_n = G_mu_n - G_omega sampled on the window rectangle K."""
    if transform is None:
        transform = clt_transform(measure, n)
    pts = window.grid(nx, ny)
    out = np.empty(pts.shape, dtype=complex)
    w0 = None
    for i, z in enumerate(pts):
        w, _, _ = transform.solve(z, w0)
        w0 = w
        out[i] = transform.nu.g(w) - semicircle_cauchy(z)
    return out


def partial_convolution_transform(measure: Measure, epsilons, nu: Measure):
    """Transform of nu ⊞ D_{e1} mu ⊞ ... ⊞ D_{es} mu (zero slots skipped)."""
    acc = MeasureTransform(nu)
    for eps in epsilons:
        if eps == 0.0:
            continue
        acc = PairTransform(acc, MeasureTransform(dilate(measure, eps)))
    return acc


def partial_convolution(measure: Measure, epsilons, nu: Measure,
                        z: complex) -> complex:
    """Cauchy transform of nu ⊞ D_{e1} mu ⊞ ... ⊞ D_{es} mu at z.

    Valid for Im z > 0 and, when nu has a closed-form continuation, on the
    window strip around (-2, 2)."""
    if any(abs(e) > 1.0 for e in epsilons):
        raise MeasureError("dilation weights must satisfy |eps| <= 1")
    return partial_convolution_transform(measure, epsilons, nu).g(complex(z))

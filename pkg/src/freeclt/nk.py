"""Newton-Kantorovich evaluation and certification for the subordination
system

    (z - t1 - t2)^{-1} + G_{nu_1}(t1) = 0
    (z - t1 - t2)^{-1} + G_{nu_2}(t2) = 0.

The reference point is the explicit subordination function of the
half-variance semicircle pair; certificates are empirical (sampled
suprema), never proven bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MeasureError, PoleError, SingularSystemError, WindowError
from .measures import Atoms, FreePoisson, GridDensity, Measure, Semicircle
from .transforms import cauchy, cauchy_derivative, edge_sqrt

OMEGA_HALF = Semicircle(0.0, 0.5)

_MEASURE_TYPES = (Atoms, Semicircle, FreePoisson, GridDensity)


def reference_subordination(z: complex) -> complex:
    """Subordination function of omega_{1/2} ⊞ omega_{1/2} = omega:
    Z(z) = (3z + i sqrt(4 - z^2))/4, continued through (-2, 2)."""
    z = complex(z)
    return (3.0 * z + edge_sqrt(z, -2.0, 2.0)) / 4.0


def _resolvent(t, z):
    d = z - t[0] - t[1]
    if abs(d) < 1e-14:
        raise PoleError("z - t1 - t2 vanishes")
    return 1.0 / d


def eval_F(t, z: complex, nu1: Measure, nu2: Measure):
    """F(t) = ((z-t1-t2)^{-1} + G_{nu1}(t1), (z-t1-t2)^{-1} + G_{nu2}(t2))."""
    r = _resolvent(t, z)
    return (r + _g(nu1, t[0]), r + _g(nu2, t[1]))


def _g(nu, w):
    if isinstance(nu, _MEASURE_TYPES):
        return cauchy(nu, w)
    return nu.g(w)  # transform provider


def _g1(nu, w):
    if isinstance(nu, _MEASURE_TYPES):
        return cauchy_derivative(nu, w, 1)
    return nu.g_prime(w)


def _g2(nu, w):
    if isinstance(nu, _MEASURE_TYPES):
        return cauchy_derivative(nu, w, 2)
    return nu.g_second(w)


def eval_F_prime(t0, z: complex, nu1, nu2, mu1, mu2):
    """2x2 derivative of F at the reference point t0 of the (mu1, mu2)
    system, with the resolvent square written through G_mu."""
    g1sq = _g(mu1, t0[0]) ** 2
    g2sq = _g(mu2, t0[1]) ** 2
    return np.array([[_g1(nu1, t0[0]) + g1sq, g1sq],
                     [g2sq, _g1(nu2, t0[1]) + g2sq]], dtype=complex)


def eval_newton_step(t0, z: complex, nu1, nu2, mu1, mu2):
    """[F'(t0)]^{-1} F(t0) written through S_j = G_{nu_j} - G_{mu_j}."""
    s1 = _g(nu1, t0[0]) - _g(mu1, t0[0])
    s2 = _g(nu2, t0[1]) - _g(mu2, t0[1])
    a11 = _g1(nu1, t0[0]) + _g(mu1, t0[0]) ** 2
    a22 = _g1(nu2, t0[1]) + _g(mu2, t0[1]) ** 2
    g1sq = _g(mu1, t0[0]) ** 2
    g2sq = _g(mu2, t0[1]) ** 2
    det = a22 * a11 - g1sq * g2sq
    if abs(det) < 1e-14:
        raise SingularSystemError(f"det F'(t0) = {det} too small")
    return ((a22 * s1 - g1sq * s2) / det,
            (a11 * s2 - g2sq * s1) / det)


def eval_F_second(t0, z: complex, nu1, nu2, mu1, mu2):
    """Second derivative of F at the reference point, as the 2x4 array
    [[D1, 2G^3_{mu2}, 2G^3_{mu1}, 2G^3_{mu2}],
     [2G^3_{mu1}, 2G^3_{mu2}, 2G^3_{mu1}, D2]]
    with D_j = G''_{nu_j}(t0_j) - 2 G^3_{mu_j}(t0_j)."""
    g1c = _g(mu1, t0[0]) ** 3
    g2c = _g(mu2, t0[1]) ** 3
    d1 = _g2(nu1, t0[0]) - 2.0 * g1c
    d2 = _g2(nu2, t0[1]) - 2.0 * g2c
    return np.array([[d1, 2.0 * g2c, 2.0 * g1c, 2.0 * g2c],
                     [2.0 * g1c, 2.0 * g2c, 2.0 * g1c, d2]], dtype=complex)


def _second_derivative_general(t, z, nu1, nu2):
    """True second derivative of F at an arbitrary point t: every entry is
    2 (z - t1 - t2)^{-3}, plus G''_{nu_j} on the pure-diagonal slots."""
    r3 = 2.0 * _resolvent(t, z) ** 3
    d1 = _g2(nu1, t[0]) + r3
    d2 = _g2(nu2, t[1]) + r3
    return np.array([[d1, r3, r3, r3], [r3, r3, r3, d2]], dtype=complex)


def second_norm(arr) -> float:
    """Max row sum of absolute values (the norm used for K0)."""
    return float(np.max(np.sum(np.abs(arr), axis=1)))


def operator_norm_2x2(a) -> float:
    """Largest singular value of a 2x2 complex matrix, in closed form."""
    m = np.asarray(a, dtype=complex)
    h = m.conj().T @ m
    tr = h[0, 0].real + h[1, 1].real
    det = (h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0]).real
    disc = max(tr * tr / 4.0 - det, 0.0)
    return math.sqrt(max(tr / 2.0 + math.sqrt(disc), 0.0))


def inverse_operator_norm_2x2(a) -> float:
    """Operator norm of the inverse = 1/sigma_min."""
    m = np.asarray(a, dtype=complex)
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if abs(det) < 1e-14:
        raise SingularSystemError("matrix numerically singular")
    h = m.conj().T @ m
    tr = h[0, 0].real + h[1, 1].real
    dd = (h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0]).real
    disc = max(tr * tr / 4.0 - dd, 0.0)
    smin_sq = max(tr / 2.0 - math.sqrt(disc), 0.0)
    if smin_sq <= 0.0:
        raise SingularSystemError("matrix numerically singular")
    return 1.0 / math.sqrt(smin_sq)


@dataclass(frozen=True)
class NKCertificate:
    """Newton-Kantorovich certificate: pass iff h0 = beta0*eta0*K0 <= 1/2."""

    beta0: float
    eta0: float
    K0: float
    h0: float
    radius: float  # NaN when the certificate fails
    passed: bool
    empirical: bool = False

    def to_dict(self) -> dict:
        return {"beta0": self.beta0, "eta0": self.eta0, "K0": self.K0,
                "h0": self.h0,
                "radius": None if math.isnan(self.radius) else self.radius,
                "pass": self.passed, "empirical": self.empirical}


@dataclass(frozen=True)
class NKSystemPoint:
    z: complex
    t0: tuple
    F_value: tuple
    S_values: tuple
    det_Fprime: complex


def system_point(z: complex, nu1, nu2, mu1, mu2, t0=None) -> NKSystemPoint:
    if t0 is None:
        zr = reference_subordination(z)
        t0 = (zr, zr)
    fv = eval_F(t0, z, nu1, nu2)
    sv = (_g(nu1, t0[0]) - _g(mu1, t0[0]), _g(nu2, t0[1]) - _g(mu2, t0[1]))
    fp = eval_F_prime(t0, z, nu1, nu2, mu1, mu2)
    det = fp[0, 0] * fp[1, 1] - fp[0, 1] * fp[1, 0]
    return NKSystemPoint(z=complex(z), t0=tuple(t0), F_value=fv,
                         S_values=sv, det_Fprime=det)


def certify(beta0: float, eta0: float, k0: float,
            empirical: bool = False) -> NKCertificate:
    """Certificate from the three constants; radius
    (1 - sqrt(1 - 2 h0))/h0 * eta0, with the h0 -> 0 limit eta0."""
    if beta0 < 0 or eta0 < 0 or k0 < 0:
        raise MeasureError("certificate constants must be non-negative")
    h0 = beta0 * eta0 * k0
    passed = h0 <= 0.5
    if not passed:
        radius = math.nan
    elif h0 == 0.0:
        radius = eta0
    else:
        radius = (1.0 - math.sqrt(1.0 - 2.0 * h0)) / h0 * eta0
    return NKCertificate(beta0=beta0, eta0=eta0, K0=k0, h0=h0,
                         radius=radius, passed=passed, empirical=empirical)


def certify_subordination(nu1, nu2, delta: float,
                          z_samples: int = 1024, ball_samples: int = 128,
                          seed: int = 7) -> NKCertificate:
    """Empirical certificate for the (nu1, nu2) system against the
    half-variance semicircle reference, sampling
    M = {x in [-2+delta, 2-delta], 0 < y < delta*sqrt(delta)}.

    beta0 = sup ||[F'(t0)]^{-1}||_2, eta0 = sup ||newton step||,
    K0 = sup ||F''|| over a sampled ball of radius 2*eta0 around t0.
    """
    if not 0.0 < delta < 0.1:
        raise WindowError(f"delta must lie in (0, 1/10); got {delta}")
    nx = max(8, int(round(math.sqrt(z_samples * 4))))
    ny = max(4, z_samples // nx)
    xs = np.linspace(-2.0 + delta, 2.0 - delta, nx)
    ys = np.linspace(delta * math.sqrt(delta) / ny, delta * math.sqrt(delta), ny,
                     endpoint=False)
    mu = OMEGA_HALF
    beta0 = 0.0
    eta0 = 0.0
    points = []
    for y in ys:
        for x in xs:
            z = complex(x, y)
            zr = reference_subordination(z)
            t0 = (zr, zr)
            fp = eval_F_prime(t0, z, nu1, nu2, mu, mu)
            beta0 = max(beta0, inverse_operator_norm_2x2(fp))
            step = eval_newton_step(t0, z, nu1, nu2, mu, mu)
            eta0 = max(eta0, math.hypot(abs(step[0]), abs(step[1])))
            points.append((z, t0))
    rng = np.random.default_rng(seed)
    k0 = 0.0
    idx = rng.integers(0, len(points), size=ball_samples)
    for i in idx:
        z, t0 = points[i]
        u = rng.normal(size=4)
        u /= np.linalg.norm(u)
        rad = 2.0 * eta0 * rng.random()
        dt = (complex(u[0], u[1]) * rad, complex(u[2], u[3]) * rad)
        t_star = (t0[0] + dt[0], t0[1] + dt[1])
        if t_star[0].imag <= 0 or t_star[1].imag <= 0:
            t_star = t0
        k0 = max(k0, second_norm(_second_derivative_general(t_star, z, nu1, nu2)))
    return certify(beta0, eta0, k0, empirical=True)


def g_function(z: complex) -> complex:
    """Symmetric-case determinant reduction
    g(z) = (G_omega(z)^2 + G'_{omega_{1/2}}(Z(z)))^2 - G_omega(z)^4."""
    from .transforms import semicircle_cauchy

    zr = reference_subordination(z)
    gw = semicircle_cauchy(z)
    gp = cauchy_derivative(OMEGA_HALF, zr, 1)
    return (gw * gw + gp) ** 2 - gw ** 4

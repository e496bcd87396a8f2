"""Numerical toolkit for free convolutions, free central-limit measures,
their Edgeworth-type correction series, and Newton-Kantorovich
certification of subordination solutions."""

from .errors import (AccuracyError, ConvergenceError, FreecltError,
                     MeasureError, PoleError, SingularSystemError,
                     UnsupportedOrderError, WindowError)
from .measures import (Atoms, FreePoisson, GridDensity, Measure,
                       Semicircle, TailFunctionals,
                       absolute_moment, atoms, bernoulli, dilate, eta_qs,
                       from_json, lyapunov_fraction, mean, moment,
                       normalized, point_mass, shift, support,
                       support_radius, tail_functionals, tail_moment,
                       to_json, variance)
from .transforms import (CauchyValue, EvalWindow, FreeCumulants,
                         MomentVector, cauchy, cauchy_derivative,
                         cauchy_value, cdf, check_window_mapping,
                         cumulants_from_moments, density, free_cumulants,
                         make_window, moment_vector, moments_from_cumulants,
                         r_series, reciprocal_transform, semicircle_cauchy,
                         semicircle_cdf, semicircle_density,
                         stieltjes_density)
from .convolve import (CltMeasure, NFoldTransform, PairTransform,
                       SubordinationSolution, clt_cauchy, clt_measure,
                       clt_transform, continuation_gap, convolve_pair,
                       partial_convolution, partial_convolution_transform)
from .edgeworth import (CGCoefficients, ExpansionSeries, cg_coefficients,
                        cg_density_remainder_envelope, cg_expand_density,
                        cg_expand_distribution, chebyshev_u, coefficient_B,
                        expand_cauchy, expand_density, expand_distribution)
from .scheme import (OperatorPoly, SchemeDiagnostics, WeightVector,
                     assemble_expansion, convergence_probe,
                     cumulant_operator, edgeworth_operator,
                     edgeworth_polynomial, empirical_derivative_sup,
                     h_inf_derivative)
from .nk import (NKCertificate, NKSystemPoint, certify,
                 certify_subordination, eval_F, eval_F_prime, eval_F_second,
                 eval_newton_step, g_function, reference_subordination,
                 system_point)
from .metrics import (DistanceReport, berry_esseen_slope, distance_report,
                      kolmogorov, levy)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

"""Exception types shared across the package."""


class FreecltError(Exception):
    """Base class for all freeclt errors."""


class MeasureError(FreecltError, ValueError):
    """Invalid measure data: bad mass, ordering, degenerate transform, ..."""


class UnsupportedOrderError(FreecltError, ValueError):
    """Moment or cumulant order outside the supported range."""


class WindowError(FreecltError, ValueError):
    """Evaluation point outside the admissible window, or bad window delta."""


class PoleError(FreecltError, ZeroDivisionError):
    """Evaluation at (or too close to) a pole or vanishing denominator."""


class AccuracyError(FreecltError, ValueError):
    """Requested evaluation cannot reach the advertised accuracy."""


class ConvergenceError(FreecltError, RuntimeError):
    """Fixed-point / Newton iteration did not reach the residual target.

    Carries the last residual so callers can distinguish "n below the
    analytic-continuation threshold" from an outright failure.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularSystemError(FreecltError, RuntimeError):
    """2x2 linearized system is numerically singular."""

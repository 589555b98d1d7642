"""Exception types shared across the toolkit."""


class ForcedOscError(Exception):
    """Base class for all toolkit errors."""


# --- integration ---

class StepUnderflow(ForcedOscError):
    """Adaptive step size collapsed below machine resolution (stiffness/singularity)."""


class NonFiniteState(ForcedOscError):
    """Integration produced NaN or infinity (blow-up)."""


# --- system construction ---

class UnboundedForce(ForcedOscError):
    """A force term was supplied without the bound the construction requires."""


class ChartSingularity(ForcedOscError):
    """Trajectory entered the singular cap of a coordinate chart."""


class SingularMetric(ForcedOscError):
    """Kinetic-energy matrix failed positive-definiteness."""


class Discontinuity(ForcedOscError):
    """Root tracking found an unexpected number of tangency points."""


# --- segments ---

class SpeedBoundTooSmall(ForcedOscError):
    """Segment speed cap does not exceed the barrier slopes."""


class UnresolvedTangency(ForcedOscError):
    """Both first- and second-order boundary tests fell below tolerance."""


class NonProductSegment(ForcedOscError):
    """Segment cross-sections do not match at the period endpoints."""


# --- orbit search ---

class NoConvergence(ForcedOscError):
    """Newton shooting failed to reach the residual tolerance."""

    def __init__(self, message, last_state=None, residual=None):
        super().__init__(message)
        self.last_state = last_state
        self.residual = residual


class SingularJacobian(ForcedOscError):
    """det(I - DP) dropped below tolerance at a shooting iterate."""

    def __init__(self, message, iterate=None):
        super().__init__(message)
        self.iterate = iterate


class ZeroOnContour(ForcedOscError):
    """Displacement map vanished at a winding-contour sample."""


class RefinementLimit(ForcedOscError):
    """Winding angle increments could not be resolved below pi/2."""


# --- cutoff experiments ---

class ScheduleExhausted(ForcedOscError):
    """No cutoff speed in the schedule passed the escape experiment."""


class NoEscape(ForcedOscError):
    """A sampled geodesic failed to leave the region neighborhood within the cap."""


class ChartExit(ForcedOscError):
    """A tracking trajectory left the coordinate chart."""


# --- scenario files ---

class ParseError(ForcedOscError):
    """Scenario file could not be parsed."""


class ValidationError(ForcedOscError):
    """Scenario file parsed but violated the schema; lists all violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("scenario validation failed:\n  - " + "\n  - ".join(self.violations))

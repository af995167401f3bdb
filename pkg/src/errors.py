from typing import Any, Dict, Optional


class AnosovError(Exception):
    """Base class for every error raised by the package.

    Args:
        message (str): Human readable description.
        details (Dict[str, Any], optional): Machine readable context that is
            copied verbatim into the JSON error record. Defaults to None.
    """

    code: str = "anosov_error"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = dict(details or {})

    def to_record(self) -> Dict[str, Any]:
        """Render the error as the structured record written by the CLI."""
        return {
            "error": self.code,
            "kind": type(self).__name__,
            "message": self.message,
            "details": self.details,
        }


class ValidationError(AnosovError, ValueError):
    code = "validation_error"


class NumericalError(AnosovError, RuntimeError):
    code = "numerical_error"


class ConfigError(ValidationError):
    code = "config_error"


class NotHyperbolic(ValidationError):
    code = "not_hyperbolic"


class NotCertified(ValidationError):
    code = "not_certified"


class NonCommuting(ValidationError):
    code = "non_commuting"


class DegenerateSamples(ValidationError):
    code = "degenerate_samples"


class NonConvergence(NumericalError):
    code = "non_convergence"


class Overflow(NumericalError):
    code = "overflow"


class Collision(NumericalError):
    code = "collision"


class LeafEscape(NumericalError):
    code = "leaf_escape"


class NoIntersection(NumericalError):
    code = "no_intersection"


class OutOfChart(NumericalError):
    code = "out_of_chart"


class DegenerateExponent(NumericalError):
    code = "degenerate_exponent"


class EmptyBall(NumericalError):
    code = "empty_ball"


class NotFound(NumericalError):
    code = "not_found"

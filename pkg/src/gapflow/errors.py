"""Exception types shared across the package."""


class GapflowError(Exception):
    """Base class for all package errors."""


class ScenarioParseError(GapflowError):
    """Scenario document is not well formed. Carries a field path or line hint."""

    def __init__(self, message, where=None):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


class ScenarioValidationError(GapflowError):
    """A scenario parsed cleanly but violates model invariants."""

    def __init__(self, report):
        self.report = report
        lines = "; ".join(v.message for v in report.errors)
        super().__init__(f"invalid scenario ({len(report.errors)} violations): {lines}")


class UnknownComponentError(GapflowError):
    pass


class DegenerateStateError(GapflowError):
    """Total square modulus is zero or negative where a rate is required."""


class NoChoiceError(GapflowError):
    """A stochastic choice was requested with no positive-current component."""


class CollapseOnEmptyError(GapflowError):
    """Collapse target has exactly zero amplitude."""


class NonFiniteStateError(GapflowError):
    """Integration produced NaN or Inf amplitudes."""


class NormDriftError(GapflowError):
    """Norm drift exceeded the configured budget in a norm-conserving mode."""


class ProvenanceError(GapflowError):
    """Two results being compared were not produced from the same model/config."""

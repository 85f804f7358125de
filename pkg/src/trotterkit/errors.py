"""Exception types raised across the toolkit."""


class TrotterKitError(Exception):
    """Base class for all toolkit errors."""


class PreconditionError(TrotterKitError, ValueError):
    """An input violates a documented precondition."""


class NumericOverflowError(TrotterKitError, ArithmeticError):
    """Non-finite values appeared during a numerical stage."""

    def __init__(self, stage, detail=""):
        self.stage = stage
        msg = f"numeric overflow during {stage}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class IndexContractError(TrotterKitError, IndexError):
    """A factor index is outside the range admitted by the product scheme."""


class MeshError(TrotterKitError, ValueError):
    """A sampling mesh is malformed (coincident pairs, points outside the domain)."""


class GridCompatibilityError(TrotterKitError, ValueError):
    """Shift lengths or step counts do not align with the time grid."""


class UnsupportedRegimeError(TrotterKitError, ValueError):
    """The requested exact computation is only available in another norm regime."""


class IntegrationError(TrotterKitError, RuntimeError):
    """The reference integrator could not meet its tolerance."""

    def __init__(self, time, detail=""):
        self.time = time
        msg = f"reference integration failed at t={time!r}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DegenerateFitError(TrotterKitError, ValueError):
    """A log-log rate fit cannot be performed on the given data."""


class InsufficientSamplingError(TrotterKitError, ValueError):
    """Too few samples to evaluate a quadrature-based check."""


class PlotDomainError(TrotterKitError, ValueError):
    """Data cannot be drawn on logarithmic axes."""


class StabilityError(TrotterKitError, RuntimeError):
    """The A-stability audit failed; the attached report says by how much."""

    def __init__(self, report):
        self.report = report
        super().__init__(
            f"A-stability audit failed: M_est={report.M_est:.6g} exceeds cap {report.cap:.6g}"
        )


class ConfigError(TrotterKitError, ValueError):
    """Invalid experiment configuration."""


class PhaseError(TrotterKitError, RuntimeError):
    """An experiment phase failed; ``phase`` names it and ``cause`` holds the error."""

    def __init__(self, phase, cause):
        self.phase = phase
        self.cause = cause
        super().__init__(f"phase '{phase}' failed: {type(cause).__name__}: {cause}")

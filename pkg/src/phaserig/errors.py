"""Exception hierarchy shared by all phaserig modules."""


class PhaseRigError(Exception):
    """Base class for every error raised by phaserig."""


class InvalidInputError(PhaseRigError, ValueError):
    """Malformed argument: wrong shape, asymmetric matrix, zero vector, bad spec."""


class NumericalFailureError(PhaseRigError, ArithmeticError):
    """An underlying LAPACK iteration did not converge or left a large residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DefectiveSystemError(PhaseRigError):
    """The eigensystem is (numerically) defective; c-normalization is not possible."""


class LeadThresholdError(PhaseRigError):
    """Energy sits exactly on a channel threshold (square-root branch point of a lead)."""

    def __init__(self, message, energy=None):
        super().__init__(message)
        self.energy = energy


class NoChannelError(PhaseRigError):
    """No propagating channel is open in the requested lead at this energy."""


class SingularSolveError(PhaseRigError, ArithmeticError):
    """The linear system (E - H_eff) x = b is singular."""


class BranchPointNotFoundError(PhaseRigError):
    """No eigenvalue coalescence could be located in the requested parameter window."""

    def __init__(self, message, best_gap=None):
        super().__init__(message)
        self.best_gap = best_gap


class InsufficientDataError(PhaseRigError):
    """Too few valid rows to compute a statistic."""

"""Exception hierarchy shared by the simulator modules."""


class SimulationError(Exception):
    """Base class for every error raised on purpose by the simulator."""


class ContractViolation(SimulationError, ValueError):
    """A precondition or a type invariant does not hold."""


class ResourceLimitError(SimulationError, MemoryError):
    """An operation would exceed a configured size cap."""


class DegenerateBranchError(SimulationError, ArithmeticError):
    """A branch or chain with (numerically) zero probability was used as a denominator."""


class DegenerateProjectionError(DegenerateBranchError):
    """Message replacement projected the running state onto (almost) nothing.

    Carries enough context to report the instance as out of regime.
    """

    def __init__(self, message: str, index: int, weight: float):
        super().__init__(message)
        self.index = index
        self.weight = weight


class ReplayIntegrityError(SimulationError, RuntimeError):
    """The receiving side could not replay a replacement message."""


class SamplingExhaustedError(SimulationError, RuntimeError):
    """A sampling loop ran out of retries."""


class HypothesisViolation(SimulationError, ValueError):
    """An instance does not satisfy the hypothesis of the check it was fed to."""


class UsageError(SimulationError, ValueError):
    """Bad experiment id, parameter name or parameter value."""

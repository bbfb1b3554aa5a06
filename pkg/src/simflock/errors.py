"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SimflockError(Exception):
    """Base class for all simflock errors."""


class InvalidDistributionError(SimflockError):
    """A parameter's sampling distribution violates its invariants."""

    def __init__(self, name: str, reason: str) -> None:
        super().__init__(f"parameter {name!r}: {reason}")
        self.name = name
        self.reason = reason


class OutOfRangeError(SimflockError):
    """A unit-cube coordinate fell outside [0, 1)."""


class NotEnumerableError(SimflockError):
    """Exhaustive enumeration requested for a continuous parameter."""

    def __init__(self, name: str) -> None:
        super().__init__(f"parameter {name!r} has no finite enumerable support")
        self.name = name


class BudgetExceededError(SimflockError):
    """An enumeration would produce more configurations than the cap allows."""


class DimensionTooLargeError(SimflockError):
    """More dimensions requested than direction-number columns shipped."""


class GridExhaustedError(SimflockError):
    """Grid search has visited every point of the enumeration."""


class SingularKernelError(SimflockError):
    """Kernel matrix stayed non-positive-definite after jitter escalation."""


class MissingMetricError(SimflockError):
    """A scheduler report lacked the metric the scheduler tracks."""

    def __init__(self, name: str) -> None:
        super().__init__(f"report is missing metric {name!r}")
        self.name = name


class UnknownTrialError(SimflockError):
    """Scheduler callback for a trial that is not live."""


class MissingOutputError(SimflockError):
    """Simulator output lacked a metric the estimation rule needs."""

    def __init__(self, name: str) -> None:
        super().__init__(f"simulator output is missing metric {name!r}")
        self.name = name


class InvalidSigmaError(SimflockError):
    """Gaussian MLE rule given a nonpositive sigma."""


class NonFiniteValueError(SimflockError):
    """A NaN or infinity where the wire format requires finite numbers."""


class MalformedLineError(SimflockError):
    """A protocol line that does not parse as a valid message."""

    def __init__(self, detail: str, offset: int = 0) -> None:
        super().__init__(detail)
        self.offset = offset


class ProtocolViolationError(SimflockError):
    """A simulator broke the message-sequencing contract."""


class NoWorkersError(SimflockError):
    """run_trials called with an empty worker pool."""


class WorkerUnreachableError(SimflockError):
    """Could not spawn or connect to a worker endpoint."""

    def __init__(self, endpoint: object, detail: str) -> None:
        super().__init__(f"worker {endpoint} unreachable: {detail}")
        self.endpoint = endpoint


class PoolExhaustedError(SimflockError):
    """Every worker endpoint has been marked dead; the study cannot continue."""


class TrialTimeoutError(SimflockError):
    """A trial attempt exceeded its wall-clock allowance."""


class InvalidSpecError(SimflockError):
    """Study spec failed validation; carries every violation found."""

    def __init__(self, reasons: list[str]) -> None:
        super().__init__("invalid study spec: " + "; ".join(reasons))
        self.reasons = reasons


class LifecycleError(SimflockError):
    """Manual-mode study methods called out of order."""

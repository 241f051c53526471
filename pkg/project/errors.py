from typing import Optional


class SchedulerError(ValueError):
    """
    Base class for every error raised deliberately by the scheduler package.
    """


class TraceParseError(SchedulerError):
    """
    A trace CSV row could not be parsed. Carries the 1-based line number of the offending row.
    """

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class TraceStructureError(SchedulerError):
    """
    The trace parsed row by row but its slot indices are not 0, 1, 2, ... without gaps.
    """


class TraceRangeError(SchedulerError):
    """
    A caller asked for slots the trace does not cover.
    """


class InsufficientHistoryError(SchedulerError):
    """
    Too little history to fit the autoregressive model. Callers should fall back to a persistence prediction.
    """


class CapabilityError(SchedulerError):
    """
    The request is well formed but exceeds what the solver supports (e.g. offline oracle horizon).
    """


class ConfigError(SchedulerError):
    """
    An experiment configuration is inconsistent or references something that does not exist.
    """


class SelectionError(SchedulerError):
    """
    A policy simulation failed during online selection.
    """

    def __init__(self, job_index: int, policy_index: int, cause: Optional[BaseException] = None):
        super().__init__(
            f"simulation failed for job k={job_index}, policy m={policy_index}: {cause}"
        )
        self.job_index = job_index
        self.policy_index = policy_index


class AuditError(SchedulerError):
    """
    A simulated job record disagrees with an independent replay or breaks an allocation constraint.
    """

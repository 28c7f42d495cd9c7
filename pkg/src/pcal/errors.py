"""Exception types shared across the package."""


class PcalError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(PcalError, ValueError):
    """A caller-supplied argument violates an operation's contract."""


class PlyParseError(PcalError, ValueError):
    """Malformed PLY input. Carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CheckpointFormatError(PcalError, ValueError):
    """Corrupted or inconsistent checkpoint file."""


class PhaseError(PcalError, RuntimeError):
    """Session operation attempted in a phase that does not allow it."""


class BusyError(PcalError, RuntimeError):
    """Session is running a training job; mutating calls are rejected."""


class ConvergenceError(PcalError, RuntimeError):
    """Simulated session failed to reach its completion threshold."""


class ConfigError(PcalError, ValueError):
    """Invalid experiment configuration. Carries the offending field path."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field

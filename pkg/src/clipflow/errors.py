"""Exception hierarchy. Every error raised on purpose derives from ClipflowError."""


class ClipflowError(Exception):
    pass


class ContractError(ClipflowError, ValueError):
    """A precondition on arguments was violated (e.g. lower > upper)."""


class DimensionError(ClipflowError, ValueError):
    pass


class FieldFormatError(ClipflowError):
    """Malformed field container. ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class RenderError(ClipflowError):
    pass


class DegenerateKernelError(ClipflowError, ValueError):
    pass


class UnsupportedGrowthError(ClipflowError, ValueError):
    pass


class StepSizeError(ClipflowError, ValueError):
    pass


class DomainError(ClipflowError, ValueError):
    pass


class HypothesisError(ClipflowError, ValueError):
    """The hypotheses of a verifier cannot be met by the given system."""


class ConfigError(ClipflowError):
    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} [{', '.join(where)}]"
        super().__init__(message)

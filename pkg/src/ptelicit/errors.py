"""Exception hierarchy shared across the package."""


class PTElicitError(Exception):
    """Base class for all package errors."""


class DomainError(PTElicitError, ValueError):
    """An input lies outside the domain of a closed-form function."""


class ContractError(PTElicitError, ValueError):
    """A structural precondition on a value object was violated."""


class ConfigurationError(PTElicitError, ValueError):
    pass


class ExperimentError(PTElicitError, RuntimeError):
    """An agent could not be queried; carries the lottery being presented."""

    def __init__(self, message, lottery_id=None):
        super().__init__(message)
        self.lottery_id = lottery_id


class EstimationError(PTElicitError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class CIError(PTElicitError, RuntimeError):
    def __init__(self, message, failures=0):
        super().__init__(message)
        self.failures = failures


class SelectionError(PTElicitError, ValueError):
    pass


class InputParseError(PTElicitError, ValueError):
    """Malformed persisted input; ``row`` is 1-based when known."""

    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row

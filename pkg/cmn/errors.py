from __future__ import annotations

# Internal
from typing import ClassVar, Optional


class RelscaleError(ValueError):
    """Base class for every error the engines raise on purpose.

    `exit_code` is the process status the command line reports for it:
    1 for user or validation errors, 2 for feasibility caps,
    3 for numeric or conditioning failures.
    """

    exit_code: ClassVar[int] = 1


class ModelError(RelscaleError):
    """A problem with model or query text, located by line and column when known."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None) -> None:
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)


class ModelSyntaxError(ModelError):
    """The model or query text does not follow the grammar."""


class ModelDefinitionError(ModelError):
    """Well-formed text that declares or uses symbols inconsistently."""


class ConfigurationError(RelscaleError):
    """Command-line options that do not fit together or do not fit the model."""


class UnboundVariableError(RelscaleError):
    pass


class MissingInterpretationError(RelscaleError):
    pass


class UndefinedAsymptoticsError(RelscaleError):
    pass


class RepositoryError(RelscaleError):
    pass


class StateSpaceError(RelscaleError):
    """A configured enumeration cap would be exceeded."""

    exit_code = 2


class NotFactorizableError(RelscaleError):
    exit_code = 2


class ConditioningError(RelscaleError):
    """Conditioning on evidence of probability zero."""

    exit_code = 3


class NumericalError(RelscaleError):
    exit_code = 3

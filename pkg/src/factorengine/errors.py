"""Exception hierarchy shared across the package."""


class FactorEngineError(Exception):
    """Base class for every error raised by factorengine."""


class SchemaError(FactorEngineError):
    """A named column is missing or a schema is malformed."""


class ParseError(FactorEngineError):
    """An input cell or file could not be parsed."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class IntegrityError(FactorEngineError):
    """Duplicate (id, date) keys or another violated table invariant."""


class ParameterError(FactorEngineError, ValueError):
    """A parameter value is out of range, unknown, or missing."""


class RegistrationError(FactorEngineError):
    """A factor name was registered twice or a definition is malformed."""


class FactorLookupError(FactorEngineError, KeyError):
    """A requested factor name does not exist in the registry."""

    def __str__(self):
        return Exception.__str__(self)


class DefinitionError(FactorEngineError):
    """A factor body referenced a column it did not declare or that does not exist."""


class ContractViolation(FactorEngineError):
    """An advanced factor returned something other than a valid (id, date, value) table."""


class EmptyUniverseError(FactorEngineError):
    """A backtest found no overlap between factor values and returns."""

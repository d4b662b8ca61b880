"""Exception hierarchy. Everything a caller can fix is a ValidationError."""


class NgmcError(Exception):
    pass


class ValidationError(NgmcError, ValueError):
    pass


class DomainError(ValidationError):
    """Input outside the validity range of a model (e.g. pathloss distance)."""


class FormatError(ValidationError):
    """Malformed or schema-violating file content."""


class SchemaVersionError(FormatError):
    pass


class UnsupportedError(NgmcError):
    """Valid request outside what an operation implements."""

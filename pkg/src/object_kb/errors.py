"""Exception hierarchy.

Every error carries the process exit code the CLI maps it to:
1 validation, 2 I/O, 3 numeric/sizing.
"""


class KBError(Exception):
    exit_code = 1


class ValidationError(KBError):
    exit_code = 1


class InvalidSpecError(ValidationError):
    pass


class SchemaError(ValidationError):
    """Malformed record or KB file. ``path`` is a JSON-pointer-style location."""

    def __init__(self, message, path="", source=None):
        self.path = path
        self.source = source
        where = f"{source}: " if source else ""
        loc = f"{path or '/'}: "
        super().__init__(f"{where}{loc}{message}")


class ApparatusLimitError(ValidationError):
    pass


class UnsupportedShapeError(ValidationError):
    pass


class NotFoundError(ValidationError):
    pass


class DatasetIOError(KBError):
    exit_code = 2


class NumericError(KBError):
    exit_code = 3


class EmptyInputError(NumericError):
    pass


class InsufficientDataError(NumericError):
    pass


class InvalidGeometryError(NumericError):
    pass


class NoPlaneFoundError(NumericError):
    pass


class DisconnectedManifoldError(NumericError):
    pass

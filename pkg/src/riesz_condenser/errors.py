"""Exception hierarchy shared by all modules."""


class RieszError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatchError(RieszError, ValueError):
    pass


class InvalidGeometryError(RieszError, ValueError):
    pass


class DegeneratePlateError(InvalidGeometryError):
    """A plate ended up with no points."""


class InvalidCondenserError(InvalidGeometryError):
    """The two plates overlap."""


class CloudParseError(RieszError, ValueError):
    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class ModeMisuseError(RieszError, ValueError):
    """A kernel mode was used where it cannot support the requested operation."""


class PoleError(RieszError, ValueError):
    """A point coincides with the inversion pole."""


class InfeasibleProblemError(RieszError, ValueError):
    pass

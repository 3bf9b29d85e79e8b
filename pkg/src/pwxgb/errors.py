"""Exception hierarchy shared by every layer of the pipeline.

The CLI maps these onto exit codes, so each class carries the category it
belongs to (config, data, transport or internal).
"""


class PwxgbError(Exception):
    exit_code = 5


class ConfigError(PwxgbError, ValueError):
    exit_code = 2


class DataError(PwxgbError, ValueError):
    exit_code = 3


class RangeError(DataError):
    """A value falls outside the band an operation can represent."""


class InconsistencyError(PwxgbError):
    """Replicated share words held by two servers disagree."""


class ShapeError(PwxgbError, ValueError):
    pass


class TransportError(PwxgbError):
    exit_code = 4


class FormatError(DataError):
    pass


class GridError(DataError):
    pass


class LengthError(DataError):
    pass


class EmptyIntersectionError(DataError):
    pass


class EmptySetError(DataError):
    pass


class DegenerateError(DataError):
    pass


class EmptySampleSpaceError(DataError):
    pass


class MissingBoundaryError(PwxgbError, KeyError):
    pass

"""Exception hierarchy shared by every stage of the pipeline."""


class EvChargeError(Exception):
    """Base class for all package errors."""


class DataError(EvChargeError):
    """Input data is missing, malformed or inconsistent."""


class MissingColumn(DataError):
    def __init__(self, name):
        super().__init__(f"missing column: {name}")
        self.name = name


class UnknownColumn(DataError):
    def __init__(self, name):
        super().__init__(f"unknown column: {name}")
        self.name = name


class BadValue(DataError):
    def __init__(self, row, column, token):
        super().__init__(f"bad value at row {row}, column {column}: {token!r}")
        self.row = row
        self.column = column
        self.token = token


class EmptyFile(DataError):
    pass


class InvalidRules(DataError):
    pass


class UnseenCategory(DataError):
    def __init__(self, column, token):
        super().__init__(f"unseen category in {column}: {token!r}")
        self.column = column
        self.token = token


class TooFewRows(DataError):
    pass


class BadK(DataError):
    pass


class TooFewFeatures(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class NotNormalized(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class OddDimensions(ShapeMismatch):
    pass


class BadClass(DataError):
    pass


class LengthMismatch(DataError):
    pass


class EmptyMatrix(DataError):
    pass


class EmptySplit(DataError):
    pass


class NotFitted(EvChargeError):
    pass


class FormatError(DataError):
    """A binary artifact (PGM, checkpoint) does not match the pinned format."""


class InternalCheckFailed(EvChargeError):
    pass

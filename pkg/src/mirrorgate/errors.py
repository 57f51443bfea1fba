"""Exception hierarchy shared by every mirrorgate module."""


class MirrorGateError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(MirrorGateError, ValueError):
    pass


class IndexOutOfRange(MirrorGateError, IndexError):
    pass


class RowOutOfRange(IndexOutOfRange):
    pass


class CoordOutOfRange(IndexOutOfRange):
    pass


class DomainError(MirrorGateError, ValueError):
    """A point lies outside the domain of the prox function."""


class UnboundedSet(MirrorGateError, ValueError):
    pass


class MissingRadiusBound(MirrorGateError, ValueError):
    pass


class NoProductiveSteps(MirrorGateError, RuntimeError):
    """The run never reached a point with g(x) <= eps_g, so no average exists."""


class UnsupportedProblemClass(MirrorGateError, ValueError):
    pass


class AllZeroWeights(MirrorGateError, ValueError):
    pass


class MissingReferenceOptimum(MirrorGateError, ValueError):
    pass


class ParseError(MirrorGateError, ValueError):
    """Malformed problem file. Carries the 1-based line (and column if known)."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


class EmptyConstraintRowWarning(UserWarning):
    """A constraint row has no nonzeros; it contributes a constant constraint."""

"""Exception hierarchy.

Every error raised on bad input derives from :class:`ZSLError`; most also
derive from ``ValueError`` so callers that only know the stdlib contract
still catch them.
"""


class ZSLError(Exception):
    """Base class for all package errors."""


# embeddings
class ParseError(ZSLError, ValueError):
    pass


class DimensionMismatch(ZSLError, ValueError):
    pass


class ZeroVector(ZSLError, ValueError):
    pass


class DuplicateName(ZSLError, ValueError):
    pass


class EmptyList(ZSLError, ValueError):
    pass


# graph
class TooFewClasses(ZSLError, ValueError):
    pass


class NameCollision(ZSLError, ValueError):
    pass


class IsolatedUnseen(ZSLError, ValueError):
    pass


class UnseenEdge(ZSLError, ValueError):
    """An edge between two unseen (absorbing) nodes was requested."""


class DanglingTransient(ZSLError, ValueError):
    pass


class UnreachableAbsorber(ZSLError, ValueError):
    pass


class EmptySide(ZSLError, ValueError):
    pass


# chain
class SingularSystem(ZSLError, ArithmeticError):
    pass


class OrderingMismatch(ZSLError, ValueError):
    pass


class AllZeroRow(ZSLError, ValueError):
    pass


class NonDistribution(ZSLError, ValueError):
    pass


# classify
class EmptyScores(ZSLError, ValueError):
    pass


class DegenerateLabels(ZSLError, ValueError):
    pass


class UnknownLabel(ZSLError, ValueError):
    pass


class EmptyClass(ZSLError, ValueError):
    pass


# driver
class ConfigError(ZSLError, ValueError):
    pass

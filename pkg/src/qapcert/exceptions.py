"""Exception hierarchy shared by all qapcert modules."""


class QapcertError(Exception):
    """Base class for every error raised by qapcert."""


class QaplibFormatError(QapcertError, ValueError):
    """A QAPLIB-style text could not be turned into an instance."""


class MalformedTokenError(QaplibFormatError):
    """A token is not an integer."""


class CountMismatchError(QaplibFormatError):
    """The number of tokens does not match the declared dimension."""


class AsymmetricMatrixError(QaplibFormatError):
    """A matrix that must be symmetric is not."""


class NonzeroDiagonalError(QaplibFormatError):
    """A matrix that must have a zero diagonal does not."""


class DimensionMismatchError(QapcertError, ValueError):
    """Two objects that must share a dimension do not."""


class CardinalityError(QapcertError, ValueError):
    """A binary vector does not have the required number of ones."""


class NotSelectorStructure(QapcertError, ValueError):
    """The clone-reduced flow matrix is not a single-class selector."""


class GroupTooLargeError(QapcertError, RuntimeError):
    """Automorphism enumeration exceeded the configured element cap."""


class InfeasibleNodeError(QapcertError, ValueError):
    """A subproblem has no feasible completion."""


class BoundFailure(QapcertError, ArithmeticError):
    """A bounder could not produce a trustworthy value."""


class EnumerationBudgetExceeded(QapcertError, RuntimeError):
    """Exhaustive enumeration would exceed the configured budget."""


class UnknownBounderError(QapcertError, KeyError):
    """No bounder is registered under the requested name."""


class BudgetExhaustedError(QapcertError, RuntimeError):
    """A search or estimation run hit its node budget."""

"""Exception types raised across the package.

Two families: :class:`FormatError` for unreadable or malformed inputs, and
:class:`ContractError` for inputs that parse fine but break an operation's
preconditions.  The CLI maps them to exit codes 2 and 3.
"""


class UaeptError(Exception):
    pass


class FormatError(UaeptError):
    pass


class ContractError(UaeptError, ValueError):
    pass


class EmptyMask(ContractError):
    pass


class OutOfBounds(ContractError):
    pass


class ValueRange(ContractError):
    pass


class ShapeMismatch(ContractError):
    pass


class TooSmall(ContractError):
    pass


class Unreachable(ContractError):
    pass


class NegativeUncertainty(ContractError):
    pass


class InvalidParams(ContractError):
    pass


class TooFewSamples(ContractError):
    pass


class PredictorShapeMismatch(ContractError):
    pass

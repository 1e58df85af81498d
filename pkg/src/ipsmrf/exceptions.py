"""Exception hierarchy shared by every module."""


class IPSError(Exception):
    """Base class for all errors raised by ipsmrf."""


class InputError(IPSError, ValueError):
    """Malformed or inconsistent user input (unknown vertex, bad flag, ...)."""


class ModelContractError(IPSError):
    """A rate function broke locality, predictability or its declared bound."""


class NumericError(IPSError, ArithmeticError):
    """A rate or weight evaluated to a non-finite number."""


class PropernessError(IPSError):
    """Two events of a trajectory share a timestamp."""


class CapacityError(IPSError):
    """An exact computation would exceed its configured size cap."""


class UnsupportedModelError(IPSError):
    """The requested operation is not available for this kind of model."""


class PreconditionError(IPSError, ValueError):
    """An operation's documented precondition does not hold."""


class InsufficientDataError(IPSError):
    """Too few samples for a meaningful statistical test."""

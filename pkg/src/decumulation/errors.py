"""Exception types shared across the package."""


class DecumulationError(Exception):
    """Base class for all package errors."""


class InvalidInputError(DecumulationError, ValueError):
    pass


class OutOfRangeError(InvalidInputError):
    pass


class InvalidStartError(InvalidInputError):
    pass


class InvalidConfigError(InvalidInputError):
    pass


class InvalidDataError(InvalidInputError):
    pass


class InfeasibleActionError(DecumulationError):
    """No admissible action exists at a state."""


class ModelInconsistencyError(DecumulationError):
    """Parameters describe a model that cannot be solved as posed."""

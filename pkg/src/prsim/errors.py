"""Exception types shared across the toolkit."""


class InvalidArgumentError(ValueError):
    """An argument is outside the domain an operation accepts."""


class ContractViolation(ValueError):
    """Array shapes do not match the layer or network they were passed to."""


class TrainingDivergenceError(RuntimeError):
    """A loss or gradient became non-finite during optimisation."""


class InvalidStateError(RuntimeError):
    """An object is not in a state that permits the requested call."""


class ConfigurationError(ValueError):
    """An experiment or simulation configuration is inconsistent."""

"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates a documented precondition."""


class NumericFailureError(RuntimeError):
    """A computation produced non-finite values.

    ``layer_index`` is the offending layer for network passes, ``None``
    for scalar loss computations.
    """

    def __init__(self, message: str, layer_index: int | None = None):
        super().__init__(message)
        self.layer_index = layer_index


class ConfigError(ValueError):
    """Experiment config file could not be parsed or validated."""

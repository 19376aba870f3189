"""Exception types shared across the package."""


class SynrlError(Exception):
    """Base class for all package errors."""


class ShapeError(SynrlError):
    """Matrix/vector dimensions are incompatible."""


class ConfigError(SynrlError):
    """A configuration or manifest failed validation."""


class DivergenceError(SynrlError):
    """Training produced a non-finite loss or weights.

    Carries a diagnostic snapshot: the iteration at which divergence was
    detected and the index of the first offending layer (or None if the
    loss itself was the first non-finite quantity).
    """

    def __init__(self, message, iteration=None, layer_index=None):
        super().__init__(message)
        self.iteration = iteration
        self.layer_index = layer_index

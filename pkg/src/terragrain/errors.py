"""Exception types shared across the pipeline."""


class TerragrainError(Exception):
    """Base class for all pipeline errors."""


class DataError(TerragrainError, ValueError):
    """Malformed or missing input data (manifests, images, anchors, poses)."""


class NumericError(TerragrainError, ArithmeticError):
    """Degenerate numerical state, e.g. a zero-norm embedding."""

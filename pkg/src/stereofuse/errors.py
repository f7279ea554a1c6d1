"""Exception types shared across the toolkit."""


class StereoFuseError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(StereoFuseError, ValueError):
    """Operands have incompatible or illegal sizes."""


class ParameterError(StereoFuseError, ValueError):
    """An argument violates an operation's precondition."""


class PfmParseError(StereoFuseError, ValueError):
    """Malformed PFM input. Carries the byte offset of the failure."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class ImageFormatError(StereoFuseError, ValueError):
    """Unsupported or malformed image file."""


class InsufficientDataError(StereoFuseError, RuntimeError):
    """Too few valid samples to run an estimator."""


class DegenerateInputError(StereoFuseError, ValueError):
    """Input is structurally degenerate (e.g. zero-variance regressor)."""


class EmptyMaskError(StereoFuseError, ValueError):
    """A metric was evaluated over a mask with no valid pixels."""


class SchemaError(StereoFuseError, ValueError):
    """Report documents disagree on their (metric, mask) key sets."""


class SceneSpecError(StereoFuseError, ValueError):
    """A synthetic scene specification is inconsistent or overconstrained."""

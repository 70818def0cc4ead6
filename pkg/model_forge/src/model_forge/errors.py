"""Exception hierarchy for the trainer.

Kept independent from the matching engine's errors: the two packages
meet only at file formats, never at Python types.
"""


class ForgeError(Exception):
    """Base class for every error this package raises on purpose."""


class WeightsUnavailable(ForgeError):
    """Pretrained backbone weights were requested but cannot be loaded."""


class DatasetEmpty(ForgeError):
    """The prepared dataset directory contains no usable images."""


class ExportFailure(ForgeError):
    """The model cannot be serialized to the interchange format."""

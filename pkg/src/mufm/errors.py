"""Exception hierarchy for the matching engine.

Everything raised deliberately by this package derives from MufmError so
callers (CLI, service) can map library failures to exit codes / HTTP
statuses in one place.  OSError is left alone: file-system failures keep
their native type.
"""


class MufmError(Exception):
    """Base class for all engine errors."""


# --- imaging ---------------------------------------------------------------

class UnsupportedFormat(MufmError):
    """Byte stream is not one of the decodable image formats."""


class CorruptStream(MufmError):
    """Image header was recognized but the stream is damaged or truncated."""


class NotColor(MufmError):
    """Operation requires a 3-channel image."""


# --- embedding math --------------------------------------------------------

class ZeroVector(MufmError):
    """Vector norm is zero (or below tolerance); direction undefined."""


class DimensionMismatch(MufmError):
    """Vectors or embedding collections disagree on dimensionality."""


# --- extractor / model runtime --------------------------------------------

class ModelLoadFailure(MufmError):
    """Model file could not be parsed or violates the backbone contract."""


class ShapeMismatch(MufmError):
    """Tensor shape does not match what the loaded model declares."""


class InferenceFailure(MufmError):
    """Model executed but failed to produce a usable output."""


class ParseError(MufmError):
    """Persisted file (embeddings, curve log, manifest) failed to parse."""


class MixedDimensions(MufmError):
    """Embedding collection with nonuniform dimensions cannot be saved."""


class IoError(MufmError):
    """File could not be written (permissions, missing directory, disk)."""


# --- gallery / matching ----------------------------------------------------

class EmptyGallery(MufmError):
    """Gallery index requires at least one entry."""


class NotNormalized(MufmError):
    """Gallery entries must be unit vectors."""


class DuplicateSourceId(MufmError):
    """Source ids must be unique within a gallery or embedding file."""


class EmptyScores(MufmError):
    """Threshold calibration needs nonempty genuine and impostor scores."""


class RoleViolation(MufmError):
    """Gallery must be unmasked and probes masked (unless checks disabled)."""


# --- evaluation ------------------------------------------------------------

class TooFewSubjects(MufmError):
    """Subject split needs at least two subjects."""


class UnknownProbe(MufmError):
    """Match result references a probe id absent from the truth mapping."""


class NonConsecutiveEpochs(MufmError):
    """Curve log epochs must run 1..N without gaps."""

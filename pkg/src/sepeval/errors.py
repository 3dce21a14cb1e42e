"""Exception hierarchy shared by all sepeval modules.

Every error the public API can raise is a subclass of :class:`SepevalError`,
so callers can catch one base class at pipeline boundaries while tests assert
the precise failure mode.
"""


class SepevalError(Exception):
    """Base class for all errors raised by sepeval."""


# --- audio i/o and buffers ----------------------------------------------

class UnsupportedEncoding(SepevalError):
    """WAV encoding other than PCM16/PCM24/IEEE-float32."""


class CorruptHeader(SepevalError):
    """Malformed or truncated RIFF/WAVE structure."""


class EmptyFile(SepevalError):
    """WAV file contains no audio frames."""


class EmptyBuffer(SepevalError):
    """Operation requires a non-empty buffer."""


class LengthMismatch(SepevalError):
    """Inputs must have equal sample/element counts."""


class RateMismatch(SepevalError):
    """Inputs must share one sample rate."""


class BufferTooShort(SepevalError):
    """Buffer shorter than the operation's minimum length."""


class NoQualifyingExcerpt(SepevalError):
    """Random excerpt search exhausted its draw budget."""


# --- loudness -------------------------------------------------------------

class TooShort(SepevalError):
    """Buffer shorter than one loudness gating block."""


class AllBlocksGated(SepevalError):
    """Every gating block fell below the absolute gate."""


# --- waveform-ratio metrics ----------------------------------------------

class ZeroReference(SepevalError):
    """Reference signal is identically zero."""


class SingularSystem(SepevalError):
    """Projection normal equations unsolvable even after regularization."""


# --- spectral metrics -----------------------------------------------------

class GeometryMismatch(SepevalError):
    """Spectrogram frame/bin geometry differs between operands."""


class ZeroTarget(SepevalError):
    """Target spectrogram is identically zero."""


# --- embedding metrics ----------------------------------------------------

class BadMagic(SepevalError):
    """Embedding file does not start with the expected header."""


class DimensionOverflow(SepevalError):
    """Embedding dimensions are zero or implausibly large."""


class TruncatedPayload(SepevalError):
    """Embedding file ends before the declared payload."""


class TooFewFrames(SepevalError):
    """Gaussian fit requires at least two embedding frames."""


class EncoderMismatch(SepevalError):
    """Embedding sequences come from different encoders."""


class DimensionMismatch(SepevalError):
    """Embedding sequences have different dimensionality."""


class NonFiniteInput(SepevalError):
    """Input contains NaN or infinity."""


# --- listening study ------------------------------------------------------

class NotEnoughGoldCandidates(SepevalError):
    """Too few distinct references to draw gold-standard pairs."""


class UnratedStimulus(SepevalError):
    """A stimulus has no retained rating."""


class EmptyInput(SepevalError):
    """Operation requires a non-empty value list."""


# --- rank correlation -----------------------------------------------------

class NonFiniteValue(SepevalError):
    """Rankable values must be finite."""


class TooFewPoints(SepevalError):
    """Correlation requires at least three points."""


class MissingSubset(SepevalError):
    """Metric table lacks one of the required model-type subsets."""

"""Exceptions raised by EmoFuse.

Every error derives from :class:`EmoFuseError` and from the builtin that best
describes it, so callers may catch either ``EmoFuseError`` or e.g. ``ValueError``.
"""


class EmoFuseError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(EmoFuseError, ValueError):
    """Malformed or unknown configuration."""


class SegmentError(EmoFuseError, ValueError):
    """Waveform or spectrogram violates a front-end precondition."""


class ShapeError(EmoFuseError, ValueError):
    """Tensor shapes do not agree."""


class LabelError(EmoFuseError, ValueError):
    """Unknown emotion label or class index outside the class space."""


class ScoreSetError(EmoFuseError, ValueError):
    """Invalid score file or incompatible score sets."""


class ManifestError(EmoFuseError, ValueError):
    """Invalid dataset manifest or fold plan."""


class ChecksumError(EmoFuseError, IOError):
    """Stored file failed its integrity check."""


class VocabularyError(EmoFuseError, ValueError):
    """Empty corpus or token id outside the vocabulary."""


class MetricsError(EmoFuseError, ValueError):
    """Metric undefined for the given counts, e.g. an empty confusion matrix."""


class MissingInputError(EmoFuseError, FileNotFoundError):
    """An artifact a command depends on has not been produced yet."""

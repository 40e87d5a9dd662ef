class ExtractorError(Exception):
    """Base class for extraction-client errors."""


class MediaError(ExtractorError):
    """A clip could not be decoded or is missing a required track."""


class ManifestError(ExtractorError):
    """The media manifest is malformed or inconsistent."""


class EncoderError(ExtractorError):
    """A requested encoder backend is unavailable."""

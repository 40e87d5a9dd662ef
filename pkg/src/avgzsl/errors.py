"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage and configuration problems exit
with 1, data and format problems with 2, numeric failures with 3.
"""


class EngineError(Exception):
    """Base class for every error raised by this package."""


class UsageError(EngineError):
    """Bad command-line invocation."""


class ConfigError(EngineError):
    """Invalid or inconsistent configuration values."""


class DimensionError(EngineError):
    """Operands with incompatible shapes; the message names both."""


class DataError(EngineError):
    """Problems with dataset contents or labels."""


class CorruptArchiveError(DataError):
    """Archive binary files disagree with their manifest."""


class FormatError(DataError):
    """Malformed file contents: bad magic, version, codes, or schema."""


class LabelError(DataError):
    """Class index outside the valid range."""


class ProtocolError(EngineError):
    """Evaluation-protocol precondition violated (e.g. empty eval split)."""


class NumericError(EngineError):
    """Non-finite loss or gradient encountered."""

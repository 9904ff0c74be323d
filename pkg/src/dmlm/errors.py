"""Exception hierarchy shared across the package."""


class DmlmError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgument(DmlmError):
    """A caller-supplied value violates an operation's preconditions."""


class InvalidToken(DmlmError):
    """A token id is out of range or belongs to the wrong modality."""


class EncodingError(DmlmError):
    """Raw input cannot be mapped to tokens (names the offending symbol)."""


class InfeasibleK(DmlmError):
    """Clustering was asked for more centroids than distinct data points."""


class IncompatibleCheckpoint(DmlmError):
    """A checkpoint's layout does not match the requested operation."""


class ChecksumError(DmlmError):
    """A binary file failed integrity verification; nothing was loaded."""


class ManifestMismatch(DmlmError):
    """An input does not validate against the token-space manifest."""


class NumericError(DmlmError):
    """A non-finite value appeared where finite arithmetic is required."""


class EmptyLossError(DmlmError):
    """Every target position is masked; the loss is undefined."""

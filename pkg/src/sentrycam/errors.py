"""Exception types shared across the package."""


class SentryCamError(Exception):
    """Base class for all package-specific failures."""


class FormatError(SentryCamError):
    """A binary payload does not look like one of ours (bad magic, bad header)."""


class CorruptionError(FormatError):
    """Magic and version are fine but the payload size does not match the header."""


class VersionError(FormatError):
    """The format version is not one this build can read."""


class DuplicateEpochError(SentryCamError):
    """Two snapshot files claim the same epoch."""


class DimensionMismatchError(SentryCamError):
    """Snapshots that must share a feature dimension do not."""


class MissingEpochError(SentryCamError):
    """A historical snapshot required by the working memory could not be loaded."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"snapshot for epoch {epoch} could not be loaded")


class InsufficientPointsError(SentryCamError):
    """Fewer points than a k-NN computation needs."""


class DivergenceError(SentryCamError):
    """Projection training produced a non-finite loss."""

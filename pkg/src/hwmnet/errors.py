"""Exception types raised across the package."""


class HWMNetError(Exception):
    """Base class for all package errors."""


class InvalidArgument(HWMNetError, ValueError):
    pass


class InvalidState(HWMNetError, RuntimeError):
    pass


class InvalidDataset(HWMNetError, ValueError):
    pass


class UnsupportedFormat(HWMNetError, ValueError):
    pass


class UnsupportedCheckpoint(HWMNetError, ValueError):
    pass


class NonFiniteLoss(HWMNetError, FloatingPointError):
    """Training produced a NaN/Inf loss; message carries iteration, lr and batch ids."""


class ImageIOError(HWMNetError, OSError):
    """A file could not be read, decoded or written."""


class CheckpointIOError(HWMNetError, OSError):
    """Checkpoint file missing, unreadable or truncated."""

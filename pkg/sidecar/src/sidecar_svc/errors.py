class SidecarError(Exception):
    """Base for everything this package raises on purpose."""


class ModelConfigError(SidecarError):
    """The models file is missing, unreadable, or out of contract."""


class RecordingError(SidecarError):
    """A replay recording could not be completed or written."""

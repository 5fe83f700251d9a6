"""Exception hierarchy shared across the package."""


class KpirootError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(KpirootError, ValueError):
    """A caller-supplied parameter is out of its documented range."""


class InsufficientDataError(KpirootError):
    """The input is too short for the requested operation."""


class IngestionError(KpirootError):
    """A dataset file is malformed; message carries file and line context."""

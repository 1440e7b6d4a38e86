"""Exception types raised by the extraction pipeline."""


class ExtractionError(Exception):
    """Base class for all stimfeat failures."""


class FormattingError(ExtractionError):
    """A stimulus record cannot be rendered as model input."""


class AlignmentError(ExtractionError):
    """The manifest stimulus table does not define a usable row order."""


class ModelLoadError(ExtractionError):
    """A backend could not be constructed for the requested model id."""

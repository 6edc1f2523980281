"""Exception types shared across the package."""


class FilterFitError(Exception):
    """Base class for all package errors."""


class FormatError(FilterFitError):
    """Unsupported image file format or bit depth."""


class DimensionMismatchError(FilterFitError):
    """Two rasters that must share dimensions do not."""


class ImageTooSmallError(FilterFitError):
    """Image smaller than one comparison window at the coarsest scale."""


class NonFiniteError(FilterFitError):
    """A loss or gradient evaluated to NaN/inf (parameterization escape)."""


class StackFileError(FilterFitError):
    """Stack file failed to parse or validate."""

class FusedANNError(Exception):
    """Base class of every error raised by the library."""


class InvalidDimensionError(FusedANNError, ValueError):
    """A vector has the wrong length, or the attribute dimension m is not in
    the interval [1, d]."""


class InvalidArgumentError(FusedANNError, ValueError):
    pass


class EmptyDatasetError(FusedANNError, ValueError):
    pass


class DegenerateSeparationError(FusedANNError, ValueError):
    """Two distinct attribute classes lie at distance zero, so no finite
    alpha can separate them."""


class UnknownAttributeError(FusedANNError, KeyError):
    pass


class InvalidPriorityError(FusedANNError, ValueError):
    pass


class InvalidRangeError(FusedANNError, ValueError):
    """The lower end of a range exceeds the upper end in some component."""


class DegenerateLineError(FusedANNError, ValueError):
    """The operation needs a segment of positive length."""


class RadiusTooLargeError(FusedANNError):
    """
    The search radius, widened by the distance between the query line and the
    indexed line, exceeds the radius the cylindrical index was built with.

    :param float required: the radius the search needs.
    :param float supported: the radius stored in the index.

    """

    def __init__(self, required, supported):
        self.required = required
        self.supported = supported
        super().__init__(
            "Radius {:.6g} too large for this index (built for {:.6g}): "
            "rebuild the range index with a larger Hausdorff slack or query "
            "with fallback enabled.".format(required, supported)
        )


class ParseError(FusedANNError, ValueError):
    """
    Malformed input file.

    :param str message: what went wrong.
    :param int offset: the byte offset (or row number for CSV input) where the
    problem was found.

    """

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = "{} (at offset {})".format(message, offset)
        super().__init__(message)


class IndexLoadError(FusedANNError):
    pass


class ChecksumError(IndexLoadError):
    pass


class UnsupportedVersionError(IndexLoadError):
    pass

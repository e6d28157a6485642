"""Exception types raised by the rooftag package.

Everything derives from RooftagError so callers can catch the whole
family at once. The CLI maps RooftagError (and OSError) to exit code 3
and ConfigError to exit code 2.
"""


class RooftagError(Exception):
    """Base class for all rooftag errors."""


class NotARotation(RooftagError):
    """Matrix is not within reach of a proper rotation (det <= 0 or singular)."""


class BehindCamera(RooftagError):
    """Point has non-positive depth in the camera frame."""


class TagBehindCamera(RooftagError):
    """Recovered tag pose places the tag at non-positive depth."""


class RayParallelToPlane(RooftagError):
    """Back-projection ray does not intersect the requested height plane."""


class NegativeDepth(RooftagError):
    """Back-projection intersection lies behind the camera."""


class DegenerateConfiguration(RooftagError):
    """Point configuration does not determine a unique homography."""


class ImageTooSmall(RooftagError):
    """Image is smaller than the thresholding window."""


class NonFiniteResidual(RooftagError):
    """Residual function returned NaN or infinity at the initial point."""


class EmptySector(RooftagError):
    """Sampling sector has zero area."""


class ConfigError(RooftagError):
    """Scenario configuration is malformed or inconsistent."""

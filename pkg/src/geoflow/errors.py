"""Exception hierarchy shared by all geoflow modules."""


class GeoflowError(Exception):
    """Base class for library errors."""


class DimensionError(GeoflowError, ValueError):
    """A requested dimension is out of range."""


class DimensionMismatch(GeoflowError, ValueError):
    """Two operands disagree in shape."""


class RankDeficient(GeoflowError, ValueError):
    """Sample matrix has lower rank than the requested subspace dimension."""


class AmbientTooSmall(GeoflowError, ValueError):
    """Ambient dimension D is smaller than twice the subspace dimension N."""


class DomainError(GeoflowError, ValueError):
    """Scalar argument outside its admissible interval."""


class DegenerateVector(GeoflowError, ValueError):
    """Vector has (near) zero norm under the kernel inner product."""


class ShapeMismatch(GeoflowError, ValueError):
    """Array shapes are incompatible with the model or target."""


class EmptyEvaluation(GeoflowError, ValueError):
    """No class has a nonzero union; mIoU is undefined."""


class EmptyClassList(GeoflowError, ValueError):
    """Prompt requested with no classes."""


class InsufficientPairs(GeoflowError, ValueError):
    """Too few samples for a statistical study."""


class NonRigidTransform(GeoflowError, ValueError):
    """A view transform produced a pose whose rotation is not proper orthogonal."""


class CameraInsideGeometry(GeoflowError, ValueError):
    """The camera centre lies inside a solid primitive."""


class FormatError(GeoflowError, ValueError):
    """Malformed GFKM file."""

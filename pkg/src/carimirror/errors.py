"""Exception types shared across the engine."""


class CarimirrorError(Exception):
    """Base class for all engine errors."""


class MeshError(CarimirrorError):
    """Invalid or degenerate mesh geometry."""


class TopologyMismatchError(CarimirrorError):
    """Operation received meshes (or weights) with incompatible topology."""


class DegenerateGeometryError(CarimirrorError):
    """Geometry is rank-deficient for the requested solve."""


class ConvergenceError(CarimirrorError):
    """An iterative solver diverged or hit an invalid state."""


class ConfigError(CarimirrorError):
    """Malformed pipeline configuration."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class WeightsFormatError(CarimirrorError):
    """Weights bundle file is malformed, truncated or incompatible."""


class CoverageError(CarimirrorError):
    """Texels on the face chart are not covered by any input view."""

    def __init__(self, message, uncovered=None):
        super().__init__(message)
        self.uncovered = uncovered if uncovered is not None else []

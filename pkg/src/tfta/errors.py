"""Exception types shared across the planner modules."""


class TftaError(Exception):
    """Base class for all planner errors."""


class OutOfMapError(TftaError):
    """Query or flight position left the terrain grid."""


class CollisionError(TftaError):
    """Agent is on or inside a threat surface."""


class DegenerateGeometryError(TftaError):
    """Zero-length direction or vanishing gradient."""


class LimitsExceededError(TftaError):
    """A kinematic command violates the aircraft limits."""


class SingularityError(TftaError):
    """Near-vertical flight path where the track-rate equation blows up."""


class ConfigError(TftaError):
    """Invalid scenario or configuration content."""


class ModelFormatError(TftaError):
    """Unreadable or incompatible model file."""

"""Exception types shared across the package."""


class MultionError(Exception):
    """Base class for all package errors."""


class ParseError(MultionError):
    """World file text is malformed."""


class GenerationError(MultionError):
    """Procedural world generation failed its constraints."""


class InvalidPoint(MultionError):
    """A query point is not navigable."""


class Unreachable(MultionError):
    """Two points lie in different connected components."""


class SamplingExhausted(MultionError):
    """Episode sampling ran out of retries (world too small for the band)."""


class SchemaError(MultionError):
    """A serialized file has an unknown version or bad structure."""


class InconsistentEpisode(MultionError):
    """Episode does not fit the supplied world."""


class SteppedTerminated(MultionError):
    """step() called on a finished episode."""


class PolicyError(MultionError):
    """A policy returned an invalid action id."""


class GeometryMismatch(MultionError):
    """Two map grids do not share compatible geometry."""


class NoPath(MultionError):
    """Planner found no traversable path."""


class NoFrontier(MultionError):
    """No frontier cell remains (map fully explored)."""


class DomainError(MultionError):
    """Metric input outside its domain (e.g. non-positive reference distance)."""


class EmptySet(MultionError):
    """Aggregation over zero records."""


class TraceMismatch(MultionError):
    """Trace header does not match the supplied world/config."""


class ConfigError(MultionError):
    """Run configuration is invalid."""

"""Exception types shared across the package."""


class SceneFillError(Exception):
    """Base class for all scenefill errors."""


class InvalidInputError(SceneFillError):
    """An argument violates a documented precondition (shape, range, class id)."""


class ConfigurationError(SceneFillError):
    """A spec/config combination is inconsistent (channel contracts, enums)."""


class GenerationError(SceneFillError):
    """Synthetic scene generation could not satisfy its placement rules."""


class CheckpointError(SceneFillError):
    """Checkpoint missing, malformed, or incompatible with the taxonomy/config."""


class TrainingError(SceneFillError):
    """Training aborted (non-finite loss, unwritable checkpoint)."""


class MetricError(SceneFillError):
    """A metric is undefined for the given inputs (zero denominator, bad covariance)."""


class RenderError(SceneFillError):
    """Image synthesis backend failed or is unavailable."""

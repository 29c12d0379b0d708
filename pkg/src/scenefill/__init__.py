"""Scene completion from sparse labelmaps.

A two-stage conditional GAN pipeline: hallucinate stuff context from a few
placed objects, hallucinate the remaining things on top, derive instance
boundaries, and hand the result to an image-synthesis backend.
"""

from .errors import (
    CheckpointError,
    ConfigurationError,
    GenerationError,
    InvalidInputError,
    MetricError,
    RenderError,
    SceneFillError,
    TrainingError,
)
from .labelmaps import (
    BoundaryMap,
    DenseLabelmap,
    InstanceMap,
    SoftLabelmap,
    SparseLabelmap,
    decode_argmax,
    encode_one_hot,
    extract_boundaries,
    overlay,
    validate,
)
from .taxonomy import ClassDef, ClassTaxonomy

__version__ = "0.1.0"

__all__ = [
    "BoundaryMap",
    "CheckpointError",
    "ClassDef",
    "ClassTaxonomy",
    "ConfigurationError",
    "DenseLabelmap",
    "GenerationError",
    "InstanceMap",
    "InvalidInputError",
    "MetricError",
    "RenderError",
    "SceneFillError",
    "SoftLabelmap",
    "SparseLabelmap",
    "TrainingError",
    "decode_argmax",
    "encode_one_hot",
    "extract_boundaries",
    "overlay",
    "validate",
    "__version__",
]

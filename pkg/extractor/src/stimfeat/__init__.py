"""Stimulus formatting and model feature extraction.

Renders dataset stimuli (sentences, word clouds, pictures) as model
inputs, runs a backend over them, and writes pooled per-layer
representations as binary tensor files plus a ``features.json`` index
that the analysis pipeline consumes directly.
"""

from .backends import ToyBackend, TransformersBackend
from .errors import (
    AlignmentError,
    ExtractionError,
    FormattingError,
    ModelLoadError,
)
from .extract import FeatureSpec, extract_features, load_stimuli
from .formatting import StimulusText, format_stimulus, image_token_family
from .tensorio import write_tensor

__all__ = [
    "AlignmentError",
    "ExtractionError",
    "FeatureSpec",
    "FormattingError",
    "ModelLoadError",
    "StimulusText",
    "ToyBackend",
    "TransformersBackend",
    "extract_features",
    "format_stimulus",
    "image_token_family",
    "load_stimuli",
    "write_tensor",
]

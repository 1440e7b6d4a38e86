"""Model-brain alignment toolkit: consistency maps, ROIs, encoding, RSA."""

__version__ = "0.1.0"

from .ceiling import ceiling_adjust, expected_ceiling, noise_ceiling
from .consistency import (
    consistency_map,
    semantic_consistency,
    significance_mask,
    split_half_partition,
    probabilistic_map,
    voxel_set_consistency,
)
from .dataset import load_dataset, load_manifest, validate_manifest
from .encoding import (
    FeatureConfig,
    binned_predictivity,
    cv_predictivity,
    quartile_bins,
    ridge_fit,
    select_best_feature_config,
    word_cloud_collapse,
)
from .errors import (
    ConfigError,
    GridMismatchError,
    ManifestError,
    TensorFormatError,
    ZeroVarianceError,
)
from .roi import select_rois
from .rsa import rdm, rsa_score, shuffled_baseline
from .synth import SynthConfig, default_config, generate
from .tensorfile import read_tensor, write_tensor

__all__ = [
    "__version__",
    "ceiling_adjust",
    "expected_ceiling",
    "noise_ceiling",
    "consistency_map",
    "semantic_consistency",
    "significance_mask",
    "split_half_partition",
    "probabilistic_map",
    "voxel_set_consistency",
    "load_dataset",
    "load_manifest",
    "validate_manifest",
    "FeatureConfig",
    "binned_predictivity",
    "cv_predictivity",
    "quartile_bins",
    "ridge_fit",
    "select_best_feature_config",
    "word_cloud_collapse",
    "ConfigError",
    "GridMismatchError",
    "ManifestError",
    "TensorFormatError",
    "ZeroVarianceError",
    "select_rois",
    "rdm",
    "rsa_score",
    "shuffled_baseline",
    "SynthConfig",
    "default_config",
    "generate",
    "read_tensor",
    "write_tensor",
]

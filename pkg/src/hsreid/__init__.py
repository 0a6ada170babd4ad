"""Skin-signature person re-identification on hyperspectral data cubes."""

__version__ = "0.1.0"

from .cube import (
    DEFAULT_RGB_WINDOWS,
    CubeHeader,
    HyperCube,
    RgbImage,
    integrate_to_rgb,
    read_cube,
    rgb_to_cube,
    write_cube,
)
from .segment import (
    GreedyTrace,
    LatticeGraph,
    SuperpixelMap,
    build_graph,
    relabel_canonical,
    segment,
)
from .spectral import SkinSignatureSet, mean_signature, skin_signatures, spectral_angle
from .reid import (
    CmcCurve,
    DatasetManifest,
    DistanceMatrix,
    ManifestEntry,
    cmc,
    distance_matrix,
    image_distance,
    load_manifest,
    rank_of_match,
    save_manifest,
)
from .synth import MetamerPair, SyntheticSpec, generate_dataset, make_metamer_pair
from .config import PipelineConfig
from .pipeline import extract_features, run_pipeline

__all__ = [
    "__version__",
    "DEFAULT_RGB_WINDOWS",
    "CubeHeader",
    "HyperCube",
    "RgbImage",
    "integrate_to_rgb",
    "read_cube",
    "rgb_to_cube",
    "write_cube",
    "GreedyTrace",
    "LatticeGraph",
    "SuperpixelMap",
    "build_graph",
    "relabel_canonical",
    "segment",
    "SkinSignatureSet",
    "mean_signature",
    "skin_signatures",
    "spectral_angle",
    "CmcCurve",
    "DatasetManifest",
    "DistanceMatrix",
    "ManifestEntry",
    "cmc",
    "distance_matrix",
    "image_distance",
    "load_manifest",
    "rank_of_match",
    "save_manifest",
    "MetamerPair",
    "SyntheticSpec",
    "generate_dataset",
    "make_metamer_pair",
    "PipelineConfig",
    "extract_features",
    "run_pipeline",
]

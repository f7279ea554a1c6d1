"""stereofuse: stereo matching with monocular-prior fusion.

Deterministic numerical pipeline: census cost volumes, binary local ordering
maps, Beta-guided iterative refinement, robust affine registration of
monocular depth, and confidence-weighted fusion, with synthetic scenes and a
metrics suite for verification.
"""

from .config import PipelineConfig
from .errors import (
    DegenerateInputError,
    DimensionError,
    EmptyMaskError,
    ImageFormatError,
    InsufficientDataError,
    ParameterError,
    PfmParseError,
    SceneSpecError,
    SchemaError,
    StereoFuseError,
)
from .global_fusion import (
    FusionResult,
    LocalRegistrationConfig,
    RegistrationConfig,
    RegistrationField,
    apply_registration,
    confidence_map,
    fuse,
    huber_irls,
    register_global,
    register_local,
)
from .grid import ImageBuffer, ScalarField, bilinear_resize, warp_horizontal
from .local_fusion import (
    GuidanceField,
    IterationTrace,
    LocalFusionConfig,
    guidance_from_agreement,
    guidance_sample,
    iterate,
    reweight_update,
    sample_gamma,
)
from .loss import LossBreakdown, fd_gradient_check, masked_mae, sequence_loss
from .matching import (
    CensusField,
    CostSlice,
    CostVolume,
    build_cost_volume,
    census_transform,
    lookup,
    matching_update,
    wta_init,
)
from .metrics import (
    EvalReport,
    RegionMask,
    aggregate,
    bad_x,
    epe,
    evaluate,
    mean_std_string,
    occlusion_mask,
    standard_masks,
)
from .ordering import OrderingStack, ordering_agreement, ordering_map, thresholded
from .pipeline import PipelineResult, per_iteration_epe, run_pipeline
from .synth import MonoModel, Scene, SceneSpec, generate_scene

__version__ = "0.1.0"

__all__ = [
    "PipelineConfig",
    "StereoFuseError", "DimensionError", "ParameterError", "PfmParseError",
    "ImageFormatError", "InsufficientDataError", "DegenerateInputError",
    "EmptyMaskError", "SchemaError", "SceneSpecError",
    "ScalarField", "ImageBuffer", "bilinear_resize", "warp_horizontal",
    "CensusField", "CostVolume", "CostSlice",
    "census_transform", "build_cost_volume", "lookup", "wta_init", "matching_update",
    "OrderingStack", "ordering_map", "ordering_agreement", "thresholded",
    "GuidanceField", "IterationTrace", "LocalFusionConfig",
    "guidance_from_agreement", "guidance_sample", "sample_gamma",
    "reweight_update", "iterate",
    "RegistrationField", "RegistrationConfig", "LocalRegistrationConfig",
    "FusionResult", "huber_irls", "register_global", "register_local",
    "apply_registration", "confidence_map", "fuse",
    "RegionMask", "EvalReport", "epe", "bad_x", "occlusion_mask",
    "standard_masks", "evaluate", "aggregate", "mean_std_string",
    "LossBreakdown", "masked_mae", "sequence_loss", "fd_gradient_check",
    "SceneSpec", "MonoModel", "Scene", "generate_scene",
    "PipelineResult", "run_pipeline", "per_iteration_epe",
    "__version__",
]

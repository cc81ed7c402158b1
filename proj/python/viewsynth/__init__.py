"""Camera-controlled image generation from a single image.

Thin Python layer over the C++ core. Images are float arrays in [0, 1]
shaped (H, W, 3); angles are degrees as (elevation, azimuth).
"""

from ._core import (
    Error,
    ValidationError,
    ViewSpec,
    angular_distance,
    build_target_prompt,
    build_view_prefix,
    config_defaults,
    config_hash,
    default_supported_views,
    evaluate_metrics,
    evaluation_views,
    generate,
    load_manifest,
    lpips_distance,
    mutual_information,
    parse_view_list,
    resolve_config,
    run_cli,
    snap_view,
    soft_histogram,
    validation_split,
)

__all__ = [
    "Error",
    "ValidationError",
    "ViewSpec",
    "angular_distance",
    "build_target_prompt",
    "build_view_prefix",
    "config_defaults",
    "config_hash",
    "default_supported_views",
    "evaluate_metrics",
    "evaluation_views",
    "generate",
    "load_manifest",
    "lpips_distance",
    "mutual_information",
    "parse_view_list",
    "resolve_config",
    "run_cli",
    "snap_view",
    "soft_histogram",
    "validation_split",
]

__version__ = "0.1.0"

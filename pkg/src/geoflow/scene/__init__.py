"""Synthetic car-view / drone-view street scenes."""
from .camera import (
    CameraPose,
    ViewTransform,
    apply_view_transform,
    elevation_transform,
    identity_transform,
    intrinsics,
    transform_between,
)
from .config import CLASSES, DEFAULT_PALETTE, SceneConfig, SceneTemplate, sample_scene
from .dataset import generate_views, load_domain, load_manifest, make_cross_view_dataset
from .features import area_downsample, featurize, soft_mask
from .render import VOID, render

__all__ = [
    "CLASSES", "DEFAULT_PALETTE", "VOID", "CameraPose", "SceneConfig", "SceneTemplate", "ViewTransform",
    "apply_view_transform", "area_downsample", "elevation_transform", "featurize", "generate_views",
    "identity_transform", "intrinsics", "load_domain", "load_manifest", "make_cross_view_dataset", "render",
    "sample_scene", "soft_mask", "transform_between",
]

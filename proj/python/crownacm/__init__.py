"""Multi-object active-contour refinement on class-probability rasters."""

from ._crownacm import (
    SceneSpec,
    ShapeModel,
    __version__,
    gaussian_blur,
    iou,
    learn_shape_model,
    load_shape_model,
    mask_to_sdf,
    refine,
    render_scene,
    smooth_union,
    total_energy,
)

__all__ = [
    "SceneSpec",
    "ShapeModel",
    "__version__",
    "gaussian_blur",
    "iou",
    "learn_shape_model",
    "load_shape_model",
    "mask_to_sdf",
    "refine",
    "render_scene",
    "smooth_union",
    "total_energy",
]

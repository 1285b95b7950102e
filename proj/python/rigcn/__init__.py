"""Rotation-invariant point cloud recognition with graph convolutions."""

from ._rigcn import (
    ConfigError,
    Error,
    InvalidArgumentError,
    InvalidInputError,
    Model,
    TrainingDivergenceError,
    dilated_knn,
    estimate_lrf,
    farthest_point_sampling,
    generate_shape,
    knn_graph,
    load_checkpoint,
    normalize_unit_sphere,
    random_rotation,
    renormalize,
    run_cli,
    synthetic_families,
)

__all__ = [
    "ConfigError",
    "Error",
    "InvalidArgumentError",
    "InvalidInputError",
    "Model",
    "TrainingDivergenceError",
    "dilated_knn",
    "estimate_lrf",
    "farthest_point_sampling",
    "generate_shape",
    "knn_graph",
    "load_checkpoint",
    "normalize_unit_sphere",
    "random_rotation",
    "renormalize",
    "run_cli",
    "synthetic_families",
]

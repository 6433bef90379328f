"""Fisale: latent ALE grid surrogate for fluid-solid interaction."""

from ._fisale import (
    DimensionError,
    FormatError,
    Model,
    ModelConfig,
    NumericError,
    PistonParams,
    attention_logits,
    cylinder_flow,
    damped_oscillator,
    evaluate,
    generate_piston_dataset,
    grad_check,
    knn_edges,
    linear_attention,
    read_trajectory,
    relative_l2,
    rmse_metric,
    rollout,
    run_piston,
    seed_regular_grid,
    softmax,
    train,
    write_trajectory,
)

__all__ = [
    "DimensionError",
    "FormatError",
    "Model",
    "ModelConfig",
    "NumericError",
    "PistonParams",
    "attention_logits",
    "cylinder_flow",
    "damped_oscillator",
    "evaluate",
    "generate_piston_dataset",
    "grad_check",
    "knn_edges",
    "linear_attention",
    "read_trajectory",
    "relative_l2",
    "rmse_metric",
    "rollout",
    "run_piston",
    "seed_regular_grid",
    "softmax",
    "train",
    "write_trajectory",
]

"""Python bindings for the cordvip library."""

from ._core import (
    ConfigError,
    Error,
    FormatError,
    IoError,
    KinematicChain,
    NumericError,
    ShapeError,
    __version__,
    aligned_distance,
    alpha_bar,
    bench_fk,
    contact_map,
    ddim_timesteps,
    estimate_normals,
    evaluate,
    farthest_point_sample,
    gen_data,
    knn,
    toy,
)

__all__ = [
    "ConfigError",
    "Error",
    "FormatError",
    "IoError",
    "KinematicChain",
    "NumericError",
    "ShapeError",
    "aligned_distance",
    "alpha_bar",
    "bench_fk",
    "contact_map",
    "ddim_timesteps",
    "estimate_normals",
    "evaluate",
    "farthest_point_sample",
    "gen_data",
    "knn",
    "toy",
]

"""Bezier triangle surfaces rendered with boundary-aware Gaussian splatting."""

from ._core import (  # noqa: F401
    Camera,
    ContractError,
    DimensionError,
    Error,
    FormatError,
    IoError,
    MissingFileError,
    NumericError,
    Scene,
    VersionError,
    chamfer,
    evaluate_surface,
    gradient_check,
    init_from_cube,
    init_from_points,
    load_checkpoint,
    load_dataset,
    make_dataset,
    psnr,
    render,
    save_checkpoint,
    ssim,
    subdivide,
    train,
)

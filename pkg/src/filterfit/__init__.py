"""Local parametric image filters with analytic gradients and a per-image
Adam fitter.

The package implements three filter families (graduated, elliptical,
cubic polynomial), their product/sum fusion into a residual enhancement
pipeline, a CIELab-L1 + MS-SSIM training loss with hand-derived gradients,
and an optimizer that recovers filter parameters from (input, target)
image pairs.
"""

from .color import lab_to_rgb, rgb_to_lab
from .errors import (
    DimensionMismatchError,
    FilterFitError,
    FormatError,
    ImageTooSmallError,
    NonFiniteError,
    StackFileError,
)
from .filters import (
    CUBIC10,
    CUBIC20,
    CubicParams,
    EllipticalParams,
    GraduatedParams,
    binarize_inversion,
    cubic_apply,
    elliptical_field,
    graduated_field,
)
from .fit import Adam, FitConfig, FitReport, fit, init_stack
from .grad import finite_diff, finite_diff_grad, loss_and_grad
from .image import coord_grid, load_image, save_image
from .metrics import (
    LossWeights,
    MsssimConfig,
    l1_lab,
    lab_msssim_loss,
    msssim_l,
    psnr,
    ssim,
)
from .pipeline import (
    FilterStack,
    PipelineOutput,
    combine_branches,
    fuse_same_type,
    pipeline_forward,
)
from .stackio import read_stack, write_stack

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "CUBIC10",
    "CUBIC20",
    "CubicParams",
    "DimensionMismatchError",
    "EllipticalParams",
    "FilterFitError",
    "FilterStack",
    "FitConfig",
    "FitReport",
    "FormatError",
    "GraduatedParams",
    "ImageTooSmallError",
    "LossWeights",
    "MsssimConfig",
    "NonFiniteError",
    "PipelineOutput",
    "StackFileError",
    "binarize_inversion",
    "combine_branches",
    "coord_grid",
    "cubic_apply",
    "elliptical_field",
    "finite_diff",
    "finite_diff_grad",
    "fit",
    "fuse_same_type",
    "graduated_field",
    "init_stack",
    "l1_lab",
    "lab_msssim_loss",
    "lab_to_rgb",
    "load_image",
    "loss_and_grad",
    "msssim_l",
    "pipeline_forward",
    "psnr",
    "read_stack",
    "rgb_to_lab",
    "save_image",
    "ssim",
    "write_stack",
]

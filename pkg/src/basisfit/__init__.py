"""Sparse-to-dense depth reconstruction by least-squares basis fitting.

A depth map is decoded from dense basis channels as g(w . b) where g is an
invertible activation with a positive lower bound.  The weights w come from
a closed-form ridge fit to sparse depth samples, optionally refined by a
fixed number of Huber-robustified Gauss-Newton steps, and the whole fit is
differentiable with respect to the basis values and the measurements.
"""

from .activation import ActivationKind, DepthActivation
from .backward import (
    FitGradients,
    FitProblem,
    backward_gn,
    backward_linear,
    finite_diff_oracle,
)
from .errors import BasisFitError
from .fitter import (
    BasisStack,
    DepthGrid,
    FitConfig,
    FitResult,
    SparseDepthSet,
    fit_gauss_newton,
    fit_linear,
    huber_factors,
    predict_dense,
    standardized_residuals,
)
from .gridio import read_grid, read_sparse_set, write_grid, write_sparse_set
from .metrics import MetricReport, evaluate
from .multiscale import (
    MultiScaleBases,
    ScaleWeights,
    flatten_to_stack,
    reconstruct_at_scale,
    stacked_field,
    upsample_bilinear,
)
from .synth import (
    BasisMode,
    SamplerConfig,
    Scene,
    SceneKind,
    SparseSample,
    generate_bases,
    generate_scene,
    sample_sparse,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationKind",
    "BasisFitError",
    "BasisMode",
    "BasisStack",
    "DepthActivation",
    "DepthGrid",
    "FitConfig",
    "FitGradients",
    "FitProblem",
    "FitResult",
    "MetricReport",
    "MultiScaleBases",
    "SamplerConfig",
    "ScaleWeights",
    "Scene",
    "SceneKind",
    "SparseDepthSet",
    "SparseSample",
    "backward_gn",
    "backward_linear",
    "evaluate",
    "finite_diff_oracle",
    "fit_gauss_newton",
    "fit_linear",
    "flatten_to_stack",
    "generate_bases",
    "generate_scene",
    "huber_factors",
    "predict_dense",
    "read_grid",
    "read_sparse_set",
    "reconstruct_at_scale",
    "sample_sparse",
    "stacked_field",
    "standardized_residuals",
    "upsample_bilinear",
    "write_grid",
    "write_sparse_set",
    "__version__",
]

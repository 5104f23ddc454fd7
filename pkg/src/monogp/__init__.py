"""Gaussian process surrogates with monotonicity constraints enforced at
virtual points."""

__version__ = "0.1.0"

from .kernels import (
    DerivSpec,
    DimensionError,
    KernelParams,
    NumericalError,
    cov_block,
)
from .gp_core import (
    Dataset,
    GaussianPrediction,
    GpModel,
    fit_hyperparameters,
    log_marginal_likelihood,
    posterior_value,
    predict_enhanced,
    predict_values_from_derivs,
)
from .sampling import RngStream, SampleBatch, TargetDensity, nuts_sample
from .constrained import (
    ConstrainedPrediction,
    ConstrainedProblem,
    VirtualDesign,
    build_problem,
    predict_constrained,
    sample_relu_gibbs,
    sample_relu_nuts,
    sample_rlrto,
    sample_truncated_gibbs,
    sample_truncated_nuts,
)
from .design import DomainBox, latin_hypercube, sobol_points
from .diagnostics import MetricsReport, ci_width, ess_per_second, iat, mean_iat, mse
from .applications import ConvDiffConfig, SirConfig, solve_convdiff, solve_sir
from .experiments import (
    ExperimentConfig,
    REGISTRY,
    run_experiment,
    run_suite,
)

__all__ = [
    "__version__",
    "DerivSpec", "DimensionError", "KernelParams", "NumericalError", "cov_block",
    "Dataset", "GaussianPrediction", "GpModel", "fit_hyperparameters",
    "log_marginal_likelihood", "posterior_value", "predict_enhanced",
    "predict_values_from_derivs",
    "RngStream", "SampleBatch", "TargetDensity", "nuts_sample",
    "ConstrainedPrediction", "ConstrainedProblem", "VirtualDesign",
    "build_problem", "predict_constrained", "sample_relu_gibbs",
    "sample_relu_nuts", "sample_rlrto", "sample_truncated_gibbs",
    "sample_truncated_nuts",
    "DomainBox", "latin_hypercube", "sobol_points",
    "MetricsReport", "ci_width", "ess_per_second", "iat", "mean_iat", "mse",
    "ConvDiffConfig", "SirConfig", "solve_convdiff", "solve_sir",
    "ExperimentConfig", "REGISTRY", "run_experiment", "run_suite",
]

"""Feature selection from factor-model data under noisy non-linear
single-index observations: constrained loss minimization, optimal
representations, mean-width bounds, synthetic spectra, and an experiment
harness."""

from .core import (
    DimensionError,
    NotPositiveSemidefiniteError,
    RngStream,
    operator_norm,
    sym_sqrt,
)
from .estimator import FitResult, NumericalError, SolverConfig, fit, lasso, to_signal_domain
from .geometry import (
    ConstraintSet,
    SetImage,
    bound_l1_image,
    bound_polytope,
    bound_slepian,
    bound_sparse,
    distance,
    effdim_mc,
    identity_image,
    l1_ball,
    l2_ball,
    mean_width_mc,
    polytope,
    project,
    support_function,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    ExperimentResult,
    ExperimentRow,
    cli_main,
    run_experiment,
    run_meanwidth_report,
    run_model_params_report,
    run_ms_recovery,
    run_noise_bounds,
    run_rate,
)
from .loss import (
    IncompatibleLossError,
    LossFunction,
    ModelParams,
    logistic_loss,
    model_params,
    square_loss,
    verify_loss_conditions,
)
from .model import (
    FactorModel,
    Nonlinearity,
    SampleSet,
    adversarial_epsilon,
    extended_dictionary,
    sample,
    sigma_weighted_extended_dictionary,
)
from .msdata import (
    MsModelSpec,
    PeakSpec,
    build_factor_model,
    build_raw_dictionaries,
    empirical_standardize,
    standardize_dictionaries,
    suggested_radius,
)
from .representation import (
    InfeasibleRepresentationError,
    Representation,
    bitflip_probability,
    linear_mismatch_std,
    noise_parameter,
    optimal_representation,
    rescaled_outputs,
    selection_error,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConstraintSet",
    "DimensionError",
    "ExperimentConfig",
    "ExperimentResult",
    "ExperimentRow",
    "FactorModel",
    "FitResult",
    "IncompatibleLossError",
    "InfeasibleRepresentationError",
    "LossFunction",
    "ModelParams",
    "MsModelSpec",
    "Nonlinearity",
    "NotPositiveSemidefiniteError",
    "NumericalError",
    "PeakSpec",
    "Representation",
    "RngStream",
    "SampleSet",
    "SetImage",
    "SolverConfig",
    "adversarial_epsilon",
    "bitflip_probability",
    "bound_l1_image",
    "bound_polytope",
    "bound_slepian",
    "bound_sparse",
    "build_factor_model",
    "build_raw_dictionaries",
    "cli_main",
    "distance",
    "effdim_mc",
    "empirical_standardize",
    "extended_dictionary",
    "fit",
    "identity_image",
    "l1_ball",
    "l2_ball",
    "lasso",
    "linear_mismatch_std",
    "logistic_loss",
    "mean_width_mc",
    "model_params",
    "noise_parameter",
    "operator_norm",
    "optimal_representation",
    "polytope",
    "project",
    "rescaled_outputs",
    "run_experiment",
    "run_meanwidth_report",
    "run_model_params_report",
    "run_ms_recovery",
    "run_noise_bounds",
    "run_rate",
    "sample",
    "selection_error",
    "sigma_weighted_extended_dictionary",
    "square_loss",
    "standardize_dictionaries",
    "suggested_radius",
    "support_function",
    "sym_sqrt",
    "to_signal_domain",
    "verify_loss_conditions",
]

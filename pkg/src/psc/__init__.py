"""Principal stratification causal effects through copula-linked principal densities."""

from .copula import CopulaSpec, copula_density, copula_scores
from .data import Dataset, parse_dataset, write_dataset
from .errors import (ConfigError, DomainError, EstimationError, NoOverlapError, NumericalError,
                     PSCError, SchemaError, SeparationError, UnidentifiedModelError,
                     ValidationError, InsufficientDataError)
from .estimators import (ESTIMATORS, EstimateReport, EstimationInputs, estimate, estimate_eif,
                         estimate_pd_om, estimate_tau, estimate_tp_pd, plugin_variance)
from .nuisance import NuisanceFit, fit_nuisance
from .pipeline import PipelineConfig, build_inputs, fit_pipeline
from .principal_density import PrincipalDensityModel
from .simulation import DgpConfig, McStudyConfig, generate_dgp, run_mc_study, true_eta
from .working_model import WorkingModelSpec, basis_eval

__all__ = [
    "CopulaSpec", "copula_density", "copula_scores",
    "Dataset", "parse_dataset", "write_dataset",
    "ConfigError", "DomainError", "EstimationError", "InsufficientDataError", "NoOverlapError",
    "NumericalError", "PSCError", "SchemaError", "SeparationError", "UnidentifiedModelError",
    "ValidationError",
    "ESTIMATORS", "EstimateReport", "EstimationInputs", "estimate", "estimate_eif",
    "estimate_pd_om", "estimate_tau", "estimate_tp_pd", "plugin_variance",
    "NuisanceFit", "fit_nuisance",
    "PipelineConfig", "build_inputs", "fit_pipeline",
    "PrincipalDensityModel",
    "DgpConfig", "McStudyConfig", "generate_dgp", "run_mc_study", "true_eta",
    "WorkingModelSpec", "basis_eval",
]

__version__ = "0.1.0"

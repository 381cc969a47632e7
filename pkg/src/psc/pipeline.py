"""End-to-end fitting: nuisances, principal density and quadrature grid from a dataset."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

from .copula import CopulaSpec
from .data import Dataset
from .errors import ConfigError
from .estimators import EstimationInputs
from .nuisance import DEFAULT_CLAMP, NuisanceFit, fit_nuisance
from .numerics import DEFAULT_NODES, MAX_NODES, MIN_NODES
from .principal_density import PrincipalDensityModel
from .working_model import WorkingModelSpec


@dataclass(frozen=True)
class PipelineConfig:
    rho: float = 0.0
    copula: str = "gaussian"
    basis: str = "1,s1,s0"
    weight: str = "uniform"
    nodes: int = DEFAULT_NODES
    clamp: float = DEFAULT_CLAMP
    bandwidth_s: float | None = None
    bandwidth_x: float | None = None

    def __post_init__(self):
        errors = []
        try:
            CopulaSpec(self.copula, self.rho)
        except ValueError as exc:
            errors.append(str(exc))
        if not MIN_NODES <= self.nodes <= MAX_NODES:
            errors.append(f"grid nodes must lie in [{MIN_NODES}, {MAX_NODES}], got {self.nodes}")
        if not 0.0 <= self.clamp < 0.5:
            errors.append(f"propensity clamp must lie in [0, 0.5), got {self.clamp}")
        for name in ("bandwidth_s", "bandwidth_x"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                errors.append(f"{name} must be positive, got {v}")
        if errors:
            raise ConfigError("; ".join(errors))

    def with_rho(self, rho: float) -> "PipelineConfig":
        return replace(self, rho=rho)

    def as_dict(self) -> dict:
        return asdict(self)


def fit_nuisances(data: Dataset, cfg: PipelineConfig) -> NuisanceFit:
    data.validate()
    return fit_nuisance(data, cfg.clamp, cfg.bandwidth_s, cfg.bandwidth_x)


def build_inputs(data: Dataset, nuisance: NuisanceFit, cfg: PipelineConfig,
                 working_model: WorkingModelSpec | None = None) -> EstimationInputs:
    wm = working_model or WorkingModelSpec.parse(cfg.basis, cfg.weight)
    pdm = PrincipalDensityModel.build(CopulaSpec(cfg.copula, cfg.rho),
                                      nuisance.density1, nuisance.density0, data.x)
    return EstimationInputs(data, nuisance, pdm, wm, wm, pdm.grid(cfg.nodes))


def fit_pipeline(data: Dataset, cfg: PipelineConfig | None = None,
                 working_model: WorkingModelSpec | None = None) -> EstimationInputs:
    cfg = cfg or PipelineConfig()
    return build_inputs(data, fit_nuisances(data, cfg), cfg, working_model)

"""
config_schema.py - JSON run configurations for the quilt command line.

Every command reads one JSON file. The file is validated here before any
computation; unknown keys are rejected and reported by their dotted path.
"""

#####################################
# Import Modules
#####################################

# Import packages from Python Standard Library
import json
import pathlib
from typing import Any, Literal, Optional, Union

# Import external packages
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

# Import functions from local modules
from evaluation.sweep import METHODS, MethodSettings
from quilting.exceptions import ConfigError
from quilting.madgq import DEFAULT_TAU1_GRID
from simulation.simgen import GraphSpec, MarginalSpec, ScenarioConfig
from utils.utils_logger import logger

Method = Literal["madgq-npn", "bsvd-npn", "zero-impute"]
StatisticName = Literal["rho", "tau", "pearson"]

#####################################
# Scenario models
#####################################


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GraphModel(StrictModel):
    p: int = Field(100, ge=2)
    structure: Literal["small_world", "chain", "block_diagonal"] = "small_world"
    neighbors: int = 2
    rewire_prob: float = 0.1
    block_size: int = 5
    edge_weight_range: tuple[float, float] = (0.2, 0.5)
    diagonal_boost: float = 0.1

    def to_spec(self) -> GraphSpec:
        return GraphSpec(**self.model_dump())


class MarginalModel(StrictModel):
    family: Literal["gaussian", "gamma", "cauchy"] = "gaussian"
    shape: float = 5.0
    scale: float = 1.0
    location: float = 0.0

    def to_spec(self) -> MarginalSpec:
        return MarginalSpec(**self.model_dump())


class ScenarioModel(StrictModel):
    name: str = "scenario"
    graph: GraphModel = GraphModel()
    marginal: MarginalModel = MarginalModel()
    K: int = Field(2, ge=1)
    o: int = Field(60, ge=1)
    n_per_block: int = Field(2000, ge=3)
    covariance: Literal["precision", "spiked"] = "precision"
    spiked_rank: int = Field(3, ge=1)
    spiked_gap: float = Field(10.0, gt=1.0)
    sample_mode: Literal["independent", "shared"] = "independent"

    def to_config(self) -> ScenarioConfig:
        return ScenarioConfig(
            name=self.name,
            graph=self.graph.to_spec(),
            marginal=self.marginal.to_spec(),
            K=self.K,
            o=self.o,
            n_per_block=self.n_per_block,
            covariance=self.covariance,
            spiked_rank=self.spiked_rank,
            spiked_gap=self.spiked_gap,
            sample_mode=self.sample_mode,
        )


class BlockSweepModel(StrictModel):
    """Either a list of block sizes o at fixed K, or a list of K at fixed K*o = slots."""

    o: Optional[list[int]] = None
    K: Optional[list[int]] = None
    slots: Optional[int] = None

    @model_validator(mode="after")
    def _one_axis(self) -> "BlockSweepModel":
        if (self.o is None) == (self.K is None):
            raise ValueError("block_sweep needs exactly one of 'o' or 'K'")
        if self.K is not None and self.slots is None:
            raise ValueError("block_sweep over 'K' needs 'slots' (the fixed K*o)")
        return self

    def expand(self, base: ScenarioModel) -> list[ScenarioModel]:
        if self.o is not None:
            return [
                base.model_copy(update={"o": o, "name": f"{base.name}_o{o}"}) for o in self.o
            ]
        return [
            base.model_copy(update={"K": k, "o": self.slots // k, "name": f"{base.name}_K{k}"})
            for k in self.K
        ]


#####################################
# Command models
#####################################


class SimulateConfig(StrictModel):
    scenario: ScenarioModel = ScenarioModel()
    seed: Optional[int] = None


class MethodSettingsModel(StrictModel):
    lambda_grid: list[float] = Field(default_factory=lambda: [0.01, 0.02, 0.04, 0.08, 0.16])
    tau1_grid: list[float] = Field(default_factory=lambda: list(DEFAULT_TAU1_GRID))
    tau2_scale: float = Field(0.05, gt=0)
    rank_grid: list[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5])
    penalty_rule: Literal["uniform", "pairwise"] = "uniform"
    solver_tolerance: float = Field(1e-4, gt=0)
    max_sweeps: int = Field(500, ge=1)
    madgq_tuning: Literal["f1_oracle", "match_bsvd"] = "f1_oracle"
    match_lambda: float = Field(0.04, ge=0)
    spike_floor: Literal["diagonal_median", "eigen_median"] = "diagonal_median"

    def to_settings(self) -> MethodSettings:
        values = self.model_dump()
        for key in ("lambda_grid", "tau1_grid", "rank_grid"):
            values[key] = tuple(values[key])
        return MethodSettings(**values)


class BenchmarkConfig(StrictModel):
    scenarios: list[ScenarioModel] = Field(default_factory=list)
    base: Optional[ScenarioModel] = None
    block_sweep: Optional[BlockSweepModel] = None
    methods: list[Method] = Field(default_factory=lambda: list(METHODS))
    replicates: int = Field(50, ge=1)
    seed: Optional[int] = None
    statistic: Optional[StatisticName] = None
    threads: Optional[int] = Field(None, ge=1)
    settings: MethodSettingsModel = MethodSettingsModel()

    @model_validator(mode="after")
    def _has_scenarios(self) -> "BenchmarkConfig":
        if self.block_sweep is not None and self.base is None:
            raise ValueError("block_sweep needs a 'base' scenario")
        if not self.scenarios and self.base is None:
            raise ValueError("give 'scenarios' or a 'base' scenario")
        return self

    def scenario_configs(self) -> list[ScenarioConfig]:
        expanded = list(self.scenarios)
        if self.base is not None:
            expanded += self.block_sweep.expand(self.base) if self.block_sweep else [self.base]
        return [scenario.to_config() for scenario in expanded]


class EstimateConfig(StrictModel):
    """Estimate a graph from a directory holding design.json and block_{k}.csv files."""

    data_dir: str
    method: Method = "madgq-npn"
    statistic: Optional[StatisticName] = None
    lam: float = Field(0.05, ge=0)
    lambda_grid: Optional[list[float]] = None
    selection: Literal["fixed", "ebic", "stability"] = "fixed"
    ebic_gamma: float = Field(0.5, ge=0)
    n_subsamples: int = Field(20, ge=2)
    subsample_fraction: float = Field(0.5, gt=0, lt=1)
    penalty_rule: Literal["uniform", "pairwise"] = "uniform"
    tau1: Optional[float] = Field(None, gt=0)
    tau1_grid: list[float] = Field(default_factory=lambda: list(DEFAULT_TAU1_GRID), min_length=1)
    tau2: Optional[float] = Field(None, gt=0)
    c: float = Field(0.05, gt=0)
    rank: Optional[int] = Field(None, ge=1)
    rank_grid: list[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5])
    spike_floor: Literal["diagonal_median", "eigen_median"] = "diagonal_median"
    tolerance: float = Field(1e-6, gt=0)
    max_sweeps: int = Field(2000, ge=1)
    seed: Optional[int] = None

    @model_validator(mode="after")
    def _grid_for_selection(self) -> "EstimateConfig":
        if self.selection != "fixed" and not self.lambda_grid:
            raise ValueError(f"selection={self.selection!r} needs a nonempty 'lambda_grid'")
        return self


class DiagnoseConfig(StrictModel):
    """Population diagnostics for a true precision matrix (CSV) under a design (JSON)."""

    theta_csv: str
    design_json: str
    tau1: Optional[float] = Field(None, gt=0)
    tau2: Optional[float] = Field(None, gt=0)
    edges_csv: Optional[str] = None


COMMAND_MODELS: dict[str, type[StrictModel]] = {
    "simulate": SimulateConfig,
    "estimate": EstimateConfig,
    "benchmark": BenchmarkConfig,
    "diagnose": DiagnoseConfig,
}

AnyConfig = Union[SimulateConfig, EstimateConfig, BenchmarkConfig, DiagnoseConfig]

#####################################
# Loading
#####################################


def _error_keys(error: ValidationError) -> list[str]:
    return [".".join(str(part) for part in item["loc"]) or "<root>" for item in error.errors()]


def parse_config(command: str, raw: dict[str, Any]) -> AnyConfig:
    """Validate a decoded JSON object for one command; ConfigError lists offending keys."""
    if command not in COMMAND_MODELS:
        msg = f"unknown command {command!r}"
        logger.error(msg)
        raise ConfigError(msg, [command])
    if not isinstance(raw, dict):
        msg = f"{command} config must be a JSON object, got {type(raw).__name__}"
        logger.error(msg)
        raise ConfigError(msg)
    try:
        return COMMAND_MODELS[command].model_validate(raw)
    except ValidationError as e:
        keys = _error_keys(e)
        details = "; ".join(
            f"{key}: {item['msg']}" for key, item in zip(keys, e.errors())
        )
        msg = f"invalid {command} config: {details}"
        logger.error(msg)
        raise ConfigError(msg, keys) from None


def load_config(command: str, path: Optional[pathlib.Path]) -> AnyConfig:
    """Read and validate a JSON config; no path means all defaults."""
    if path is None:
        return parse_config(command, {})
    try:
        raw = json.loads(pathlib.Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        msg = f"config {path} is not valid JSON: {e}"
        logger.error(msg)
        raise ConfigError(msg) from None
    logger.info(f"Loaded {command} config from {path}")
    return parse_config(command, raw)


def config_digest_source(config: AnyConfig) -> str:
    """Canonical JSON of a validated config, used for the manifest hash."""
    return json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

import logging
import tomllib
from enum import Enum
from pathlib import Path
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from project.errors import ConfigError
from project.forecaster import DEFAULT_AR_ORDER, MagnitudeMode, NoiseDistribution, NoiseSpec
from project.job_model import JobSpec, OverheadModel, ThroughputModel
from project.market_model import DEFAULT_AVAIL_CAP, TraceSynthSpec
from project.policies import PolicySpec, build_policy_pool, parse_policy

logger = logging.getLogger(__name__)


class ExperimentKind(str, Enum):
    SIMULATE = "simulate"
    SWEEP_DEADLINE = "sweep_deadline"
    SWEEP_OVERHEAD = "sweep_overhead"
    SWEEP_AVAIL = "sweep_avail"
    SWEEP_PRICE = "sweep_price"
    SELECT = "select"
    ADAPT_PHASES = "adapt_phases"
    ORACLE = "oracle"


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class JobDistribution(_Section):
    """
    Jobs drawn per run: workload and parallelism bounds uniform over inclusive integer ranges.
    """

    workload_min: int = Field(default=70, ge=0)
    workload_max: int = Field(default=120, ge=0)
    deadline: int = Field(default=10, ge=1)
    n_min_low: int = Field(default=1, ge=1)
    n_min_high: int = Field(default=4, ge=1)
    n_max_low: int = Field(default=12, ge=1)
    n_max_high: int = Field(default=16, ge=1)
    value: float = Field(default=100.0, gt=0)
    gamma: float = Field(default=1.5, gt=1)

    @model_validator(mode="after")
    def _check_ranges(self) -> "JobDistribution":
        if self.workload_min > self.workload_max:
            raise ValueError("empty workload range")
        if self.n_min_low > self.n_min_high or self.n_max_low > self.n_max_high:
            raise ValueError("empty parallelism range")
        if self.n_min_high > self.n_max_low:
            raise ValueError("n_min range must lie below n_max range")
        return self

    def sample(self, rng: np.random.Generator, deadline: Optional[int] = None) -> JobSpec:
        return JobSpec(
            workload=float(rng.integers(self.workload_min, self.workload_max + 1)),
            deadline=deadline if deadline is not None else self.deadline,
            n_min=int(rng.integers(self.n_min_low, self.n_min_high + 1)),
            n_max=int(rng.integers(self.n_max_low, self.n_max_high + 1)),
            value=self.value,
            gamma=self.gamma,
        )


class ModelSection(_Section):
    alpha: float = Field(default=1.0, gt=0)
    beta: float = 0.0
    mu_up: float = Field(default=0.9, gt=0, le=1)
    mu_down: float = Field(default=0.9, gt=0, le=1)
    od_price: float = Field(default=1.0, gt=0)
    aggregate: Literal["mean", "sum"] = "mean"
    exact: bool = False

    def throughput(self) -> ThroughputModel:
        return ThroughputModel(alpha=self.alpha, beta=self.beta)

    def overhead(self) -> OverheadModel:
        return OverheadModel(mu_up=self.mu_up, mu_down=self.mu_down)


class NormalizeSection(_Section):
    od_reference_price: float = Field(gt=0)
    avail_scale: float = Field(default=1.0, gt=0)
    avail_cap: int = Field(default=DEFAULT_AVAIL_CAP, gt=0)


class TraceSection(_Section):
    """
    Either a CSV file (optionally normalized) or a synthetic trace. Each job runs on a window of it with
    `history` slots of observed past in front.
    """

    path: Optional[Path] = None
    normalize: Optional[NormalizeSection] = None
    synth: TraceSynthSpec = TraceSynthSpec(
        length=2016,
        base_avail=6.0,
        avail_amplitude=4.0,
        base_price=0.5,
        price_amplitude=0.15,
        jitter=0.2,
    )
    history: int = Field(default=48, ge=0)
    start: Optional[int] = Field(default=None, ge=0)

    @field_validator("path")
    @classmethod
    def _check_path(cls, v: Optional[Path]) -> Optional[Path]:
        if v is not None and not v.is_file():
            raise ValueError(f"trace file {v} does not exist")
        return v


class ForecasterSection(_Section):
    kind: Literal["ar", "noisy_oracle", "perfect", "persistence"] = "noisy_oracle"
    order: int = Field(default=DEFAULT_AR_ORDER, ge=1)
    noise: NoiseSpec = NoiseSpec(level=0.1)


class PoliciesSection(_Section):
    names: List[str] = ["od", "msu", "up", "ahanp:s=0.5", "ahap:w=3,v=1,s=0.7"]
    pool: bool = False
    pool_commit: Optional[int] = Field(default=None, ge=1)
    pool_include_ahanp: bool = True

    @field_validator("names")
    @classmethod
    def _check_names(cls, v: List[str]) -> List[str]:
        if not v:
            raise ValueError("policy list must be nonempty")
        for name in v:
            parse_policy(name)
        return v

    def specs(self) -> List[PolicySpec]:
        if self.pool:
            return build_policy_pool(commit=self.pool_commit, include_ahanp=self.pool_include_ahanp)
        return [parse_policy(name) for name in self.names]


class SweepSection(_Section):
    values: List[float] = []
    runs: int = Field(default=50, ge=1)


class SelectSection(_Section):
    jobs: int = Field(default=1000, ge=1)
    eta: Optional[float] = Field(default=None, gt=0)


class PhaseSection(_Section):
    start: int = Field(ge=0)
    end: int = Field(ge=1)
    noise: NoiseSpec

    @model_validator(mode="after")
    def _check_span(self) -> "PhaseSection":
        if self.end <= self.start:
            raise ValueError("phase must end after it starts")
        return self


def _fixed(distribution: NoiseDistribution, level: float) -> NoiseSpec:
    return NoiseSpec(magnitude_mode=MagnitudeMode.FIXED_MAGNITUDE, distribution=distribution, level=level)


DEFAULT_PHASES = [
    PhaseSection(start=0, end=800, noise=_fixed(NoiseDistribution.UNIFORM, 0.1)),
    PhaseSection(start=800, end=1600, noise=_fixed(NoiseDistribution.HEAVY_TAIL, 0.3)),
    PhaseSection(start=1600, end=2400, noise=_fixed(NoiseDistribution.UNIFORM, 0.5)),
    PhaseSection(start=2400, end=3600, noise=_fixed(NoiseDistribution.UNIFORM, 2.0)),
]


class OutputSection(_Section):
    path: Optional[Path] = None
    format: Literal["csv", "jsonl"] = "csv"


class ExperimentConfig(_Section):
    """
    Declarative description of one experiment. Every section has defaults, so an empty file is valid.
    """

    kind: ExperimentKind = ExperimentKind.SIMULATE
    seed: int = Field(default=0, ge=0, lt=2**64)
    runs: int = Field(default=1, ge=1)
    job: JobDistribution = JobDistribution()
    model: ModelSection = ModelSection()
    trace: TraceSection = TraceSection()
    forecaster: ForecasterSection = ForecasterSection()
    policies: PoliciesSection = PoliciesSection()
    sweep: SweepSection = SweepSection()
    select: SelectSection = SelectSection()
    phases: List[PhaseSection] = DEFAULT_PHASES
    output: OutputSection = OutputSection()


def load_config(path: Path) -> ExperimentConfig:
    """
    Reads a TOML experiment file. Keys of the `[experiment]` table (kind, seed, runs) are lifted to the top.

    Raises:
        ConfigError: the file is missing or is not valid TOML.
        pydantic.ValidationError: a section violates its schema.
    """
    try:
        with open(path, "rb") as f:
            doc = tomllib.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file {path} not found") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config file {path} is not valid TOML: {e}") from e
    doc.update(doc.pop("experiment", {}))
    logger.debug("Loaded config %s", path)
    return ExperimentConfig.model_validate(doc)

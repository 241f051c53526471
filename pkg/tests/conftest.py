import pytest

from project.config import (
    ExperimentConfig,
    ForecasterSection,
    JobDistribution,
    PoliciesSection,
    SelectSection,
    SweepSection,
    TraceSection,
)
from project.job_model import JobSpec, OverheadModel, ThroughputModel
from project.market_model import SpotTrace, TraceSynthSpec


@pytest.fixture
def linear() -> ThroughputModel:
    return ThroughputModel(alpha=1.0, beta=0.0)


@pytest.fixture
def no_overhead() -> OverheadModel:
    return OverheadModel(mu_up=1.0, mu_down=1.0)


@pytest.fixture
def default_overhead() -> OverheadModel:
    return OverheadModel(mu_up=0.9, mu_down=0.9)


@pytest.fixture
def toy_job() -> JobSpec:
    """20 units of work in 5 slots, at most 6 instances."""
    return JobSpec(workload=20, deadline=5, n_min=1, n_max=6, value=25, gamma=2)


@pytest.fixture
def toy_trace() -> SpotTrace:
    """Cheap spot for two slots, then none."""
    return SpotTrace.from_series([0.3] * 5, [6, 6, 0, 0, 0])


@pytest.fixture
def small_config() -> ExperimentConfig:
    """Fast experiment: short synthetic trace, small jobs, cheap policies."""
    return ExperimentConfig(
        seed=7,
        runs=2,
        job=JobDistribution(
            workload_min=10,
            workload_max=20,
            deadline=4,
            n_min_low=1,
            n_min_high=2,
            n_max_low=4,
            n_max_high=5,
        ),
        trace=TraceSection(
            synth=TraceSynthSpec(
                length=120,
                base_avail=3.0,
                avail_amplitude=2.0,
                base_price=0.4,
                price_amplitude=0.1,
                jitter=0.2,
                seed=3,
            ),
            history=8,
        ),
        forecaster=ForecasterSection(kind="perfect"),
        policies=PoliciesSection(names=["od", "msu", "up", "ahanp:s=0.5", "ahap:w=2,v=1,s=0.7"]),
        sweep=SweepSection(runs=3),
        select=SelectSection(jobs=6),
    )

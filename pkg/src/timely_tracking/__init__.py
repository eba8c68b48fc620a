"""Timely tracking of binary Markov sources with rate-limited random testing."""

from .analytic import (
    CtmcDistribution,
    CycleStatistics,
    ErrorBreakdown,
    ctmc_stationary,
    error_rates,
    expected_cycle_durations,
    no_test_error,
    population_error,
    weighted_error,
)
from .model import (
    FixedLabel,
    PersonParams,
    PopulationSpec,
    TestPolicy,
    geometric_rate_profile,
    paper_population,
    uniform_rate_profile,
    validate_population,
)
from .optimizer import SolverReport, alternate_minimize, solve
from .simulator import SimReport, simulate_person, simulate_population

__all__ = [
    "CtmcDistribution", "CycleStatistics", "ErrorBreakdown", "FixedLabel", "PersonParams",
    "PopulationSpec", "SimReport", "SolverReport", "TestPolicy", "alternate_minimize",
    "ctmc_stationary", "error_rates", "expected_cycle_durations", "geometric_rate_profile",
    "no_test_error", "paper_population", "population_error", "simulate_person",
    "simulate_population", "solve", "uniform_rate_profile", "validate_population",
    "weighted_error",
]

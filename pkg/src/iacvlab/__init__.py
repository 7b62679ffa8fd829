"""Impairment valuation benchmark, conservatism measures and expected-loss
backtesting dashboards for loan portfolios."""

__version__ = "0.1.0"

from .cashflow import LoanContract, RateSolution, present_value, solve_effective_rate, solve_risk_adjusted_rate
from .dashboards import ExposureRecord, PortfolioSnapshot, binomial_null_test, pl_dashboard, pl_split
from .npl import NplExposure, PoolObservation, PoolState, StaticPool, decompose_nca, static_pool_tel
from .simulator import ScenarioConfig, figure_scenarios
from .valuation import ExposureTrajectory, RiskProfile, build_trajectory, normalize_profile

__all__ = [
    "ExposureRecord",
    "ExposureTrajectory",
    "LoanContract",
    "NplExposure",
    "PoolObservation",
    "PoolState",
    "PortfolioSnapshot",
    "RateSolution",
    "RiskProfile",
    "ScenarioConfig",
    "StaticPool",
    "binomial_null_test",
    "build_trajectory",
    "decompose_nca",
    "figure_scenarios",
    "normalize_profile",
    "pl_dashboard",
    "pl_split",
    "present_value",
    "solve_effective_rate",
    "solve_risk_adjusted_rate",
    "static_pool_tel",
]

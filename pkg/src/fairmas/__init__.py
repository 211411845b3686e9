"""fairmas: simulate stochastic multi-agent systems, measure how protected
attributes affect expected rewards, and search configurations for fairness."""

from .engine import (
    DEFAULT_ENUMERATION_CAP,
    EstimatorResult,
    enumerate_runs,
    estimate_run_count,
    expected_reward_exact,
    expected_reward_mc,
    monte_carlo_rewards,
    run_probability,
    run_reward,
    sample_run,
)
from .errors import FairmasError
from .metrics import (
    COND_SP,
    COUNT_FAIR,
    DEM_PAR,
    Exact,
    FairnessReport,
    MonteCarlo,
    PairContribution,
    cond_sp,
    count_fair,
    counterfactual_system,
    dem_par,
    matched_pairs,
)
from .model import (
    AgentSpec,
    Run,
    SystemSpec,
    TransitionEntry,
    TransitionSpec,
    Violation,
    attribute_profile,
    matches_except,
    validate_system,
)
from .optimize import (
    BoolParam,
    ConfigSpace,
    IntParam,
    Objective,
    OptimizationResult,
    RealParam,
    evaluate_config,
    evolutionary_search,
    grid_search,
    random_search,
    traffic_space,
)
from .scenario import (
    ScenarioSummary,
    TrafficParams,
    build_traffic,
    describe,
    load_system,
    load_system_file,
    loads_system,
    save_system,
)

__version__ = "0.1.0"

__all__ = [
    "AgentSpec",
    "BoolParam",
    "COND_SP",
    "COUNT_FAIR",
    "ConfigSpace",
    "DEFAULT_ENUMERATION_CAP",
    "DEM_PAR",
    "EstimatorResult",
    "Exact",
    "FairmasError",
    "FairnessReport",
    "IntParam",
    "MonteCarlo",
    "Objective",
    "OptimizationResult",
    "PairContribution",
    "RealParam",
    "Run",
    "ScenarioSummary",
    "SystemSpec",
    "TrafficParams",
    "TransitionEntry",
    "TransitionSpec",
    "Violation",
    "attribute_profile",
    "build_traffic",
    "cond_sp",
    "count_fair",
    "counterfactual_system",
    "dem_par",
    "describe",
    "enumerate_runs",
    "estimate_run_count",
    "evaluate_config",
    "evolutionary_search",
    "expected_reward_exact",
    "expected_reward_mc",
    "grid_search",
    "load_system",
    "load_system_file",
    "loads_system",
    "matched_pairs",
    "matches_except",
    "monte_carlo_rewards",
    "random_search",
    "run_probability",
    "run_reward",
    "sample_run",
    "save_system",
    "traffic_space",
    "validate_system",
]

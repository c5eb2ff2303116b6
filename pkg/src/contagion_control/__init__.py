"""Default contagion with interventions on configuration-model networks.

The package has three layers:

- finite networks: class distributions, empirical counts, node populations and
  uniform stub matching (`distribution`, `network`);
- the contagion chain with pluggable intervention policies plus an exact
  brute-force oracle for tiny instances (`cascade`);
- the deterministic limits: closed-form state trajectories, fixed points of
  the default flow, the regulator's program and its solver, and the study
  harness that checks simulations against the limits (`asymptotics`,
  `optimizer`, `experiments`).
"""

from .cascade import (
    ContagionState,
    InterventionPolicy,
    RunOutcome,
    exact_expectation,
    run,
    step,
)
from .distribution import (
    EmpiricalCounts,
    JointDistribution,
    build_zipf_copula,
    distribution_from_spec,
    empirical_counts,
    mean_degree,
    truncation_index,
)
from .errors import (
    ConstructionError,
    ContagionControlError,
    EnumerationLimitError,
    ParameterError,
)
from .asymptotics import (
    ThresholdSchedule,
    Trajectory,
    default_fraction,
    default_fraction_controlled,
    default_outflow,
    default_outflow_controlled,
    integrate_rk4,
    intervention_start,
    intervention_volume,
    propagate,
    smallest_fixed_point,
    terminal_hamiltonian,
    trajectory_at,
)
from .network import (
    InStubPool,
    Matching,
    NodePopulation,
    draw_in_stub,
    enumerate_matchings,
    instantiate,
)
from .optimizer import (
    OPSolution,
    asymptotic_prediction,
    extract_policy,
    solve_op,
    solve_stage_a,
    solve_stage_b,
)
from .experiments import (
    StudyConfig,
    StudyResult,
    compare_policies,
    powerlaw_fit,
    run_study,
)

__version__ = "0.1.0"

__all__ = [
    "ContagionState", "InterventionPolicy", "RunOutcome", "exact_expectation", "run", "step",
    "EmpiricalCounts", "JointDistribution", "build_zipf_copula", "distribution_from_spec",
    "empirical_counts", "mean_degree", "truncation_index",
    "ConstructionError", "ContagionControlError", "EnumerationLimitError", "ParameterError",
    "ThresholdSchedule", "Trajectory", "default_fraction", "default_fraction_controlled",
    "default_outflow", "default_outflow_controlled", "integrate_rk4", "intervention_start",
    "intervention_volume", "propagate", "smallest_fixed_point", "terminal_hamiltonian",
    "trajectory_at",
    "InStubPool", "Matching", "NodePopulation", "draw_in_stub", "enumerate_matchings",
    "instantiate",
    "OPSolution", "asymptotic_prediction", "extract_policy", "solve_op", "solve_stage_a",
    "solve_stage_b",
    "StudyConfig", "StudyResult", "compare_policies", "powerlaw_fit", "run_study",
]

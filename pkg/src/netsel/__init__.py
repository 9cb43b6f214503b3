"""Joint sensor-node selection and initial-state estimation for nonlinear
network dynamics."""

__version__ = "0.1.0"

from .exceptions import (
    DimensionError,
    DomainError,
    EmptySelectionError,
    EnumerationCapError,
    InfeasibleError,
    NetselError,
    NewtonConvergenceError,
    PhaseError,
    SingularMatrixError,
    StepOverflowError,
    UndefinedMetricError,
    ValidationError,
)
from .netmodels import (
    CrnSpec,
    DuffingNetworkSpec,
    GeometricGraphConfig,
    MemoryNetworkSpec,
    NetworkModel,
    PolynomialSpec,
    crn_from_reactions,
    crn_model,
    duffing_model,
    generate_geometric_graph,
    hebb_weights,
    letter_memory_spec,
    linear_model,
    load_builtin_crn,
    memory_model,
    polynomial_model,
    random_duffing_spec,
)
from .integrate import FE, TI, DiscretizationConfig, Trajectory, propagate_sensitivity, simulate
from .outputs import OutputParametrization, SelectionVector, restrict_output_matrix
from .estimator import (
    EstimationProblem,
    MultiTrajectoryProblem,
    cost_joint,
    estimate_initial_state,
    grad_joint,
    solve_relaxed,
)
from .milp import Milp1Instance, Milp2Instance, enumerate_selections, solve_milp1, solve_milp2
from .mads import MadsConfig, mads_solve
from .metrics import error_metric
from .selector import (
    PipelineConfig,
    ScenarioConfig,
    SelectionProblem,
    SolveReport,
    generate_observation_sequence,
    run_algorithm1,
    run_algorithm2,
    run_algorithm3,
    run_pipeline,
)
from .harness import BenchmarkInstance, exhaustive_search, random_baseline, timing_benchmark
from .estimators import InitialStateEstimator, SensorSelector

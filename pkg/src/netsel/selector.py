"""End-to-end sensor selection pipelines.

All three algorithms share the same skeleton:

1. solve the relaxed joint problem from a random start, giving
   ``(theta~, x0~)``;
2. turn ``theta~`` into a binary selection: by direct search on the mixed
   problem (``A1``), by the l1 output-fit MILP on the trajectory simulated
   from ``x0~`` (``A2``) or by min-max rounding of ``theta~`` (``A3``);
3. keep only the selected outputs and re-estimate ``x0`` from them.
"""

import json
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._validation import as_sequence, as_vector, check_cardinality, check_mode
from .estimator import (
    EstimationProblem,
    MultiTrajectoryProblem,
    RelaxedSolution,
    estimate_initial_state_full,
    solve_relaxed,
)
from .exceptions import EmptySelectionError, NetselError, PhaseError, ValidationError
from .integrate import simulate
from .mads import MadsConfig, mads_solve
from .metrics import error_metric
from .milp import Milp1Instance, Milp2Instance, solve_milp1, solve_milp2
from .outputs import OutputParametrization, SelectionVector, restrict_output_matrix

SIMULATED = "SIMULATED"
INSTRUMENTED = "INSTRUMENTED"
ALGORITHMS = ("A1", "A2", "A3")
ALGORITHM_ALIASES = {"mads": "A1", "milp1": "A2", "milp2": "A3", "a1": "A1", "a2": "A2", "a3": "A3"}
DEFAULT_MODE = {"A1": "LE", "A2": "EQ", "A3": "EQ"}
INIT_POLICY = {"memory": "normal", "duffing": "uniform", "crn": "uniform"}


def canonical_algorithm(name):
    key = str(name)
    algo = ALGORITHM_ALIASES.get(key.lower(), key.upper())
    if algo not in ALGORITHMS:
        raise ValidationError(f"unknown algorithm {name!r}; choose mads, milp1 or milp2")
    return algo


@dataclass
class SelectionProblem:
    """Model, discretization, horizon and initial-state box of a selection task."""

    model: object
    discretization: object
    L: int
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def estimation_problem(self, z_seq):
        return EstimationProblem(self.model, self.discretization, z_seq, self.lower, self.upper)


@dataclass
class ScenarioConfig:
    """Where the full-output data comes from and what to select.

    ``SIMULATED`` needs ``user_x0`` (the data is simulated from it);
    ``INSTRUMENTED`` needs ``z_seq`` recorded with every node instrumented.
    ``x0_true`` (for the error metric) defaults to ``user_x0``.  ``z_real``
    is the full-output record of the real system from which the kept
    sensors' data is taken; it defaults to the selection data.
    """

    scenario: str = SIMULATED
    algorithm: str = "A3"
    m_max: int = 1
    mode: Optional[str] = None
    user_x0: Optional[np.ndarray] = None
    z_seq: Optional[np.ndarray] = None
    x0_true: Optional[np.ndarray] = None
    z_real: Optional[np.ndarray] = None
    multi_trials: Optional[np.ndarray] = None

    def __post_init__(self):
        self.scenario = str(self.scenario).upper()
        if self.scenario not in (SIMULATED, INSTRUMENTED):
            raise ValidationError(f"scenario must be SIMULATED or INSTRUMENTED, got {self.scenario!r}")
        if self.scenario == SIMULATED and self.user_x0 is None:
            raise ValidationError("the SIMULATED scenario requires user_x0")
        if self.scenario == INSTRUMENTED and self.z_seq is None:
            raise ValidationError("the INSTRUMENTED scenario requires z_seq")
        self.algorithm = canonical_algorithm(self.algorithm)
        self.mode = check_mode(self.mode or DEFAULT_MODE[self.algorithm])
        if self.x0_true is None and self.user_x0 is not None:
            self.x0_true = self.user_x0


@dataclass
class PipelineConfig:
    """Solver settings and randomness of one pipeline run.

    ``theta_init`` / ``x0_init`` override the seeded random starts.  The
    final estimate starts from the same point as the relaxed phase unless
    ``warm_start_final`` is set, in which case it starts from ``x0~``.
    """

    seed: Optional[int] = 0
    theta_init: Optional[np.ndarray] = None
    x0_init: Optional[np.ndarray] = None
    init_policy: Optional[str] = None
    mads: MadsConfig = field(default_factory=MadsConfig)
    warm_start_final: bool = False
    relaxed_max_iter: int = 500
    relaxed_gtol: float = 1e-6
    final_max_iter: int = 1000
    final_gtol: float = 1e-8


@dataclass
class SolveReport:
    algorithm: str
    status: str
    theta_hat: Optional[SelectionVector]
    x0_hat: Optional[np.ndarray]
    error_e: Optional[float]
    cost_trace: list
    timings: dict
    seed: Optional[int]
    theta_init: np.ndarray
    x0_init: np.ndarray
    relaxed: dict
    selection: dict
    final: dict
    message: str = ""

    @property
    def selected(self):
        return self.theta_hat.indices if self.theta_hat is not None else []

    def to_dict(self):
        def arr(v):
            return None if v is None else np.asarray(v, dtype=float).tolist()

        return {
            "algorithm": self.algorithm,
            "status": self.status,
            "message": self.message,
            "seed": self.seed,
            "theta_hat": None if self.theta_hat is None else self.theta_hat.to_dict(),
            "x0_hat": arr(self.x0_hat),
            "error_e": self.error_e,
            "cost_trace": [float(c) for c in self.cost_trace],
            "timings": dict(self.timings),
            "theta_init": arr(self.theta_init),
            "x0_init": arr(self.x0_init),
            "relaxed": _jsonable(self.relaxed),
            "selection": _jsonable(self.selection),
            "final": _jsonable(self.final),
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), indent=2, **kwargs)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def generate_observation_sequence(model, config, x0, L):
    """Full outputs ``z_{0:L}`` (first local coordinate of every node) simulated from ``x0``."""
    traj = simulate(model, x0, L, config)
    return OutputParametrization.for_model(model).observed(traj.states)


def initial_guess(model, lower, upper, rng, policy=None):
    """Seeded random start for ``x0``: standard normal or uniform on [0, 1], clipped to the box."""
    policy = policy or INIT_POLICY.get(model.family, "uniform")
    if policy == "normal":
        x = rng.standard_normal(model.dim)
    elif policy == "uniform":
        x = rng.uniform(0.0, 1.0, model.dim)
    else:
        raise ValidationError(f"unknown init policy {policy!r}")
    return np.clip(x, lower, upper)


def _phase_seeds(seed):
    theta_ss, x0_ss, mads_ss = np.random.SeedSequence(seed).spawn(3)
    return (
        np.random.default_rng(theta_ss),
        np.random.default_rng(x0_ss),
        int(mads_ss.generate_state(1)[0]),
    )


def _selection_data(problem, scenario):
    if scenario.scenario == SIMULATED:
        z = generate_observation_sequence(problem.model, problem.discretization, scenario.user_x0, problem.L)
    else:
        z = as_sequence(scenario.z_seq, problem.model.N)
        if z.shape[0] != problem.L + 1:
            raise ValidationError(f"z_seq has {z.shape[0]} samples, expected L+1 = {problem.L + 1}")
    return z


def _relaxed_problem(problem, scenario, est):
    if scenario.multi_trials is None:
        return est
    extra = np.atleast_2d(np.asarray(scenario.multi_trials, dtype=float))
    z_extra = [generate_observation_sequence(problem.model, problem.discretization, x, problem.L) for x in extra]
    return MultiTrajectoryProblem(
        problem.model,
        problem.discretization,
        np.stack([est.z_seq, *z_extra]),
        lower=est.lower,
        upper=est.upper,
    )


class _Clock:
    def __init__(self):
        self.timings = {}

    def run(self, phase, fn, *args, **kwargs):
        start = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except PhaseError:
            raise
        except NetselError as exc:
            raise PhaseError(phase, exc) from exc
        finally:
            self.timings[phase] = self.timings.get(phase, 0.0) + time.perf_counter() - start


def run_pipeline(problem, scenario, config=None, relaxed=None):
    """Run the algorithm named by ``scenario.algorithm``.

    ``relaxed`` may carry a precomputed relaxed solution for the same data
    and starting point (the relaxed phase does not depend on the algorithm
    or on ``m_max``); its phase time is then reported as zero.
    """
    config = config or PipelineConfig()
    t_start = time.perf_counter()
    algo = scenario.algorithm
    model = problem.model
    N = model.N
    m_max = check_cardinality(scenario.m_max, N, scenario.mode)
    clock = _Clock()
    rng_theta, rng_x0, mads_seed = _phase_seeds(config.seed)

    z = clock.run("data", _selection_data, problem, scenario)
    est = problem.estimation_problem(z)
    theta_init = (
        as_vector(config.theta_init, N, "theta_init") if config.theta_init is not None else rng_theta.uniform(0, 1, N)
    )
    x0_init = (
        as_vector(config.x0_init, model.dim, "x0_init")
        if config.x0_init is not None
        else initial_guess(model, est.lower, est.upper, rng_x0, config.init_policy)
    )

    # phase 1: relaxed joint problem
    relaxed_problem = _relaxed_problem(problem, scenario, est)
    if relaxed is None:
        start_x = x0_init if scenario.multi_trials is None else np.tile(x0_init, (relaxed_problem.P, 1))
        relaxed = clock.run(
            "relaxed",
            solve_relaxed,
            relaxed_problem,
            theta_init,
            start_x,
            max_iter=config.relaxed_max_iter,
            gtol=config.relaxed_gtol,
        )
    else:
        clock.timings["relaxed"] = 0.0
    x0_tilde = relaxed.x0_est[0] if np.ndim(relaxed.x0_est) == 2 else relaxed.x0_est
    relaxed_info = {
        "theta": relaxed.theta_relaxed,
        "x0": relaxed.x0_est,
        "cost": relaxed.final_cost,
        "iterations": relaxed.iterations,
        "termination": relaxed.termination,
    }

    # phase 2: binary selection
    selection = {"mode": scenario.mode, "m_max": m_max}
    if algo == "A1":
        inc = clock.run(
            "select",
            mads_solve,
            est,
            relaxed.theta_relaxed,
            x0_tilde,
            m_max,
            MadsConfig(**{**config.mads.__dict__, "seed": mads_seed if config.mads.seed == 0 else config.mads.seed}),
            scenario.mode,
        )
        theta_hat = inc.theta
        selection.update(cost=inc.cost, evaluations=inc.evaluations, iterations=inc.iterations, x0=inc.x0)
    elif algo == "A2":

        def milp1_phase():
            traj = simulate(model, x0_tilde, problem.L, problem.discretization)
            xt = OutputParametrization.for_model(model).observed(traj.states)
            return solve_milp1(Milp1Instance(z, xt, m_max, scenario.mode))

        theta_hat, objective = clock.run("select", milp1_phase)
        selection.update(objective=objective)
    else:
        theta_hat, q = clock.run("select", solve_milp2, Milp2Instance(relaxed.theta_relaxed, m_max, scenario.mode))
        selection.update(objective=q)

    common = dict(
        algorithm=algo,
        cost_trace=relaxed.cost_trace,
        seed=config.seed,
        theta_init=theta_init,
        x0_init=x0_init,
        relaxed=relaxed_info,
        selection=selection,
    )
    if not np.any(theta_hat):
        clock.timings["total"] = time.perf_counter() - t_start
        return SolveReport(
            status="empty-selection",
            theta_hat=None,
            x0_hat=None,
            error_e=None,
            timings=clock.timings,
            final={},
            message="selection step returned no sensor nodes",
            **common,
        )
    theta_sel = SelectionVector(theta_hat, m_max, scenario.mode)

    # phase 3: estimate x0 from the kept sensors only
    def final_phase():
        param = OutputParametrization.for_model(model)
        C_hat = restrict_output_matrix(param, theta_hat)
        z_real = z if scenario.z_real is None else as_sequence(scenario.z_real, N)
        y = z_real[:, theta_hat == 1]
        start = x0_tilde if config.warm_start_final else x0_init
        return estimate_initial_state_full(
            model, problem.discretization, C_hat, y, start, gtol=config.final_gtol, max_iter=config.final_max_iter
        )

    result = clock.run("estimate", final_phase)
    err = error_metric(scenario.x0_true, result.x0) if scenario.x0_true is not None else None
    clock.timings["total"] = time.perf_counter() - t_start
    return SolveReport(
        status="ok",
        theta_hat=theta_sel,
        x0_hat=result.x0,
        error_e=err,
        timings=clock.timings,
        final={
            "cost": result.cost,
            "iterations": result.iterations,
            "termination": result.termination,
            "gradient_norm": result.gradient_norm,
        },
        **common,
    )


def _with_algorithm(scenario, algo):
    if scenario.algorithm == algo:
        return scenario
    mode = scenario.mode if scenario.mode != DEFAULT_MODE[scenario.algorithm] else None
    return ScenarioConfig(**{**scenario.__dict__, "algorithm": algo, "mode": mode})


def run_algorithm1(problem, scenario, config=None, relaxed=None):
    """Relaxed start, mixed-variable direct search, final estimate (LE mode by default)."""
    return run_pipeline(problem, _with_algorithm(scenario, "A1"), config, relaxed)


def run_algorithm2(problem, scenario, config=None, relaxed=None):
    """Relaxed start, l1 output-fit MILP on the simulated relaxed trajectory, final estimate."""
    return run_pipeline(problem, _with_algorithm(scenario, "A2"), config, relaxed)


def run_algorithm3(problem, scenario, config=None, relaxed=None):
    """Relaxed start, min-max rounding MILP, final estimate."""
    return run_pipeline(problem, _with_algorithm(scenario, "A3"), config, relaxed)


RUNNERS = {"A1": run_algorithm1, "A2": run_algorithm2, "A3": run_algorithm3}

"""Least-squares costs over the output sequence, their analytic gradients and
the two continuous solves used by the selection pipelines: the relaxed joint
problem over ``(x0, theta)`` and the fixed-selection initial-state problem.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from ._validation import as_sequence, as_vector, check_bounds, check_theta
from .exceptions import DimensionError, NetselError, ValidationError
from .integrate import sensitivity_transpose_product, simulate
from .outputs import OutputParametrization

DEFAULT_BOUNDS = {"memory": (-5.0, 5.0), "duffing": (-10.0, 10.0), "crn": (0.0, 10.0)}


def default_bounds(model):
    """Per-family box for the initial state; [-10, 10] when unknown."""
    lo, hi = DEFAULT_BOUNDS.get(model.family, (-10.0, 10.0))
    return np.full(model.dim, lo), np.full(model.dim, hi)


@dataclass
class EstimationProblem:
    """Full-output data ``z_{0:L}`` for a model under a discretization.

    ``z_seq`` has shape ``(L + 1, N)``: row ``k`` is the first local
    coordinate of every node at step ``k``.
    """

    model: object
    config: object
    z_seq: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        self.z_seq = as_sequence(self.z_seq, self.model.N)
        lo, hi = default_bounds(self.model)
        self.lower, self.upper = check_bounds(
            lo if self.lower is None else np.broadcast_to(self.lower, lo.shape),
            hi if self.upper is None else np.broadcast_to(self.upper, hi.shape),
            self.model.dim,
        )

    @property
    def L(self):
        return self.z_seq.shape[0] - 1

    @property
    def param(self):
        return OutputParametrization.for_model(self.model)

    @classmethod
    def from_simulation(cls, model, config, x0, L, **kwargs):
        """Noiseless full-output data simulated from ``x0``."""
        traj = simulate(model, x0, L, config)
        z = OutputParametrization.for_model(model).observed(traj.states)
        return cls(model=model, config=config, z_seq=z, **kwargs)


@dataclass
class MultiTrajectoryProblem:
    """``P`` output sequences of one model, sharing horizon and discretization.

    ``x0_trials`` optionally records the initial states that produced each
    sequence.
    """

    model: object
    config: object
    z_seqs: np.ndarray
    x0_trials: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        z = np.asarray(self.z_seqs, dtype=float)
        if z.ndim == 2:
            z = z[None]
        if z.ndim != 3 or z.shape[0] < 1 or z.shape[2] != self.model.N:
            raise DimensionError(f"z_seqs must have shape (P, L+1, {self.model.N}), got {z.shape}")
        self.z_seqs = z
        if self.x0_trials is not None:
            x0 = np.atleast_2d(np.asarray(self.x0_trials, dtype=float))
            if x0.shape != (z.shape[0], self.model.dim):
                raise DimensionError("x0_trials must have one initial state per trial")
            self.x0_trials = x0
        lo, hi = default_bounds(self.model)
        self.lower, self.upper = check_bounds(
            lo if self.lower is None else np.broadcast_to(self.lower, lo.shape),
            hi if self.upper is None else np.broadcast_to(self.upper, hi.shape),
            self.model.dim,
        )

    @property
    def P(self):
        return self.z_seqs.shape[0]

    @property
    def L(self):
        return self.z_seqs.shape[1] - 1

    def trial(self, i):
        return EstimationProblem(self.model, self.config, self.z_seqs[i], self.lower, self.upper)

    @classmethod
    def from_simulations(cls, model, config, x0_list, L, **kwargs):
        param = OutputParametrization.for_model(model)
        x0_list = np.atleast_2d(np.asarray(x0_list, dtype=float))
        z = np.stack([param.observed(simulate(model, x0, L, config).states) for x0 in x0_list])
        return cls(model=model, config=config, z_seqs=z, x0_trials=x0_list, **kwargs)


@dataclass
class RelaxedSolution:
    theta_relaxed: np.ndarray
    x0_est: np.ndarray
    final_cost: float
    iterations: int
    cost_trace: list = field(default_factory=list)
    termination: str = "converged"
    projected_gradient_norm: float = 0.0


# ---------------------------------------------------------------------------
# cost and gradient kernels

def _joint_terms(problem, theta, x0, with_grad):
    model, n = problem.model, problem.model.n
    traj = simulate(model, x0, problem.L, problem.config)
    observed = traj.states[:, 0::n]
    residual = problem.z_seq - theta * observed
    cost = float(np.sum(residual**2))
    if not with_grad:
        return cost, None, None
    # C_theta^T r_k places theta_i r_ki at the first coordinate of node i
    weights = np.zeros_like(traj.states)
    weights[:, 0::n] = theta * residual
    grad_x0 = -2.0 * sensitivity_transpose_product(model, traj, problem.config, weights)
    grad_theta = -2.0 * np.sum(observed * residual, axis=0)
    return cost, grad_x0, grad_theta


def _check_point(problem, theta, x0, enforce_bounds):
    theta = check_theta(theta, problem.model.N)
    x0 = as_vector(x0, problem.model.dim, "x0")
    if enforce_bounds and (np.any(x0 < problem.lower) or np.any(x0 > problem.upper)):
        raise ValidationError("x0 lies outside the problem bounds")
    return theta, x0


def cost_joint(problem, theta, x0, enforce_bounds=False):
    """``||z_{0:L} - (I (x) C_theta) x_{0:L}[x0]||_2^2``."""
    theta, x0 = _check_point(problem, theta, x0, enforce_bounds)
    return _joint_terms(problem, theta, x0, with_grad=False)[0]


def grad_joint(problem, theta, x0, enforce_bounds=False):
    """Analytic gradients ``(d W / d x0, d W / d theta)`` of :func:`cost_joint`.

    ``d W / d x0 = -2 sum_k S_k^T C_theta^T r_k`` with forward sensitivities
    ``S_k`` and residuals ``r_k = z_k - C_theta x_k``;
    ``d W / d theta = -2 sum_k diag(C_1 x_k) r_k``.
    """
    theta, x0 = _check_point(problem, theta, x0, enforce_bounds)
    _, gx, gt = _joint_terms(problem, theta, x0, with_grad=True)
    return gx, gt


def cost_and_grad_joint(problem, theta, x0):
    theta, x0 = _check_point(problem, theta, x0, False)
    return _joint_terms(problem, theta, x0, with_grad=True)


def cost_multi(multi_problem, theta, x0_list):
    """Squared Frobenius residual summed over all trials."""
    x0_list = np.atleast_2d(np.asarray(x0_list, dtype=float))
    if x0_list.shape != (multi_problem.P, multi_problem.model.dim):
        raise DimensionError(
            f"x0_list must have shape ({multi_problem.P}, {multi_problem.model.dim}), got {x0_list.shape}"
        )
    return sum(cost_joint(multi_problem.trial(i), theta, x0_list[i]) for i in range(multi_problem.P))


def grad_multi(multi_problem, theta, x0_list):
    x0_list = np.atleast_2d(np.asarray(x0_list, dtype=float))
    gx = np.empty_like(x0_list)
    gt = np.zeros(multi_problem.model.N)
    for i in range(multi_problem.P):
        gx[i], g = grad_joint(multi_problem.trial(i), theta, x0_list[i])
        gt += g
    return gx, gt


# ---------------------------------------------------------------------------
# solvers

FAILED_EVALUATION = 1e100


class _Objective:
    """Wraps a value-and-gradient callable for scipy, mapping solver failures
    to a huge finite value so line searches back off."""

    def __init__(self, fun):
        self.fun = fun
        self.last_x = None
        self.last_f = None
        self.evaluations = 0

    def __call__(self, v):
        self.evaluations += 1
        try:
            f, g = self.fun(v)
        except (NetselError, FloatingPointError, np.linalg.LinAlgError):
            f, g = FAILED_EVALUATION, np.zeros_like(v)
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            f, g = FAILED_EVALUATION, np.zeros_like(v)
        self.last_x, self.last_f = v.copy(), f
        return f, g

    def value_at(self, v):
        if self.last_x is not None and np.array_equal(v, self.last_x):
            return self.last_f
        return self(v)[0]


def _lbfgsb(objective, v0, bounds, max_iter, gtol):
    trace = [objective.value_at(v0)]
    if trace[0] >= FAILED_EVALUATION:
        raise ValidationError("cost is not finite at the initial point")

    def callback(vk):
        trace.append(objective.value_at(vk))

    res = minimize(
        objective,
        v0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        callback=callback,
        options={"maxiter": max_iter, "gtol": gtol, "ftol": 0.0, "maxcor": 20, "maxls": 40},
    )
    return res, trace


def _projected_gradient(v, g, lo, hi):
    return v - np.clip(v - g, lo, hi)


def _termination(pg_norm, gtol, res, max_iter):
    if pg_norm <= gtol:
        return "converged"
    if res.nit >= max_iter:
        return "max-iter"
    return "stalled"


def solve_relaxed(problem, theta_init, x0_init, max_iter=500, gtol=1e-6, optimize_theta=True):
    """Box-constrained quasi-Newton solve of the relaxed joint problem.

    Minimizes the joint cost over ``x0`` in the problem box and
    ``theta`` in ``[0, 1]^N`` (or over ``x0`` only when
    ``optimize_theta=False``).  Accepts an :class:`EstimationProblem` or a
    :class:`MultiTrajectoryProblem`; for the latter ``x0_init`` holds one
    initial state per trial and the cost is summed over trials.

    Stops when the projected-gradient inf-norm drops to ``gtol`` or after
    ``max_iter`` iterations; hitting the cap is reported through
    ``termination == "max-iter"`` rather than raised.
    """
    multi = isinstance(problem, MultiTrajectoryProblem)
    model = problem.model
    N, dim = model.N, model.dim
    theta0 = check_theta(theta_init, N)
    if multi:
        x0 = np.atleast_2d(np.asarray(x0_init, dtype=float))
        if x0.shape != (problem.P, dim):
            raise DimensionError(f"x0_init must have shape ({problem.P}, {dim})")
        x0 = x0.reshape(-1)
        lo_x, hi_x = np.tile(problem.lower, problem.P), np.tile(problem.upper, problem.P)
        trials = [problem.trial(i) for i in range(problem.P)]
    else:
        x0 = as_vector(x0_init, dim, "x0_init")
        lo_x, hi_x = problem.lower, problem.upper
        trials = [problem]
    x0 = np.clip(x0, lo_x, hi_x)
    nx = x0.size

    def value_and_grad(v):
        xs, theta = v[:nx].reshape(len(trials), dim), v[nx:] if optimize_theta else theta0
        total, gx, gt = 0.0, np.empty((len(trials), dim)), np.zeros(N)
        for i, trial in enumerate(trials):
            c, gx[i], g = _joint_terms(trial, theta, xs[i], with_grad=True)
            total += c
            gt += g
        grad = np.concatenate([gx.reshape(-1), gt]) if optimize_theta else gx.reshape(-1)
        return total, grad

    if optimize_theta:
        v0 = np.concatenate([x0, theta0])
        lo, hi = np.concatenate([lo_x, np.zeros(N)]), np.concatenate([hi_x, np.ones(N)])
    else:
        v0, lo, hi = x0, lo_x, hi_x
    objective = _Objective(value_and_grad)
    res, trace = _lbfgsb(objective, v0, list(zip(lo, hi)), max_iter, gtol)
    v = np.clip(res.x, lo, hi)
    final_cost, grad = value_and_grad(v)
    pg_norm = float(np.max(np.abs(_projected_gradient(v, grad, lo, hi)))) if v.size else 0.0
    if trace[-1] != final_cost:
        trace.append(min(final_cost, trace[-1]))
    x_est = v[:nx].reshape(len(trials), dim)
    return RelaxedSolution(
        theta_relaxed=v[nx:].copy() if optimize_theta else theta0.copy(),
        x0_est=x_est if multi else x_est[0],
        final_cost=float(final_cost),
        iterations=int(res.nit),
        cost_trace=[float(c) for c in trace],
        termination=_termination(pg_norm, gtol, res, max_iter),
        projected_gradient_norm=pg_norm,
    )


@dataclass
class InitialStateResult:
    x0: np.ndarray
    cost: float
    iterations: int
    termination: str
    gradient_norm: float


def _reduced_terms(model, config, C_hat, y_seq, x0):
    traj = simulate(model, x0, y_seq.shape[0] - 1, config)
    residual = y_seq - traj.states @ C_hat.T
    cost = float(np.sum(residual**2))
    grad = -2.0 * sensitivity_transpose_product(model, traj, config, residual @ C_hat)
    return cost, grad


def estimate_initial_state_full(model, config, C_hat, y_seq, x0_init, gtol=1e-8, max_iter=1000):
    """Like :func:`estimate_initial_state` but returns an :class:`InitialStateResult`."""
    C_hat = np.atleast_2d(np.asarray(C_hat, dtype=float))
    if C_hat.shape[1] != model.dim:
        raise DimensionError(f"C_hat must have {model.dim} columns, got {C_hat.shape[1]}")
    y_seq = as_sequence(y_seq, C_hat.shape[0], "y_seq")
    x0 = as_vector(x0_init, model.dim, "x0_init")
    objective = _Objective(lambda v: _reduced_terms(model, config, C_hat, y_seq, v))
    res, _ = _lbfgsb(objective, x0, None, max_iter, gtol)
    cost, grad = _reduced_terms(model, config, C_hat, y_seq, res.x)
    g_norm = float(np.max(np.abs(grad))) if grad.size else 0.0
    return InitialStateResult(
        x0=res.x.copy(),
        cost=cost,
        iterations=int(res.nit),
        termination=_termination(g_norm, gtol, res, max_iter),
        gradient_norm=g_norm,
    )


def estimate_initial_state(model, config, C_hat, y_seq, x0_init, gtol=1e-8, max_iter=1000):
    """Unconstrained quasi-Newton fit of ``x0`` to reduced outputs.

    Minimizes ``||y_{0:L} - (I (x) C_hat) x_{0:L}[x0]||_2^2`` with the
    analytic gradient, stopping at gradient inf-norm ``gtol`` or after
    ``max_iter`` iterations.

    Returns
    -------
    x0_est : ndarray
    final_cost : float
    """
    result = estimate_initial_state_full(model, config, C_hat, y_seq, x0_init, gtol, max_iter)
    return result.x0, result.cost

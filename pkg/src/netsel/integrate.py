"""Forward-Euler and trapezoidal-implicit discretizations, simulation and
initial-condition sensitivities."""

import csv
import os
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from ._validation import as_vector
from .exceptions import (
    NewtonConvergenceError,
    SingularMatrixError,
    StepOverflowError,
    ValidationError,
)

FE = "FE"
TI = "TI"

# compiled loops for the built-in families; NETSEL_DISABLE_JIT=1 forces the reference loops
USE_COMPILED = os.environ.get("NETSEL_DISABLE_JIT", "") in ("", "0")


def _compiled_kernel(model):
    if not USE_COMPILED or model.kernel is None:
        return None
    try:
        from . import _compiled
    except ImportError:  # pragma: no cover - numba missing
        return None
    name, params = model.kernel
    return _compiled, _compiled.FAMILY_CODES[name], params


def _raise_status(compiled, status, step, residual=np.nan, max_iter=0):
    if status == compiled.OVERFLOW:
        raise StepOverflowError(step)
    if status == compiled.NEWTON_FAIL:
        raise NewtonConvergenceError(float(residual), max_iter, step)


class StiffnessWarning(UserWarning):
    """Explicit stepping is likely unstable at the requested step size."""


@dataclass(frozen=True)
class DiscretizationConfig:
    method: str = TI
    h: float = 1e-3
    newton_tol: float = 1e-10
    newton_max_iter: int = 50

    def __post_init__(self):
        method = str(self.method).upper()
        if method not in (FE, TI):
            raise ValidationError(f"method must be 'FE' or 'TI', got {self.method!r}")
        object.__setattr__(self, "method", method)
        if not self.h > 0:
            raise ValidationError("step size h must be positive")
        if not self.newton_tol > 0:
            raise ValidationError("newton_tol must be positive")
        if int(self.newton_max_iter) < 1:
            raise ValidationError("newton_max_iter must be at least 1")


@dataclass(frozen=True)
class Trajectory:
    """States ``x_0 .. x_L`` stacked row-wise, shape ``(L + 1, N * n)``."""

    states: np.ndarray
    h: float
    method: str

    @property
    def L(self):
        return self.states.shape[0] - 1

    @property
    def times(self):
        return self.h * np.arange(self.states.shape[0])


@dataclass(frozen=True)
class SensitivityTrajectory:
    """``S_k = d x_k / d x_0`` stacked, shape ``(L + 1, N * n, N * n)``."""

    sensitivities: np.ndarray


def step_fe(model, x_prev, h, step=None):
    """One explicit step ``x_prev + h f(x_prev)``."""
    x_next = x_prev + h * model.eval_f(x_prev)
    if not np.all(np.isfinite(x_next)):
        raise StepOverflowError(step)
    return x_next


def step_ti(model, x_prev, config, step=None):
    """Solve ``x = x_prev + h/2 (f(x) + f(x_prev))`` by Newton's method.

    The iteration starts from the forward-Euler predictor and uses the dense
    system matrix ``I - h/2 J(x)``.  The step is accepted once the residual
    inf-norm is at most ``newton_tol * max(1, |x|_inf)``.  Raises :class:`NewtonConvergenceError`
    when that test still fails after
    ``config.newton_max_iter`` updates.
    """
    return _newton_ti(model, x_prev, model.eval_f(x_prev), config, step)[0]


def _newton_ti(model, x_prev, f_prev, config, step):
    # returns (x_k, f(x_k)); f(x_k) is a by-product of the final residual check
    h = config.h
    base = x_prev + 0.5 * h * f_prev
    x = x_prev + h * f_prev
    if not np.all(np.isfinite(x)):
        x = x_prev.copy()
    eye = np.eye(x.shape[0])
    res_norm = np.inf
    for it in range(config.newton_max_iter + 1):
        f_x = model.eval_f(x)
        residual = x - 0.5 * h * f_x - base
        res_norm = np.max(np.abs(residual)) if residual.size else 0.0
        # absolute tolerance, relaxed to relative once |x| > 1 (roundoff floor)
        if res_norm <= config.newton_tol * max(1.0, np.max(np.abs(x)) if x.size else 0.0):
            return x, f_x
        if not np.isfinite(res_norm) or it == config.newton_max_iter:
            break
        _, _, delta, info = lapack.dgesv(eye - 0.5 * h * model.eval_jacobian(x), residual)
        if info != 0:
            break
        x = x - delta
    if not np.isfinite(res_norm):
        raise StepOverflowError(step)
    raise NewtonConvergenceError(float(res_norm), config.newton_max_iter, step)


def _warn_if_stiff(model, x0, config):
    if model.family != "crn" or config.method != FE:
        return
    eig = np.linalg.eigvals(model.eval_jacobian(x0))
    if eig.size and config.h * np.max(np.abs(eig.real)) > 2.0:
        warnings.warn(
            "forward Euler on a stiff reaction network; use the TI method",
            StiffnessWarning,
            stacklevel=3,
        )


def simulate(model, x0, L, config):
    """Propagate ``L`` steps from ``x0`` and return a :class:`Trajectory`."""
    L = int(L)
    if L < 0:
        raise ValidationError("horizon L must be nonnegative")
    x = as_vector(x0, model.dim, "x0").copy()
    if not np.all(np.isfinite(x)):
        raise StepOverflowError(0, "initial state is not finite")
    _warn_if_stiff(model, x, config)
    fast = _compiled_kernel(model)
    if fast is not None:
        return _simulate_compiled(fast, x, L, config)
    states = np.empty((L + 1, model.dim))
    states[0] = x
    f_x = model.eval_f(x) if L > 0 and config.method == TI else None
    for k in range(1, L + 1):
        if config.method == FE:
            x = step_fe(model, x, config.h, step=k)
        else:
            x, f_x = _newton_ti(model, x, f_x, config, k)
        states[k] = x
    return Trajectory(states=states, h=config.h, method=config.method)


def _simulate_compiled(fast, x0, L, config):
    compiled, code, params = fast
    try:
        if config.method == FE:
            states, status, step = compiled.simulate_fe(code, params, x0, L, config.h)
        else:
            states, status, step = compiled.simulate_ti(
                code, params, x0, L, config.h, config.newton_tol, int(config.newton_max_iter)
            )
    except np.linalg.LinAlgError:
        # singular Newton matrix: report like the reference loop, as non-convergence
        raise NewtonConvergenceError(float("nan"), config.newton_max_iter, None) from None
    if status != compiled.OK:
        _raise_status(compiled, status, step, max_iter=config.newton_max_iter)
    return Trajectory(states=states, h=config.h, method=config.method)


def sensitivity_transpose_product(model, trajectory, config, weights):
    """``sum_k S_k^T w_k`` for per-step weights ``w`` of shape ``(L + 1, N * n)``.

    Uses a backward (adjoint) sweep when a compiled kernel is available and
    the explicit forward sensitivities otherwise; both give the same vector.
    """
    weights = np.ascontiguousarray(weights, dtype=float)
    fast = _compiled_kernel(model)
    if fast is None:
        S = propagate_sensitivity(model, trajectory, config).sensitivities
        return np.einsum("kij,ki->j", S, weights)
    compiled, code, params = fast
    sweep = compiled.adjoint_fe if config.method == FE else compiled.adjoint_ti
    try:
        grad, status, step = sweep(code, params, np.ascontiguousarray(trajectory.states), weights, config.h)
    except np.linalg.LinAlgError:
        raise SingularMatrixError(None) from None
    if status != compiled.OK:
        _raise_status(compiled, status, step)
    return grad


def propagate_sensitivity(model, trajectory, config):
    """Chain-rule recursion for ``S_k = d x_k / d x_0`` along a trajectory.

    FE: ``S_k = (I + h J(x_{k-1})) S_{k-1}``.
    TI: ``(I - h/2 J(x_k)) S_k = (I + h/2 J(x_{k-1})) S_{k-1}``.
    """
    X = trajectory.states
    dim = X.shape[1]
    h = config.h
    eye = np.eye(dim)
    S = np.empty((X.shape[0], dim, dim))
    S[0] = eye
    jac_prev = model.eval_jacobian(X[0]) if X.shape[0] > 1 else None
    for k in range(1, X.shape[0]):
        if config.method == FE:
            S[k] = S[k - 1] + h * (jac_prev @ S[k - 1])
            if k + 1 < X.shape[0]:
                jac_prev = model.eval_jacobian(X[k])
        else:
            jac_k = model.eval_jacobian(X[k])
            rhs = S[k - 1] + 0.5 * h * (jac_prev @ S[k - 1])
            system = eye - 0.5 * h * jac_k
            if not np.all(np.isfinite(system)):
                raise StepOverflowError(k, f"non-finite Jacobian at step {k}")
            _, _, S[k], info = lapack.dgesv(system, rhs)
            if info != 0:
                raise SingularMatrixError(k)
            jac_prev = jac_k
        if not np.all(np.isfinite(S[k])):
            raise StepOverflowError(k, f"non-finite sensitivity at step {k}")
    return SensitivityTrajectory(sensitivities=S)


def write_trajectory_csv(trajectory, fh, labels=None):
    """Write ``time, x1, ..., x_{Nn}`` rows with 17 significant digits."""
    dim = trajectory.states.shape[1]
    labels = labels or [f"x{i + 1}" for i in range(dim)]
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["time", *labels])
    for t, row in zip(trajectory.times, trajectory.states):
        writer.writerow([f"{t:.17g}", *(f"{v:.17g}" for v in row)])


def read_trajectory_csv(fh, method=TI):
    reader = csv.reader(fh)
    next(reader)
    rows = np.array([[float(v) for v in row] for row in reader if row])
    h = float(rows[1, 0] - rows[0, 0]) if rows.shape[0] > 1 else 0.0
    return Trajectory(states=rows[:, 1:], h=h, method=method)

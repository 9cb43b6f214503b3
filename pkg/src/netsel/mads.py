"""A small mixed-variable mesh adaptive direct search for the joint
selection / initial-state problem.

Each iteration first polls the discrete neighbourhood of the incumbent
selection (drops, feasible adds, one-for-one swaps) with ``x0`` held fixed,
then, if that fails, polls ``2 * dim`` points around ``x0`` along the
columns of a random orthogonal basis (plus/minus), scaled by the mesh size
and projected into the bounds.  Acceptance is opportunistic: the first
strictly improving point in poll order becomes the incumbent.  Infeasible or
failing points get an infinite cost (extreme barrier).

A discrete neighbour is judged with the incumbent's ``x0``, which was tuned
for the incumbent's selection.  Neighbours whose cost comes within a
relative margin of the incumbent therefore get an extended poll: a short
continuous search around ``(neighbour, x0)`` that is accepted once it beats
the incumbent.

Before polling, a search step scans the ray ``c * x0`` of the start point
(bounded scalar search over ``c``).  The relaxed joint problem is nearly
invariant under ``theta -> theta / c, x0 -> c * x0``, so its ``x0`` is often
mis-scaled for the binarized selection.
"""

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from ._validation import as_vector, check_cardinality, check_mode, check_theta
from .estimator import cost_joint
from .exceptions import InfeasibleError, NetselError, ValidationError


@dataclass(frozen=True)
class MadsConfig:
    initial_mesh: float = 0.1
    mesh_shrink: float = 0.5
    mesh_expand: float = 2.0
    max_evals: Optional[int] = None
    min_mesh: float = 1e-9
    max_mesh: float = 1.0
    extended_poll_margin: float = 1.0
    extended_poll_iters: int = 10
    scale_search: bool = True
    scale_range: tuple = (0.25, 4.0)
    scale_search_evals: int = 40
    seed: Optional[int] = 0

    def __post_init__(self):
        if not 0 < self.mesh_shrink < 1 <= self.mesh_expand:
            raise ValidationError("need 0 < mesh_shrink < 1 <= mesh_expand")
        if self.max_evals is not None and int(self.max_evals) < 1:
            raise ValidationError("max_evals must be at least 1")
        if not 0 < self.initial_mesh <= self.max_mesh:
            raise ValidationError("need 0 < initial_mesh <= max_mesh")
        if self.extended_poll_margin < 0 or int(self.extended_poll_iters) < 0:
            raise ValidationError("extended poll settings must be nonnegative")

    def budget(self, N):
        """Evaluation budget; defaults to ``200 * N``."""
        return int(self.max_evals) if self.max_evals is not None else 200 * N


@dataclass
class Incumbent:
    theta: np.ndarray
    x0: np.ndarray
    cost: float
    evaluations: int = 0
    iterations: int = 0
    history: list = field(default_factory=list)

    @property
    def selected(self):
        return [int(i) + 1 for i in np.flatnonzero(self.theta)]


def binarize(theta_relaxed, m_max):
    """Keep the ``m_max`` largest relaxed entries (lower index wins ties)."""
    theta_relaxed = np.asarray(theta_relaxed, dtype=float)
    order = np.argsort(-theta_relaxed, kind="stable")
    theta = np.zeros(theta_relaxed.size)
    theta[order[:m_max]] = 1.0
    return theta


def poll_binary(theta, m_max, mode="LE"):
    """Discrete neighbours of a feasible binary selection.

    Returns drops, then adds (only while the count stays within ``m_max``;
    none in EQ mode), then swaps, each group in index order.  Every
    neighbour is feasible and no neighbour repeats.
    """
    theta = check_theta(theta, np.size(theta), binary=True)
    mode = check_mode(mode)
    on, off = np.flatnonzero(theta), np.flatnonzero(theta == 0)
    count = on.size
    if (mode == "LE" and count > m_max) or (mode == "EQ" and count != m_max):
        raise InfeasibleError("poll centre violates the cardinality constraint")
    neighbours = []
    if mode == "LE":
        for i in on:
            t = theta.copy()
            t[i] = 0.0
            neighbours.append(t)
        if count < m_max:
            for j in off:
                t = theta.copy()
                t[j] = 1.0
                neighbours.append(t)
    for i in on:
        for j in off:
            t = theta.copy()
            t[i], t[j] = 0.0, 1.0
            neighbours.append(t)
    return neighbours


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def poll_continuous(x0, mesh_size, bounds, seed=None):
    """``2 * len(x0)`` poll points ``x0 +/- mesh_size * q_i`` for a random
    orthogonal basis ``q``, clipped to ``bounds = (lower, upper)``."""
    if not mesh_size > 0:
        raise ValidationError("mesh_size must be positive")
    x0 = as_vector(x0, name="x0")
    lo, hi = bounds
    rng = _rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((x0.size, x0.size)))
    q = q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))
    points = []
    for i in range(x0.size):
        points.append(np.clip(x0 + mesh_size * q[:, i], lo, hi))
        points.append(np.clip(x0 - mesh_size * q[:, i], lo, hi))
    return points


def _feasible(theta, m_max, mode):
    count = int(theta.sum())
    return count <= m_max if mode == "LE" else count == m_max


def mads_solve(problem, start_theta_relaxed, start_x0, m_max, config=None, mode="LE"):
    """Search for a binary selection and initial state with low joint cost.

    The relaxed start is binarized by :func:`binarize` and ``start_x0`` is
    projected into the bounds; the projected start costs one evaluation.
    The incumbent cost never increases and the number of cost evaluations
    never exceeds the budget.  The run is deterministic for a given
    ``config.seed``.
    """
    config = config or MadsConfig()
    mode = check_mode(mode)
    N = problem.model.N
    m_max = check_cardinality(m_max, N, mode)
    budget = config.budget(N)
    theta = binarize(check_theta(start_theta_relaxed, N), m_max)
    if not _feasible(theta, m_max, mode):
        raise InfeasibleError("no feasible start selection can be constructed")
    x0 = np.clip(as_vector(start_x0, problem.model.dim, "start_x0"), problem.lower, problem.upper)
    bounds = (problem.lower, problem.upper)
    rng = _rng(config.seed)
    evals = 0

    def evaluate(t, x):
        nonlocal evals
        evals += 1
        if not _feasible(t, m_max, mode):
            return np.inf
        try:
            c = cost_joint(problem, t, x)
        except (NetselError, FloatingPointError, np.linalg.LinAlgError):
            return np.inf
        return c if np.isfinite(c) else np.inf

    def continuous_poll(t, x, c, mesh):
        # one opportunistic poll around x; returns (x, c, improved)
        for xp in poll_continuous(x, mesh, bounds, rng):
            if evals >= budget:
                break
            cp = evaluate(t, xp)
            if cp < c:
                return xp, cp, True
        return x, c, False

    def resize(mesh, improved):
        return min(mesh * config.mesh_expand, config.max_mesh) if improved else mesh * config.mesh_shrink

    def extended_poll(t, c_t, target):
        x, c, mesh = x0, c_t, config.initial_mesh
        for _ in range(int(config.extended_poll_iters)):
            if evals >= budget or mesh < config.min_mesh:
                break
            x, c, improved = continuous_poll(t, x, c, mesh)
            if c < target:
                return x, c
            mesh = resize(mesh, improved)
        return None

    def scale_search(x_start, c_start):
        best = [x_start, c_start]
        limit = min(int(config.scale_search_evals), budget - evals)

        def along_ray(c):
            if evals >= budget or limit <= 0:
                return np.inf
            x = np.clip(c * x_start, problem.lower, problem.upper)
            val = evaluate(theta, x)
            if val < best[1]:
                best[0], best[1] = x, val
            return val if np.isfinite(val) else 1e300

        lo_c, hi_c = config.scale_range
        minimize_scalar(along_ray, bounds=(lo_c, hi_c), method="bounded",
                        options={"maxiter": max(limit, 1), "xatol": 1e-6})
        return best[0], best[1]

    cost = evaluate(theta, x0)
    if not np.isfinite(cost):
        raise InfeasibleError("cost is not finite at the projected start point")
    if config.scale_search and budget - evals > 1 and np.any(x0):
        x0, cost = scale_search(x0, cost)
    mesh = config.initial_mesh
    history = [(0, evals, cost, mesh)]
    iteration = 0
    while evals < budget and mesh >= config.min_mesh:
        iteration += 1
        improved = False
        near = []
        for t in poll_binary(theta, m_max, mode):
            if evals >= budget:
                break
            c = evaluate(t, x0)
            if c < cost:
                theta, cost, improved = t, c, True
                break
            if c <= cost * (1.0 + config.extended_poll_margin):
                near.append((c, t))
        if not improved:
            x0, cost, improved = continuous_poll(theta, x0, cost, mesh)
            mesh = resize(mesh, improved)
        if not improved:
            # most promising neighbours first; order is deterministic (cost, then poll order)
            for c_t, t in sorted(near, key=lambda item: item[0]):
                if evals >= budget:
                    break
                found = extended_poll(t, c_t, cost)
                if found is not None:
                    theta, (x0, cost), improved = t, found, True
                    break
        history.append((iteration, evals, cost, mesh))
    return Incumbent(theta=theta, x0=x0, cost=float(cost), evaluations=evals, iterations=iteration, history=history)


def write_mads_log(incumbent, fh):
    """CSV iteration log: iteration, evals, incumbent cost, mesh size."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["iteration", "evals", "cost", "mesh"])
    for it, ev, c, mesh in incumbent.history:
        writer.writerow([it, ev, f"{c:.17g}", f"{mesh:.17g}"])

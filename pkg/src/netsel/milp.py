"""Exact solvers for the two selection MILPs.

Both programs separate over nodes, so their optima follow from sorting:

* the l1 output-fit program compares, node by node, the residual mass left
  when the node is dropped (``sum_j |z_j^(i)|``) against the mass when it is
  kept (``sum_j |z_j^(i) - xt_j^(i)|``);
* the min-max rounding program keeps the largest relaxed entries.

Ties are broken toward lower node indices.  :func:`enumerate_selections`
provides the brute-force oracle used to certify both.
"""

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from ._validation import as_sequence, check_cardinality, check_mode, check_theta
from .exceptions import DimensionError, EnumerationCapError

DEFAULT_ENUMERATION_CAP = 2_000_000


@dataclass(frozen=True)
class Milp1Instance:
    """Full outputs ``z`` and predicted first coordinates ``xt``, both ``(L+1, N)``."""

    z_seq: np.ndarray
    xtilde_outputs: np.ndarray
    m_max: int
    mode: str = "EQ"

    def __post_init__(self):
        z = as_sequence(self.z_seq)
        xt = as_sequence(self.xtilde_outputs, name="xtilde_outputs")
        if z.shape != xt.shape:
            raise DimensionError(f"z_seq {z.shape} and xtilde_outputs {xt.shape} differ in shape")
        mode = check_mode(self.mode)
        object.__setattr__(self, "z_seq", z)
        object.__setattr__(self, "xtilde_outputs", xt)
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "m_max", check_cardinality(self.m_max, z.shape[1], mode))

    @property
    def N(self):
        return self.z_seq.shape[1]


@dataclass(frozen=True)
class Milp2Instance:
    theta_relaxed: np.ndarray
    m_max: int
    mode: str = "EQ"

    def __post_init__(self):
        theta = check_theta(self.theta_relaxed, np.size(self.theta_relaxed), name="theta_relaxed")
        mode = check_mode(self.mode)
        object.__setattr__(self, "theta_relaxed", theta)
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "m_max", check_cardinality(self.m_max, theta.size, mode))

    @property
    def N(self):
        return self.theta_relaxed.size


def milp1_objective(instance, theta):
    """``sum_j sum_i |z_j^(i) - theta_i xt_j^(i)|``."""
    return float(np.abs(instance.z_seq - np.asarray(theta, dtype=float) * instance.xtilde_outputs).sum())


def milp2_objective(instance, theta):
    """``max_i |theta_i - theta~_i|`` (zero for an empty vector)."""
    diff = np.abs(np.asarray(theta, dtype=float) - instance.theta_relaxed)
    return float(diff.max()) if diff.size else 0.0


def _top(scores, m):
    # indices of the m largest scores; stable sort keeps lower indices first on ties
    order = np.argsort(-np.asarray(scores, dtype=float), kind="stable")
    return order[:m]


def solve_milp1(instance):
    """Optimal selection for the separable l1 output-fit program.

    Returns
    -------
    theta_hat : ndarray of 0/1
    objective : float
    """
    kept = np.abs(instance.z_seq - instance.xtilde_outputs).sum(axis=0)
    dropped = np.abs(instance.z_seq).sum(axis=0)
    gain = dropped - kept
    order = _top(gain, instance.N)
    if instance.mode == "EQ":
        chosen = order[: instance.m_max]
    else:
        chosen = [i for i in order[: instance.m_max] if gain[i] > 0]
    theta = np.zeros(instance.N)
    theta[np.asarray(chosen, dtype=int)] = 1.0
    return theta, milp1_objective(instance, theta)


def _milp2_eq(theta_relaxed, m):
    theta = np.zeros(theta_relaxed.size)
    theta[_top(theta_relaxed, m)] = 1.0
    return theta


def solve_milp2(instance):
    """Optimal min-max rounding of a relaxed selection.

    EQ mode keeps the ``m_max`` largest relaxed entries.  LE mode solves the
    EQ problem for every cardinality ``0..m_max`` and keeps the smallest
    objective, preferring fewer nodes on ties.

    Returns
    -------
    theta_hat : ndarray of 0/1
    q_opt : float
    """
    tr = instance.theta_relaxed
    sizes = [instance.m_max] if instance.mode == "EQ" else range(instance.m_max + 1)
    best_theta, best_q = None, np.inf
    for m in sizes:
        theta = _milp2_eq(tr, m)
        q = milp2_objective(instance, theta)
        if q < best_q:
            best_theta, best_q = theta, q
    return best_theta, best_q


def count_selections(N, m_max, mode):
    mode = check_mode(mode)
    sizes = [m_max] if mode == "EQ" else range(m_max + 1)
    return sum(comb(N, k) for k in sizes)


def enumerate_selections(N, m_max, mode, cap=DEFAULT_ENUMERATION_CAP):
    """Yield every feasible binary selection exactly once.

    Selections come in increasing cardinality; within one cardinality the
    selected index tuples are in lexicographic order, so for ``N=3, m_max=1``
    EQ mode yields ``[1,0,0], [0,1,0], [0,0,1]``.  Refuses with
    :class:`EnumerationCapError` when the count exceeds ``cap``.
    """
    mode = check_mode(mode)
    m_max = check_cardinality(m_max, N, mode)
    count = count_selections(N, m_max, mode)
    if count > cap:
        raise EnumerationCapError(count, cap)
    return _iter_selections(N, m_max, mode)


def _iter_selections(N, m_max, mode):
    sizes = [m_max] if mode == "EQ" else range(m_max + 1)
    for k in sizes:
        for idx in combinations(range(N), k):
            theta = np.zeros(N)
            theta[list(idx)] = 1.0
            yield theta

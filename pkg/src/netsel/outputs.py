"""Output parametrization ``z_k = C_theta x_k`` and its lift over a horizon.

A node is observed through its first local coordinate.  For ``n = 1`` the
parametrized matrix is ``diag(theta)``; for ``n > 1`` row ``i`` holds
``theta_i`` at column ``i * n`` and zeros elsewhere.  The lifted matrix
``I_{L+1} (x) C_theta`` is never materialized.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import as_vector, check_cardinality, check_mode, check_theta
from .exceptions import DimensionError, EmptySelectionError, ValidationError


@dataclass(frozen=True)
class OutputParametrization:
    N: int
    n: int = 1

    @property
    def dim(self):
        return self.N * self.n

    @property
    def form(self):
        return "diagonal" if self.n == 1 else "block"

    @classmethod
    def for_model(cls, model):
        return cls(N=model.N, n=model.n)

    def matrix(self, theta):
        """Dense ``C_theta[theta]`` of shape ``(N, N * n)``."""
        theta = as_vector(theta, self.N, "theta")
        C = np.zeros((self.N, self.dim))
        C[np.arange(self.N), np.arange(self.N) * self.n] = theta
        return C

    def observed(self, states):
        """First local coordinate of every node; works on one state or a stack."""
        states = np.asarray(states, dtype=float)
        if states.shape[-1] != self.dim:
            raise DimensionError(f"state width must be {self.dim}, got {states.shape[-1]}")
        return states[..., 0 :: self.n]


def apply_output(param, theta, x):
    """``C_theta[theta] x``: entry ``i`` is ``theta_i * x_{i1}``."""
    theta = as_vector(theta, param.N, "theta")
    x = as_vector(x, param.dim, "x")
    return theta * param.observed(x)


def lift_outputs(param, theta, trajectory):
    """Stacked outputs ``(I_{L+1} (x) C_theta) x_{0:L}``, length ``(L+1) N``."""
    theta = as_vector(theta, param.N, "theta")
    states = getattr(trajectory, "states", trajectory)
    return (theta * param.observed(states)).reshape(-1)


def restrict_output_matrix(param, theta_binary):
    """Rows of ``C_theta[theta]`` for selected nodes, ascending node order."""
    theta = check_theta(theta_binary, param.N, binary=True)
    selected = np.flatnonzero(theta)
    if selected.size == 0:
        raise EmptySelectionError("selection vector selects no node")
    return param.matrix(np.ones(param.N))[selected]


@dataclass(frozen=True)
class SelectionVector:
    """A selection ``theta`` together with its cardinality constraint."""

    theta: np.ndarray
    m_max: int
    mode: str = "LE"

    def __post_init__(self):
        theta = as_vector(self.theta, name="theta").copy()
        mode = check_mode(self.mode)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "m_max", check_cardinality(self.m_max, theta.size, "LE"))
        if np.any(theta < 0) or np.any(theta > 1):
            raise ValidationError("theta entries must lie in [0, 1]")
        if self.is_binary:
            count = int(theta.sum())
            if (mode == "LE" and count > self.m_max) or (mode == "EQ" and count != self.m_max):
                raise ValidationError(
                    f"binary theta selects {count} nodes, violating {mode} constraint with m_max={self.m_max}"
                )

    @property
    def N(self):
        return self.theta.size

    @property
    def is_binary(self):
        return bool(np.all((self.theta == 0) | (self.theta == 1)))

    @property
    def indices(self):
        """Selected nodes, 1-based."""
        return [int(i) + 1 for i in np.flatnonzero(self.theta == 1)]

    @classmethod
    def from_indices(cls, indices, N, m_max=None, mode="LE"):
        theta = np.zeros(N)
        idx = np.asarray(list(indices), dtype=int)
        if idx.size and (idx.min() < 1 or idx.max() > N):
            raise ValidationError(f"node indices must lie in 1..{N}")
        theta[idx - 1] = 1.0
        return cls(theta=theta, m_max=len(idx) if m_max is None else m_max, mode=mode)

    def to_dict(self):
        return {"N": self.N, "m_max": self.m_max, "mode": self.mode, "selected": self.indices}

    @classmethod
    def from_dict(cls, doc):
        return cls.from_indices(doc["selected"], doc["N"], doc["m_max"], doc.get("mode", "LE"))

"""Continuous-time network vector fields with hand-derived Jacobians.

Every model family exposes a spec dataclass holding its parameters, a pair
of pure functions ``<family>_vector_field`` / ``<family>_jacobian`` and a
``<family>_model`` factory that packs them into a :class:`NetworkModel`.
Jacobians are in numerator layout: entry ``(r, c)`` is ``df_r / dx_c``.

Global states are laid out node by node, ``x = col(x^(1), ..., x^(N))`` with
``x^(i)`` of length ``n``.
"""

from dataclasses import dataclass, field
from functools import partial
from importlib import resources
from typing import Callable, Optional

import numpy as np
from scipy.sparse.csgraph import connected_components

from ._validation import as_vector
from .exceptions import DimensionError, DomainError, ValidationError


@dataclass(frozen=True)
class NetworkModel:
    """A network ``dx/dt = f(x)`` with ``N`` nodes of local dimension ``n``."""

    N: int
    n: int
    eval_f: Callable[[np.ndarray], np.ndarray]
    eval_jacobian: Callable[[np.ndarray], np.ndarray]
    label: str = "generic"
    family: str = "generic"
    spec: object = field(default=None, compare=False, repr=False)
    # (family kernel name, parameter tuple) for the compiled integrators, if any
    kernel: Optional[tuple] = field(default=None, compare=False, repr=False)

    @property
    def dim(self):
        """Length ``N * n`` of the global state."""
        return self.N * self.n

    def f(self, x):
        return self.eval_f(as_vector(x, self.dim, "state"))

    def jacobian(self, x):
        return self.eval_jacobian(as_vector(x, self.dim, "state"))


def _kernel_params(*arrays):
    # the compiled kernels take exactly five C-contiguous 2-D float arrays
    out = [np.ascontiguousarray(np.atleast_2d(np.asarray(a, dtype=float))) for a in arrays]
    out += [np.zeros((1, 1))] * (5 - len(out))
    return tuple(out)


# ---------------------------------------------------------------------------
# associative memory network

@dataclass(frozen=True)
class MemoryNetworkSpec:
    patterns: np.ndarray
    gamma: float = 0.8
    beta: Optional[np.ndarray] = None

    def __post_init__(self):
        patterns = np.atleast_2d(np.asarray(self.patterns, dtype=float))
        N = patterns.shape[1]
        beta = hebb_weights(patterns, N) if self.beta is None else np.asarray(self.beta, dtype=float)
        if beta.shape != (N, N):
            raise DimensionError(f"beta must be {N}x{N}, got {beta.shape}")
        if not np.allclose(beta, beta.T, rtol=0.0, atol=1e-12):
            raise ValidationError("beta must be symmetric")
        object.__setattr__(self, "patterns", patterns)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def N(self):
        return self.patterns.shape[1]


def hebb_weights(patterns, N):
    """Coupling matrix ``beta_ij = (1/N) sum_w zeta_i^w zeta_j^w`` of Hebb's rule.

    Parameters
    ----------
    patterns : array_like, shape (p, N)
        Binary patterns with entries exactly +1 or -1.
    N : int
        Number of nodes; every pattern must have this length.

    Returns
    -------
    ndarray, shape (N, N)
        Symmetric weights with diagonal ``p / N``.
    """
    zeta = np.atleast_2d(np.asarray(patterns, dtype=float))
    if zeta.shape[0] < 1:
        raise ValidationError("at least one pattern is required")
    if zeta.shape[1] != N:
        raise DimensionError(f"patterns must have length {N}, got {zeta.shape[1]}")
    if not np.all(np.abs(zeta) == 1.0):
        raise ValidationError("pattern entries must be +1 or -1")
    return zeta.T @ zeta / N


def _memory_f(spec, x):
    diff = x[None, :] - x[:, None]
    return (spec.beta * np.sin(diff)).sum(axis=1) + spec.gamma / spec.N * np.sin(2.0 * diff).sum(axis=1)


def _memory_jac(spec, x):
    diff = x[None, :] - x[:, None]
    coupling = spec.beta * np.cos(diff) + 2.0 * spec.gamma / spec.N * np.cos(2.0 * diff)
    np.fill_diagonal(coupling, 0.0)
    jac = coupling
    jac[np.diag_indices_from(jac)] = -coupling.sum(axis=1)
    return jac


def memory_vector_field(spec, x):
    """Right-hand side ``sum_j beta_ij sin(x_j - x_i) + gamma/N sum_j sin 2(x_j - x_i)``."""
    return _memory_f(spec, as_vector(x, spec.N, "state"))


def memory_jacobian(spec, x):
    return _memory_jac(spec, as_vector(x, spec.N, "state"))


def memory_model(spec, label="memory"):
    return NetworkModel(
        N=spec.N,
        n=1,
        eval_f=partial(_memory_f, spec),
        eval_jacobian=partial(_memory_jac, spec),
        label=label,
        family="memory",
        spec=spec,
        kernel=("memory", _kernel_params(spec.beta, [[spec.gamma / spec.N]])),
    )


def load_letters():
    """Canonical 5x5 letter bitmaps shipped in ``netsel/data/letters_5x5.txt``.

    Returns a dict mapping each letter to a length-25 vector of +1 (ink) and
    -1 (blank), rows read top to bottom.
    """
    text = resources.files("netsel").joinpath("data/letters_5x5.txt").read_text()
    letters = {}
    current, rows = None, []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith(";"):
            continue
        if line.startswith("[") and line.endswith("]"):
            if current is not None:
                letters[current] = rows
            current, rows = line[1:-1], []
        else:
            rows.append(line)
    if current is not None:
        letters[current] = rows
    out = {}
    for name, rows in letters.items():
        if len(rows) != 5 or any(len(r) != 5 for r in rows):
            raise ValidationError(f"letter {name!r} is not a 5x5 bitmap")
        out[name] = np.array([1.0 if ch == "#" else -1.0 for r in rows for ch in r])
    return out


def letter_memory_spec(letters=("H", "T", "L"), gamma=0.8):
    """Memory network storing the given 5x5 letters (N = 25)."""
    bitmaps = load_letters()
    return MemoryNetworkSpec(patterns=np.vstack([bitmaps[c] for c in letters]), gamma=gamma)


def perturbed_pattern(pattern, noise_scale=1.0, seed=None):
    """Pattern plus ``noise_scale`` times standard Gaussian noise."""
    rng = np.random.default_rng(seed)
    pattern = np.asarray(pattern, dtype=float)
    return pattern + noise_scale * rng.standard_normal(pattern.shape)


# ---------------------------------------------------------------------------
# Duffing oscillator network

@dataclass(frozen=True)
class DuffingNetworkSpec:
    """Damped Duffing oscillators with nonlinear couplings.

    ``eta``, ``chi`` and ``rho`` are N x N arrays: the diagonal holds the
    self terms, off-diagonal entries the coupling terms (ignored where
    ``adjacency`` is False).
    """

    adjacency: np.ndarray
    eta: np.ndarray
    chi: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        N = adj.shape[0]
        if adj.shape != (N, N):
            raise DimensionError("adjacency must be square")
        if not np.array_equal(adj, adj.T):
            raise ValidationError("adjacency must be symmetric")
        adj = adj.copy()
        np.fill_diagonal(adj, False)
        object.__setattr__(self, "adjacency", adj)
        for name in ("eta", "chi", "rho"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (N, N):
                raise DimensionError(f"{name} must be {N}x{N}, got {arr.shape}")
            object.__setattr__(self, name, arr)
        if np.any(self.eta < 0):
            raise ValidationError("stiffness coefficients eta must be nonnegative")

    @property
    def N(self):
        return self.adjacency.shape[0]

    def coupling(self, name):
        """Off-diagonal coefficients masked by the adjacency."""
        return np.where(self.adjacency, getattr(self, name), 0.0)

    @property
    def _kernel(self):
        # linear part as one (2N x 2N) matrix plus cubic coefficients, built once per spec
        cached = self.__dict__.get("_kernel_cache")
        if cached is None:
            N = self.N
            eta_c, chi_c, rho_c = self.coupling("eta"), self.coupling("chi"), self.coupling("rho")
            lin = np.zeros((2 * N, 2 * N))
            lin[0::2, 1::2] = np.eye(N)
            lin[1::2, 0::2] = eta_c - np.diag(np.diag(self.eta) + eta_c.sum(axis=1))
            lin[1::2, 1::2] = rho_c - np.diag(np.diag(self.rho) + rho_c.sum(axis=1))
            cached = (lin, chi_c, np.diag(self.chi).copy())
            object.__setattr__(self, "_kernel_cache", cached)
        return cached


def _duffing_f(spec, x):
    lin, chi_c, chi_s = spec._kernel
    pos = x[0::2]
    d_pos = pos[:, None] - pos[None, :]
    out = lin @ x
    out[1::2] += chi_s * pos * pos * pos + (chi_c * d_pos * d_pos * d_pos).sum(axis=1)
    return out


def _duffing_jac(spec, x):
    lin, chi_c, chi_s = spec._kernel
    pos = x[0::2]
    d_pos = pos[:, None] - pos[None, :]
    cubic = 3.0 * chi_c * d_pos * d_pos
    block = -cubic
    block[np.diag_indices(pos.shape[0])] = 3.0 * chi_s * pos * pos + cubic.sum(axis=1)
    jac = lin.copy()
    jac[1::2, 0::2] += block
    return jac


def duffing_vector_field(spec, x):
    """Position rates equal velocities; velocity rates follow the coupled Duffing law."""
    return _duffing_f(spec, as_vector(x, 2 * spec.N, "state"))


def duffing_jacobian(spec, x):
    return _duffing_jac(spec, as_vector(x, 2 * spec.N, "state"))


def duffing_model(spec, label="duffing"):
    return NetworkModel(
        N=spec.N,
        n=2,
        eval_f=partial(_duffing_f, spec),
        eval_jacobian=partial(_duffing_jac, spec),
        label=label,
        family="duffing",
        spec=spec,
        kernel=("duffing", _kernel_params(*spec._kernel)),
    )


@dataclass(frozen=True)
class GeometricGraphConfig:
    N: int
    radius: Optional[float] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if int(self.N) < 2:
            raise ValidationError("a geometric graph needs N >= 2")
        radius = np.sqrt(1.44 / self.N) if self.radius is None else float(self.radius)
        if radius < 0:
            raise ValidationError("radius must be nonnegative")
        object.__setattr__(self, "radius", radius)


def place_nodes(config):
    """Uniform node positions on the unit square, shape (N, 2)."""
    return np.random.default_rng(config.seed).uniform(size=(config.N, 2))


def generate_geometric_graph(config):
    """Boolean adjacency joining nodes at Euclidean distance <= radius."""
    pts = place_nodes(config)
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    adj = dist <= config.radius
    np.fill_diagonal(adj, False)
    return adj


def sample_duffing_params(adjacency, seed=None):
    """Draw eta ~ U[10, 20] and chi, rho ~ U[1, 2], symmetric in (i, j).

    Self terms share the coupling distributions.  Coefficients of absent
    edges are set to zero.
    """
    adj = np.asarray(adjacency, dtype=bool)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1] or not np.array_equal(adj, adj.T):
        raise ValidationError("adjacency must be a symmetric square matrix")
    N = adj.shape[0]
    rng = np.random.default_rng(seed)
    mask = adj | np.eye(N, dtype=bool)

    def draw(low, high):
        upper = np.triu(rng.uniform(low, high, size=(N, N)))
        sym = upper + np.triu(upper, 1).T
        return np.where(mask, sym, 0.0)

    eta = draw(10.0, 20.0)
    chi = draw(1.0, 2.0)
    rho = draw(1.0, 2.0)
    return DuffingNetworkSpec(adjacency=adj, eta=eta, chi=chi, rho=rho)


def is_connected(adjacency):
    adj = np.asarray(adjacency, dtype=bool)
    n_components, _ = connected_components(adj, directed=False)
    return n_components <= 1


def random_duffing_spec(N, seed=None, radius=None, connected=False, max_tries=1000):
    """Geometric-random-graph Duffing network; graph and parameters share ``seed``.

    With ``connected=True`` graphs are redrawn (deterministically, from the
    same seed sequence) until one is connected.
    """
    seq = np.random.SeedSequence(seed)
    for _ in range(int(max_tries)):
        graph_seed, param_seed = (int(s.generate_state(1)[0]) for s in seq.spawn(2))
        adj = generate_geometric_graph(GeometricGraphConfig(N=N, radius=radius, seed=graph_seed))
        if not connected or is_connected(adj):
            return sample_duffing_params(adj, seed=param_seed)
    raise ValidationError(f"no connected graph found in {max_tries} draws; increase the radius")


# ---------------------------------------------------------------------------
# mass-action chemical reaction network

@dataclass(frozen=True)
class CrnSpec:
    """Reversible mass-action network ``sum_i pi_ji S_i <=> sum_i omega_ji S_i``.

    Stoichiometry arrays have shape (reactions, species).
    """

    reactant_stoich: np.ndarray
    product_stoich: np.ndarray
    forward_rates: np.ndarray
    backward_rates: np.ndarray
    stoich_matrix: Optional[np.ndarray] = None
    species: Optional[tuple] = None

    def __post_init__(self):
        pi = np.atleast_2d(np.asarray(self.reactant_stoich))
        om = np.atleast_2d(np.asarray(self.product_stoich))
        if pi.shape != om.shape:
            raise DimensionError("reactant and product stoichiometry must have the same shape")
        if not (np.all(pi == np.round(pi)) and np.all(om == np.round(om))):
            raise ValidationError("stoichiometric coefficients must be integers")
        if np.any(pi < 0) or np.any(om < 0):
            raise ValidationError("stoichiometric coefficients must be nonnegative")
        pi, om = pi.astype(int), om.astype(int)
        R = pi.shape[0]
        vf = as_vector(self.forward_rates, R, "forward_rates")
        vb = as_vector(self.backward_rates, R, "backward_rates")
        if np.any(vf <= 0):
            raise ValidationError("forward rates must be positive")
        if np.any(vb < 0):
            raise ValidationError("backward rates must be nonnegative")
        phi = (om - pi).T.astype(float)
        if self.stoich_matrix is not None and not np.array_equal(np.asarray(self.stoich_matrix, dtype=float), phi):
            raise ValidationError("stored stoichiometric matrix disagrees with omega - pi")
        for name, val in (("reactant_stoich", pi), ("product_stoich", om), ("forward_rates", vf),
                          ("backward_rates", vb), ("stoich_matrix", phi)):
            object.__setattr__(self, name, val)
        if self.species is not None:
            species = tuple(self.species)
            if len(species) != pi.shape[1]:
                raise DimensionError("species names must match the stoichiometry width")
            object.__setattr__(self, "species", species)

    @property
    def N(self):
        return self.reactant_stoich.shape[1]

    @property
    def num_reactions(self):
        return self.reactant_stoich.shape[0]


def _monomials(x, powers):
    # rows of prod_i x_i^powers_ji; exact integer powers so negative x is well defined
    return np.prod(x[None, :] ** powers, axis=1)


def _monomial_gradients(x, powers):
    grad = np.zeros(powers.shape)
    for k in range(powers.shape[1]):
        active = powers[:, k] > 0
        if not np.any(active):
            continue
        reduced = powers[active].copy()
        reduced[:, k] -= 1
        grad[active, k] = powers[active, k] * _monomials(x, reduced)
    return grad


def reaction_rates(spec, x):
    """Net rates ``lambda_j = v_j^f prod x^pi_j - v_j^b prod x^omega_j``."""
    return spec.forward_rates * _monomials(x, spec.reactant_stoich) - spec.backward_rates * _monomials(
        x, spec.product_stoich
    )


def _crn_f(spec, x):
    return spec.stoich_matrix @ reaction_rates(spec, x)


def _crn_jac(spec, x):
    dlam = spec.forward_rates[:, None] * _monomial_gradients(x, spec.reactant_stoich) - spec.backward_rates[
        :, None
    ] * _monomial_gradients(x, spec.product_stoich)
    return spec.stoich_matrix @ dlam


def _check_concentrations(x, N):
    x = as_vector(x, N, "concentrations")
    if np.any(x < 0):
        raise DomainError("concentrations must be nonnegative")
    return x


def crn_vector_field(spec, x):
    """Mass-action right-hand side ``Phi lambda(x)`` for ``x >= 0``."""
    return _crn_f(spec, _check_concentrations(x, spec.N))


def crn_jacobian(spec, x):
    return _crn_jac(spec, _check_concentrations(x, spec.N))


def crn_model(spec, label="crn"):
    """Wrap a CRN as a :class:`NetworkModel`.

    The wrapped callables evaluate the polynomial extension of the rate laws
    so that implicit solvers and optimizers may visit slightly negative
    iterates; use :func:`crn_vector_field` for a domain-checked evaluation.
    """
    return NetworkModel(
        N=spec.N,
        n=1,
        eval_f=partial(_crn_f, spec),
        eval_jacobian=partial(_crn_jac, spec),
        label=label,
        family="crn",
        spec=spec,
        kernel=(
            "crn",
            _kernel_params(
                spec.stoich_matrix, spec.reactant_stoich, spec.product_stoich, spec.forward_rates, spec.backward_rates
            ),
        ),
    )


def crn_from_reactions(species, reactions):
    """Build a :class:`CrnSpec` from readable reaction records.

    ``reactions`` is a sequence of dicts with ``reactants`` and ``products``
    (species name to coefficient), ``kf`` and optional ``kb`` (default 0).
    """
    index = {s: i for i, s in enumerate(species)}
    R, N = len(reactions), len(species)
    pi = np.zeros((R, N), dtype=int)
    om = np.zeros((R, N), dtype=int)
    kf, kb = np.zeros(R), np.zeros(R)
    for j, rxn in enumerate(reactions):
        for name, coef in rxn.get("reactants", {}).items():
            pi[j, index[name]] += int(coef)
        for name, coef in rxn.get("products", {}).items():
            om[j, index[name]] += int(coef)
        kf[j] = rxn["kf"]
        kb[j] = rxn.get("kb", 0.0)
    return CrnSpec(pi, om, kf, kb, species=tuple(species))


def load_builtin_crn(name="h2o2_toy"):
    """A CRN shipped in ``netsel/data/<name>.json``."""
    import json

    doc = json.loads(resources.files("netsel").joinpath(f"data/{name}.json").read_text())
    return crn_from_reactions(doc["species"], doc["reactions"])


# ---------------------------------------------------------------------------
# generic polynomial vector field

@dataclass(frozen=True)
class PolynomialSpec:
    """Sparse polynomial field: ``f_r(x) = sum_t coef_t prod_i x_i^p_ti`` over terms of row r.

    ``terms`` is a sequence of ``(row, coef, {index: power})`` triples.
    """

    N: int
    n: int
    terms: tuple

    def __post_init__(self):
        dim = int(self.N) * int(self.n)
        rows, coefs, powers = [], [], np.zeros((len(self.terms), dim), dtype=int)
        for t, (row, coef, pw) in enumerate(self.terms):
            if not 0 <= int(row) < dim:
                raise DimensionError(f"term row {row} out of range for state of length {dim}")
            rows.append(int(row))
            coefs.append(float(coef))
            for idx, p in dict(pw).items():
                idx, p = int(idx), int(p)
                if not 0 <= idx < dim or p < 0:
                    raise ValidationError(f"invalid power entry {idx}: {p}")
                powers[t, idx] = p
        object.__setattr__(self, "_rows", np.array(rows, dtype=int))
        object.__setattr__(self, "_coefs", np.array(coefs))
        object.__setattr__(self, "_powers", powers)

    @property
    def dim(self):
        return self.N * self.n


def polynomial_vector_field(spec, x):
    x = as_vector(x, spec.dim, "state")
    out = np.zeros(spec.dim)
    np.add.at(out, spec._rows, spec._coefs * _monomials(x, spec._powers))
    return out


def polynomial_jacobian(spec, x):
    x = as_vector(x, spec.dim, "state")
    jac = np.zeros((spec.dim, spec.dim))
    np.add.at(jac, spec._rows, spec._coefs[:, None] * _monomial_gradients(x, spec._powers))
    return jac


def polynomial_model(spec, label="generic"):
    return NetworkModel(
        N=spec.N,
        n=spec.n,
        eval_f=partial(polynomial_vector_field, spec),
        eval_jacobian=partial(polynomial_jacobian, spec),
        label=label,
        family="generic",
        spec=spec,
    )


def _constant_jacobian(A, x):
    return A


def linear_model(A, n=1, label="linear"):
    """``dx/dt = A x`` as a :class:`NetworkModel` (handy for tests and demos)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1] or A.shape[0] % n:
        raise DimensionError("A must be square with size divisible by n")
    return NetworkModel(
        N=A.shape[0] // n,
        n=n,
        eval_f=A.dot,
        eval_jacobian=partial(_constant_jacobian, A),
        label=label,
        family="generic",
    )

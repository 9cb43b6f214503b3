import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netsel.estimator import EstimationProblem, solve_relaxed
from netsel.exceptions import InfeasibleError, ValidationError
from netsel.integrate import DiscretizationConfig
from netsel.mads import MadsConfig, binarize, mads_solve, poll_binary, poll_continuous, write_mads_log
from netsel.milp import enumerate_selections
from netsel.netmodels import MemoryNetworkSpec, memory_model


def as_lists(thetas):
    return [t.tolist() for t in thetas]


def test_poll_binary_examples():
    assert as_lists(poll_binary(np.array([1.0, 0, 0]), 1)) == [[0, 0, 0], [0, 1, 0], [0, 0, 1]]
    assert as_lists(poll_binary(np.zeros(3), 2)) == [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
    nb = poll_binary(np.array([1.0, 1, 0, 0]), 2)
    assert len(nb) == 6 and sum(t.sum() == 1 for t in nb) == 2 and sum(t.sum() == 2 for t in nb) == 4
    assert len(poll_binary(np.array([1.0, 1, 0, 0]), 2, "EQ")) == 4


@given(st.integers(1, 8), st.data())
def test_poll_binary_neighbours_feasible_and_unique(N, data):
    m = data.draw(st.integers(0, N))
    k = data.draw(st.integers(0, m))
    theta = np.zeros(N)
    theta[data.draw(st.permutations(range(N)))[:k]] = 1.0
    nb = poll_binary(theta, m)
    keys = {tuple(t) for t in nb}
    assert len(keys) == len(nb)
    assert all(t.sum() <= m and np.abs(t - theta).sum() in (1, 2) for t in nb)


def test_poll_binary_rejects_infeasible_centre():
    with pytest.raises(InfeasibleError):
        poll_binary(np.ones(3), 2)


def test_poll_continuous_properties():
    lo, hi = np.zeros(3), np.ones(3)
    corner = np.zeros(3)
    pts = poll_continuous(corner, 0.5, (lo, hi), seed=3)
    assert len(pts) == 6 and all(np.all((p >= lo) & (p <= hi)) for p in pts)
    again = poll_continuous(corner, 0.5, (lo, hi), seed=3)
    assert all(np.array_equal(a, b) for a, b in zip(pts, again))
    tiny = poll_continuous(np.full(3, 0.5), 1e-12, (lo, hi), seed=0)
    assert max(np.abs(p - 0.5).max() for p in tiny) <= 1e-12
    with pytest.raises(ValidationError):
        poll_continuous(corner, 0.0, (lo, hi))


def test_binarize_ties_to_lower_index():
    np.testing.assert_array_equal(binarize([0.5, 0.5, 0.5], 2), [1, 1, 0])


@pytest.fixture(scope="module")
def three_node():
    model = memory_model(MemoryNetworkSpec([[1, -1, 1]], gamma=0.8))
    cfg = DiscretizationConfig("FE", 1e-2)
    x0 = np.array([0.5, -1.0, 2.0])
    return EstimationProblem.from_simulation(model, cfg, x0, 5), x0


def test_start_at_optimum_is_kept(three_node):
    problem, x0 = three_node
    inc = mads_solve(problem, np.ones(3), x0, 3)
    assert inc.cost == 0.0
    np.testing.assert_array_equal(inc.theta, np.ones(3))
    np.testing.assert_array_equal(inc.x0, x0)


def test_budget_of_one_returns_projected_start(three_node):
    problem, _ = three_node
    start = np.array([0.3, 9.0, -0.2])
    inc = mads_solve(problem, [0.2, 0.9, 0.1], start, 1, MadsConfig(max_evals=1))
    assert inc.evaluations == 1
    np.testing.assert_array_equal(inc.theta, [0, 1, 0])
    np.testing.assert_array_equal(inc.x0, [0.3, 5.0, -0.2])


@settings(max_examples=10)
@given(st.integers(0, 1000), st.integers(1, 3), st.sampled_from(["LE", "EQ"]))
def test_monotone_feasible_and_within_budget(three_node, seed, m, mode):
    problem, _ = three_node
    rng = np.random.default_rng(seed)
    cfg = MadsConfig(max_evals=150, seed=seed)
    inc = mads_solve(problem, rng.uniform(0, 1, 3), rng.normal(size=3), m, cfg, mode)
    costs = [c for _, _, c, _ in inc.history]
    assert all(b <= a for a, b in zip(costs, costs[1:]))
    assert inc.evaluations <= 150
    count = inc.theta.sum()
    assert count <= m if mode == "LE" else count == m
    assert np.all((inc.x0 >= problem.lower) & (inc.x0 <= problem.upper))


def test_deterministic_given_seed(three_node):
    problem, _ = three_node
    a = mads_solve(problem, [0.1, 0.2, 0.3], [0.0, 0.0, 0.0], 1, MadsConfig(seed=5))
    b = mads_solve(problem, [0.1, 0.2, 0.3], [0.0, 0.0, 0.0], 1, MadsConfig(seed=5))
    assert a.cost == b.cost and np.array_equal(a.x0, b.x0) and a.history == b.history


def test_matches_exhaustive_oracle_on_most_runs(three_node):
    problem, x0 = three_node
    # oracle: every LE selection with an inner gradient solve for x0 from several starts
    best = min(
        solve_relaxed(problem, t, s, optimize_theta=False, gtol=1e-12).final_cost
        for t in enumerate_selections(3, 1, "LE")
        for s in (np.zeros(3), x0, -x0)
    )
    hits = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        warm = solve_relaxed(problem, rng.uniform(0, 1, 3), rng.normal(size=3))
        inc = mads_solve(problem, warm.theta_relaxed, warm.x0_est, 1, MadsConfig(seed=seed))
        assert inc.cost >= best * (1 - 1e-9)
        hits += inc.cost <= best * (1 + 1e-3)
    assert hits >= 8


def test_iteration_log(three_node):
    problem, _ = three_node
    inc = mads_solve(problem, [0.1, 0.2, 0.9], np.zeros(3), 1, MadsConfig(max_evals=40))
    buf = io.StringIO()
    write_mads_log(inc, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "iteration,evals,cost,mesh" and len(lines) == len(inc.history) + 1


def test_config_validation():
    with pytest.raises(ValidationError):
        MadsConfig(mesh_shrink=1.5)
    with pytest.raises(ValidationError):
        MadsConfig(max_evals=0)
    assert MadsConfig().budget(7) == 1400

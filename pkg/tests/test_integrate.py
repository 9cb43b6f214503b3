import io
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import netsel.integrate as integ
from netsel.exceptions import NewtonConvergenceError, StepOverflowError, ValidationError
from netsel.integrate import (
    DiscretizationConfig,
    StiffnessWarning,
    propagate_sensitivity,
    read_trajectory_csv,
    sensitivity_transpose_product,
    simulate,
    step_fe,
    step_ti,
    write_trajectory_csv,
)
from netsel.netmodels import (
    DuffingNetworkSpec,
    crn_model,
    duffing_model,
    letter_memory_spec,
    linear_model,
    load_builtin_crn,
    memory_model,
    polynomial_model,
    PolynomialSpec,
)

from conftest import chain_crn, fd_jacobian, random_memory_model

DECAY = linear_model([[-1.0]])
ZERO = linear_model(np.zeros((2, 2)))


@pytest.fixture
def reference_loops(monkeypatch):
    monkeypatch.setattr(integ, "USE_COMPILED", False)


# --- single steps ---------------------------------------------------------

def test_fe_step_examples():
    assert step_fe(DECAY, np.array([1.0]), 0.1)[0] == pytest.approx(0.9, abs=1e-15)
    x = np.array([3.0, -1.0])
    np.testing.assert_array_equal(step_fe(ZERO, x, 0.1), x)
    spec = DuffingNetworkSpec(np.zeros((1, 1), bool), [[10.0]], [[1.0]], [[1.0]])
    np.testing.assert_allclose(step_fe(duffing_model(spec), np.array([1.0, 0.0]), 0.01), [1.0, -0.09], atol=1e-15)


def test_fe_step_overflow_names_step():
    blow = polynomial_model(PolynomialSpec(1, 1, ((0, 1.0, {0: 3}),)))
    with pytest.raises(StepOverflowError) as info:
        with np.errstate(over="ignore"):
            step_fe(blow, np.array([1e200]), 1.0, step=7)
    assert info.value.step == 7


def test_ti_step_examples():
    cfg = DiscretizationConfig("TI", 0.1)
    assert step_ti(DECAY, np.array([1.0]), cfg)[0] == pytest.approx(0.95 / 1.05, abs=1e-12)
    x = np.array([3.0, -1.0])
    np.testing.assert_array_equal(step_ti(ZERO, x, cfg), x)


@given(arrays(float, (3, 3), elements=st.floats(-3, 3)), arrays(float, 3, elements=st.floats(-5, 5)))
def test_ti_step_linear_matches_dense_solve(A, x):
    h = 0.1
    cfg = DiscretizationConfig("TI", h)
    expected = np.linalg.solve(np.eye(3) - h / 2 * A, (np.eye(3) + h / 2 * A) @ x)
    np.testing.assert_allclose(step_ti(linear_model(A), x, cfg), expected, rtol=1e-9, atol=1e-9)


def test_ti_newton_failure_carries_residual():
    cfg = DiscretizationConfig("TI", 1.0, newton_max_iter=1, newton_tol=1e-14)
    stiff = polynomial_model(PolynomialSpec(1, 1, ((0, -1.0, {0: 3}),)))
    with pytest.raises(NewtonConvergenceError) as info:
        step_ti(stiff, np.array([5.0]), cfg, step=3)
    assert info.value.residual_norm > 0 and info.value.step == 3


def test_config_validation():
    with pytest.raises(ValidationError):
        DiscretizationConfig("RK4")
    with pytest.raises(ValidationError):
        DiscretizationConfig("TI", h=0)
    assert DiscretizationConfig("ti").method == "TI"


# --- simulation -----------------------------------------------------------

def test_simulate_examples():
    assert simulate(DECAY, [2.0], 0, DiscretizationConfig("FE", 0.1)).states.tolist() == [[2.0]]
    traj = simulate(DECAY, [1.0], 3, DiscretizationConfig("FE", 0.1))
    np.testing.assert_allclose(traj.states[:, 0], [1, 0.9, 0.81, 0.729], atol=1e-15)
    np.testing.assert_allclose(traj.times, [0, 0.1, 0.2, 0.3])


def test_memory_fe_step_identity():
    model = memory_model(letter_memory_spec())
    x0 = np.random.default_rng(0).normal(size=25)
    traj = simulate(model, x0, 21, DiscretizationConfig("FE", 1e-3))
    assert traj.states.shape == (22, 25) and np.all(np.isfinite(traj.states))
    for k in range(1, 22):
        np.testing.assert_array_equal(traj.states[k], traj.states[k - 1] + 1e-3 * model.f(traj.states[k - 1]))


def test_simulate_rejects_bad_input():
    with pytest.raises(ValidationError):
        simulate(DECAY, [1.0], -1, DiscretizationConfig())
    with pytest.raises(StepOverflowError):
        simulate(DECAY, [np.inf], 2, DiscretizationConfig())


@pytest.mark.parametrize("method,lo,hi", [("FE", 0.8, 1.2), ("TI", 1.8, 2.2)])
def test_convergence_order(method, lo, hi):
    errs = []
    for h in (0.1, 0.05, 0.025):
        x = simulate(DECAY, [1.0], round(1 / h), DiscretizationConfig(method, h)).states[-1, 0]
        errs.append(abs(x - np.exp(-1)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all((orders >= lo) & (orders <= hi))


def test_ti_is_a_stable_on_stiff_decay():
    stiff = linear_model([[-1e4]])
    x = simulate(stiff, [1.0], 50, DiscretizationConfig("TI", 0.1)).states[:, 0]
    assert np.all(np.abs(x) <= 1.0) and abs(x[-1]) < 1.0


def test_stiffness_warning_for_fe_crn():
    model = crn_model(load_builtin_crn())
    x0 = np.full(9, 0.5)
    with pytest.warns(StiffnessWarning):
        try:
            simulate(model, x0, 1, DiscretizationConfig("FE", 1.0))
        except StepOverflowError:
            pass
    with warnings.catch_warnings():
        warnings.simplefilter("error", StiffnessWarning)
        simulate(model, x0, 1, DiscretizationConfig("TI", 1e-2))


# --- compiled path agrees with the reference loops ------------------------

def _family_models():
    from netsel.netmodels import random_duffing_spec

    return [
        random_memory_model(9, 2, seed=0),
        duffing_model(random_duffing_spec(5, seed=4)),
        crn_model(chain_crn(3)),
        crn_model(load_builtin_crn()),
    ]


@pytest.mark.parametrize("method", ["FE", "TI"])
@pytest.mark.parametrize("index", range(4))
def test_compiled_matches_reference(monkeypatch, method, index):
    model = _family_models()[index]
    rng = np.random.default_rng(index)
    x0 = rng.uniform(0.1, 1.0, model.dim)
    cfg = DiscretizationConfig(method, 1e-2 if model.family == "crn" else 1e-3)
    w = rng.normal(size=(31, model.dim))
    fast = simulate(model, x0, 30, cfg)
    g_fast = sensitivity_transpose_product(model, fast, cfg, w)
    monkeypatch.setattr(integ, "USE_COMPILED", False)
    ref = simulate(model, x0, 30, cfg)
    g_ref = sensitivity_transpose_product(model, ref, cfg, w)
    np.testing.assert_allclose(fast.states, ref.states, rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(g_fast, g_ref, rtol=1e-10, atol=1e-12)


# --- sensitivities --------------------------------------------------------

def test_scalar_fe_sensitivity():
    cfg = DiscretizationConfig("FE", 0.1)
    traj = simulate(DECAY, [1.0], 5, cfg)
    S = propagate_sensitivity(DECAY, traj, cfg).sensitivities[:, 0, 0]
    np.testing.assert_allclose(S, 0.9 ** np.arange(6), rtol=1e-14)


@pytest.mark.parametrize("method", ["FE", "TI"])
def test_sensitivity_matches_fd(duffing5, method):
    cfg = DiscretizationConfig(method, 1e-3)
    x0 = np.random.default_rng(5).uniform(-1, 1, duffing5.dim)
    L = 40
    S = propagate_sensitivity(duffing5, simulate(duffing5, x0, L, cfg), cfg).sensitivities[-1]
    fd = fd_jacobian(lambda v: simulate(duffing5, v, L, cfg).states[-1], x0, rel=1e-5)
    assert np.linalg.norm(S - fd) / np.linalg.norm(fd) <= 1e-5


def test_transpose_product_matches_explicit(memory9, ti_config, reference_loops):
    x0 = np.random.default_rng(1).normal(size=9)
    traj = simulate(memory9, x0, 10, ti_config)
    S = propagate_sensitivity(memory9, traj, ti_config).sensitivities
    w = np.random.default_rng(2).normal(size=(11, 9))
    expected = sum(S[k].T @ w[k] for k in range(11))
    np.testing.assert_allclose(sensitivity_transpose_product(memory9, traj, ti_config, w), expected, rtol=1e-12)


# --- CSV ------------------------------------------------------------------

def test_csv_roundtrip_is_exact(duffing5, ti_config):
    traj = simulate(duffing5, np.linspace(-1, 1, 10), 5, ti_config)
    buf = io.StringIO()
    write_trajectory_csv(traj, buf)
    text = buf.getvalue()
    assert text.splitlines()[0].startswith("time,x1,x2")
    back = read_trajectory_csv(io.StringIO(text))
    np.testing.assert_array_equal(back.states, traj.states)


@settings(max_examples=25)
@given(arrays(float, 2, elements=st.floats(-3, 3)), st.sampled_from(["FE", "TI"]))
def test_simulation_is_deterministic(x0, method):
    model = duffing_model(DuffingNetworkSpec(np.zeros((1, 1), bool), [[12.0]], [[1.5]], [[1.0]]))
    cfg = DiscretizationConfig(method, 1e-3)
    a, b = simulate(model, x0, 20, cfg), simulate(model, x0, 20, cfg)
    np.testing.assert_array_equal(a.states, b.states)

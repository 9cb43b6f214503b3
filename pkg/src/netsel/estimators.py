"""scikit-learn style wrappers.

:class:`SensorSelector` behaves like a feature selector over node output
columns: ``fit`` runs a selection pipeline on a fully instrumented record
``Z`` of shape ``(L + 1, N)`` and ``transform`` keeps the selected columns.
:class:`InitialStateEstimator` fits the initial state to the outputs of a
fixed sensor set and predicts output sequences from it.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.feature_selection import SelectorMixin
from sklearn.metrics import r2_score
from sklearn.utils.validation import check_array, check_is_fitted

from .estimator import default_bounds, estimate_initial_state_full
from .integrate import DiscretizationConfig, simulate
from .mads import MadsConfig
from .outputs import OutputParametrization, SelectionVector, restrict_output_matrix
from .selector import PipelineConfig, ScenarioConfig, SelectionProblem, initial_guess, run_pipeline


def _discretization(method, h):
    return DiscretizationConfig(method=method, h=h)


def _bounds(model, lower, upper):
    lo, hi = default_bounds(model)
    return (lo if lower is None else lower), (hi if upper is None else upper)


class SensorSelector(SelectorMixin, BaseEstimator):
    """Select ``m_max`` sensor nodes of ``model`` from full-output data.

    Parameters
    ----------
    model : NetworkModel
    algorithm : {"mads", "milp1", "milp2"}
    m_max : int
    mode : {"LE", "EQ"} or None
        ``None`` uses the algorithm's default (LE for mads, EQ otherwise).
    method, h : discretization of the model.
    lower, upper : initial-state box for the relaxed phase (family default if None).
    seed : master seed of the pipeline.
    x0_true : optional known initial state; enables ``report_.error_e``.

    Attributes
    ----------
    theta_ : ndarray of 0/1, shape (N,)
    x0_ : ndarray, the final initial-state estimate
    report_ : SolveReport
    """

    def __init__(self, model, algorithm="milp2", m_max=1, mode=None, method="TI", h=1e-3, lower=None, upper=None,
                 seed=0, mads_max_evals=None, x0_true=None):
        self.model = model
        self.algorithm = algorithm
        self.m_max = m_max
        self.mode = mode
        self.method = method
        self.h = h
        self.lower = lower
        self.upper = upper
        self.seed = seed
        self.mads_max_evals = mads_max_evals
        self.x0_true = x0_true

    def fit(self, Z, y=None):
        Z = check_array(Z, ensure_min_samples=1)
        if Z.shape[1] != self.model.N:
            raise ValueError(f"Z must have one column per node ({self.model.N}), got {Z.shape[1]}")
        lo, hi = _bounds(self.model, self.lower, self.upper)
        problem = SelectionProblem(self.model, _discretization(self.method, self.h), Z.shape[0] - 1, lo, hi)
        scenario = ScenarioConfig(
            scenario="INSTRUMENTED", algorithm=self.algorithm, m_max=self.m_max, mode=self.mode, z_seq=Z,
            x0_true=self.x0_true,
        )
        config = PipelineConfig(seed=self.seed, mads=MadsConfig(max_evals=self.mads_max_evals))
        report = run_pipeline(problem, scenario, config)
        self.report_ = report
        self.n_features_in_ = Z.shape[1]
        if report.status != "ok":
            self.theta_ = np.zeros(self.model.N)
            self.x0_ = None
        else:
            self.theta_ = report.theta_hat.theta.copy()
            self.x0_ = report.x0_hat
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "theta_")
        return self.theta_ == 1


class InitialStateEstimator(BaseEstimator):
    """Estimate ``x0`` from the outputs of the nodes in ``sensors`` (1-based).

    ``fit(Y)`` takes ``Y`` of shape ``(L + 1, len(sensors))``.  Without
    ``x0_init`` the start is drawn with ``seed`` by the family's policy.
    """

    def __init__(self, model, sensors=(1,), method="TI", h=1e-3, x0_init=None, seed=0, gtol=1e-8, max_iter=1000):
        self.model = model
        self.sensors = sensors
        self.method = method
        self.h = h
        self.x0_init = x0_init
        self.seed = seed
        self.gtol = gtol
        self.max_iter = max_iter

    def _c_hat(self):
        sel = SelectionVector.from_indices(list(self.sensors), self.model.N)
        return restrict_output_matrix(OutputParametrization.for_model(self.model), sel.theta)

    def fit(self, Y, y=None):
        C_hat = self._c_hat()
        Y = check_array(Y, ensure_min_samples=1)
        if Y.shape[1] != C_hat.shape[0]:
            raise ValueError(f"Y must have one column per sensor ({C_hat.shape[0]}), got {Y.shape[1]}")
        if self.x0_init is None:
            lo, hi = default_bounds(self.model)
            start = initial_guess(self.model, lo, hi, np.random.default_rng(self.seed))
        else:
            start = np.asarray(self.x0_init, dtype=float)
        res = estimate_initial_state_full(
            self.model, _discretization(self.method, self.h), C_hat, Y, start, gtol=self.gtol, max_iter=self.max_iter
        )
        self.x0_ = res.x0
        self.cost_ = res.cost
        self.n_iter_ = res.iterations
        self.termination_ = res.termination
        self.n_features_in_ = Y.shape[1]
        return self

    def predict(self, Y):
        """Predicted sensor outputs with as many samples as ``Y`` has rows."""
        check_is_fitted(self, "x0_")
        Y = check_array(Y, ensure_min_samples=1)
        traj = simulate(self.model, self.x0_, Y.shape[0] - 1, _discretization(self.method, self.h))
        return traj.states @ self._c_hat().T

    def score(self, Y, y=None):
        """Coefficient of determination of the predicted outputs against ``Y``."""
        Y = check_array(Y, ensure_min_samples=1)
        return float(r2_score(Y.ravel(), self.predict(Y).ravel()))

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dynbc import GradientFlow, LojasiewiczEstimator, StationarySolver, make_initial
from dynbc.discretization import build_interval_mesh
from dynbc.scenario import InitSpec


@pytest.fixture(scope="module")
def X():
    mesh = build_interval_mesh(31)
    return np.vstack([make_initial(InitSpec(seed=s, amplitude=0.5), mesh) for s in range(3)])


def test_params_round_trip():
    est = GradientFlow(shape=(31,), mu=1, t_end=5.0)
    assert est.get_params()["mu"] == 1
    c = clone(est)
    assert c.get_params() == est.get_params()
    c.set_params(scheme="semi_implicit")
    assert c.scheme == "semi_implicit" and est.scheme == "implicit"


def test_transform_requires_fit(X):
    with pytest.raises(NotFittedError):
        GradientFlow(shape=(31,)).transform(X)


def test_gradient_flow_end_states(X):
    est = GradientFlow(shape=(31,), t_end=200.0)
    Y = est.fit_transform(X)
    assert Y.shape == X.shape
    assert est.statuses_ == ["converged"] * 3
    # Allen-Cahn with mu = 0 on a short interval: end states are the constants +-1 or 0
    for y in Y:
        assert np.ptp(y) < 1e-6


def test_stationary_solver_methods_agree(X):
    newton = StationarySolver(shape=(31,), mu=1, method="newton").fit(X)
    descent = StationarySolver(shape=(31,), mu=1, method="descent").fit(X)
    a, b = newton.transform(X), descent.transform(X)
    for e in newton.equilibria_ + descent.equilibria_:
        assert e.grad_dual <= 1e-10
    assert a.shape == b.shape == X.shape


def test_stationary_solver_rejects_method():
    with pytest.raises(ValueError, match="method"):
        StationarySolver(method="bisection").fit()


def test_column_count_checked(X):
    with pytest.raises(ValueError, match="columns"):
        StationarySolver(shape=(21,)).fit(X)


def test_lojasiewicz_estimator(X):
    est = LojasiewiczEstimator(shape=(31,), mu=0).fit(X)
    assert len(est.fits_) == 3
    assert 0.4 <= est.theta_ <= 0.6

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from coagss.errors import DomainError
from coagss.estimator import SelfSimilarProfile


@pytest.fixture(scope="module")
def fitted():
    return SelfSimilarProfile(kernel="constant", ppd=16).fit()


def test_params_round_trip():
    est = SelfSimilarProfile(kernel="perturbed", eps=0.05)
    params = est.get_params()
    assert params["kernel"] == "perturbed" and params["eps"] == 0.05
    twin = clone(est)
    assert twin.get_params() == params


def test_not_fitted():
    with pytest.raises(NotFittedError):
        SelfSimilarProfile().predict([[1.0]])


def test_predict_matches_exponential(fitted):
    x = np.array([[0.05], [1.0], [7.5]])
    assert np.allclose(fitted.predict(x), np.exp(-x[:, 0]), rtol=1e-3)
    assert fitted.a_star_ == pytest.approx(1.0, rel=1e-2)
    assert fitted.report_.converged


def test_transform_columns(fitted):
    out = fitted.transform(np.array([1.0, 2.0, 10.0]))
    assert out.shape == (3, 3)
    assert np.allclose(out[:, 1], 1.0, rtol=1e-3)
    assert np.allclose(out[:, 2], 1.0, rtol=1e-2)


def test_rejects_bad_input(fitted):
    with pytest.raises(ValueError):
        fitted.predict([[np.nan]])
    with pytest.raises(DomainError):
        fitted.predict([[1e-6]])


def test_unknown_kernel():
    with pytest.raises(DomainError):
        SelfSimilarProfile(kernel="gaussian").fit()

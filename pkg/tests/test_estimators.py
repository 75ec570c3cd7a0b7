import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from hmclab import HMCLinearRegression, HMCLogisticRegression, HMCPoissonGLMM
from hmclab.oracles import irls_logistic, ols_fit

from conftest import synthetic_glmm

EX1 = dict(eps=[0.2] * 6 + [0.02], n_steps=20, gamma_init=1.0, seed=143, n_samples=600, burnin=100)


def test_params_roundtrip():
    est = HMCLinearRegression(eps=0.05, n_steps=7, a=2.0)
    params = est.get_params()
    assert params["eps"] == 0.05 and params["n_steps"] == 7 and params["a"] == 2.0
    twin = clone(est)
    assert twin.get_params() == params
    assert est.set_params(chains=3).chains == 3


def test_not_fitted():
    with pytest.raises(NotFittedError):
        HMCLinearRegression().predict(np.ones((2, 2)))


def test_linear_fit(warpbreaks):
    _, X, y, names = warpbreaks
    est = HMCLinearRegression(**EX1).fit(X, y, feature_names=names)
    assert est.samples_.shape == (2 * 500, 7)
    assert est.summary_.names == names + ["log_sigma_sq"]
    ref = ols_fit(y, X).coefficients
    sd = est.samples_[:, :6].std(axis=0)
    assert np.all(np.abs(est.coef_ - ref) < 1.5 * sd)
    assert est.predict(X).shape == (54,)
    assert est.n_features_in_ == 6
    assert len(est.acceptance_rates_) == 2
    assert np.isfinite(est.score(X, y))


def test_linear_fit_deterministic(warpbreaks):
    _, X, y, _ = warpbreaks
    a = HMCLinearRegression(**EX1).fit(X, y)
    b = HMCLinearRegression(**{**EX1, "parallel": True}).fit(X, y)
    np.testing.assert_array_equal(a.samples_, b.samples_)


def test_linear_qr_fit(warpbreaks):
    _, X, y, _ = warpbreaks
    est = HMCLinearRegression(eps=[1.0] * 6 + [0.05], n_steps=20, gamma_init=4.5, seed=3, n_samples=800, qr=True).fit(X, y)
    ref = ols_fit(y, X).coefficients
    sd = est.samples_[:, :6].std(axis=0)
    assert np.all(np.abs(est.coef_ - ref) < 1.5 * sd)


def test_theta_init_validation(warpbreaks):
    _, X, y, _ = warpbreaks
    with pytest.raises(ValueError):
        HMCLinearRegression(theta_init=np.zeros(3), n_samples=10).fit(X, y)


def test_mh_sampler_option(warpbreaks):
    _, X, y, _ = warpbreaks
    est = HMCLinearRegression(sampler="mh", proposal_scale=0.05, gamma_init=4.7, n_samples=300, burnin=50)
    est.fit(X, y)
    assert est.samples_.shape == (500, 7)
    with pytest.raises(ValueError):
        HMCLinearRegression(sampler="gibbs", n_samples=10).fit(X, y)


def test_logistic_fit(birthwt):
    _, X, y, _ = birthwt
    eps = [0.05, 1e-3, 1e-3] + [0.05] * 8
    est = HMCLogisticRegression(eps=eps, n_steps=10, seed=143, n_samples=1500, burnin=200).fit(X, y)
    assert est.classes_.tolist() == [0, 1]
    proba = est.predict_proba(X)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    assert set(est.predict(X)) <= {0, 1}
    ref = irls_logistic(y, X).coefficients
    sd = est.samples_.std(axis=0)
    assert np.all(np.abs(est.coef_ - ref) < 1.5 * sd)


def test_logistic_rejects_non_binary(birthwt):
    _, X, _, _ = birthwt
    with pytest.raises(ValueError):
        HMCLogisticRegression(n_samples=5).fit(X, np.arange(189) % 3)


def test_glmm_fit():
    data = synthetic_glmm(seed=11)
    groups = np.argmax(data.Z, axis=1)
    eps = [0.03, 0.03, 0.03, 1e-3] + [0.1] * 10 + [0.03]
    est = HMCPoissonGLMM(eps=eps, n_steps=10, seed=412, n_samples=600, burnin=100)
    est.fit(data.X, data.y, groups)
    assert est.samples_.shape == (1000, 15)
    assert est.random_effects_.shape == (10,)
    assert est.lambda_ > 0
    mu = est.predict(data.X, groups)
    assert mu.shape == (30,) and np.all(mu > 0)
    np.testing.assert_allclose(est.predict(data.X), np.exp(data.X @ est.coef_))
    with pytest.raises(ValueError):
        est.fit(data.X, data.y, groups[:-1])

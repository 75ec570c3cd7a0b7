import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmclab import models
from hmclab.oracles import finite_diff_grad, ols_fit
from hmclab.sampler import ContractError

from conftest import synthetic_glmm


def assert_grad_matches(f, g, theta, rel=1e-5, abs_small=1e-7):
    analytic = g(theta)
    numeric = finite_diff_grad(f, theta)
    big = np.abs(analytic) >= 1e-3
    rel_err = np.abs(analytic - numeric)[big] / np.abs(analytic[big])
    assert rel_err.size == 0 or rel_err.max() < rel
    assert np.all(np.abs(analytic - numeric)[~big] < abs_small)


# --- linear ----------------------------------------------------------------

def test_linear_zero_data():
    data = models.LinearModelData(np.zeros(5), np.ones((5, 2)))
    assert models.linear_log_posterior(np.zeros(3), data) == pytest.approx(-1e-4, abs=1e-15)


def test_linear_single_point():
    data = models.LinearModelData(np.array([2.0]), np.ones((1, 1)))
    assert models.linear_log_posterior(np.zeros(2), data) == pytest.approx(-2.0001, abs=1e-12)


def test_linear_warpbreaks_at_zero(warpbreaks):
    table, X, y, _ = warpbreaks
    data = models.LinearModelData(y, X)
    # sum of squared breaks, recomputed straight from the CSV
    import csv
    from hmclab.design import data_dir

    with open(data_dir() / "warpbreaks.csv") as fh:
        ss = sum(float(r["breaks"]) ** 2 for r in csv.DictReader(fh))
    assert models.linear_log_posterior(np.zeros(7), data) == pytest.approx(-0.5 * ss - 1e-4, rel=1e-14)


def test_linear_grad_zero_residual(warpbreaks):
    _, X, _, _ = warpbreaks
    data = models.LinearModelData(np.zeros(54), X)
    g = models.linear_grad(np.zeros(7), data)
    np.testing.assert_array_equal(g[:6], np.zeros(6))
    assert g[6] == pytest.approx(-27.0, abs=1e-12)


def test_linear_grad_at_ols(warpbreaks):
    _, X, y, _ = warpbreaks
    data = models.LinearModelData(y, X)
    beta = ols_fit(y, X).coefficients
    for gamma in (-1.0, 0.0, 3.0):
        g = models.linear_grad(np.append(beta, gamma), data)
        np.testing.assert_allclose(g[:6], -beta / 1e3, rtol=0, atol=1e-9)


def test_linear_grad_finite_differences(warpbreaks):
    _, X, y, _ = warpbreaks
    data = models.LinearModelData(y, X)
    rng = np.random.default_rng(0)
    for _ in range(20):
        theta = rng.standard_normal(7)
        assert_grad_matches(
            lambda t: models.linear_log_posterior(t, data),
            lambda t: models.linear_grad(t, data),
            theta,
        )


def test_linear_prior_scaling_exact():
    rng = np.random.default_rng(1)
    X, y = rng.standard_normal((10, 3)), rng.standard_normal(10)
    theta = rng.standard_normal(4)
    a = models.linear_log_posterior(theta, models.LinearModelData(y, X, sig2beta=1e3))
    b = models.linear_log_posterior(theta, models.LinearModelData(y, X, sig2beta=1e12))
    bb = theta[:3] @ theta[:3]
    assert abs(a - b) == pytest.approx(bb * 0.5 * (1e-3 - 1e-12), rel=1e-9)


def test_linear_dimension_checks():
    data = models.LinearModelData(np.zeros(3), np.ones((3, 2)))
    with pytest.raises(ContractError):
        models.linear_log_posterior(np.zeros(2), data)
    with pytest.raises(ContractError):
        models.LinearModelData(np.zeros(4), np.ones((3, 2)))
    with pytest.raises(ContractError):
        models.LinearModelData(np.zeros(3), np.ones((3, 2)), a=0.0)


# --- logistic --------------------------------------------------------------

def test_logistic_zero_beta(birthwt):
    _, X, y, _ = birthwt
    data = models.LogisticModelData(y, X)
    assert models.logistic_log_posterior(np.zeros(11), data) == pytest.approx(
        -189 * math.log(2), abs=1e-10
    )
    assert models.logistic_log_posterior(np.zeros(11), data) == pytest.approx(-131.0048, abs=1e-4)


def test_logistic_single_points():
    one = models.LogisticModelData(np.array([1.0]), np.ones((1, 1)))
    assert models.logistic_log_posterior(np.array([10.0]), one) == pytest.approx(
        -math.log1p(math.exp(-10)) - 100 / 2000, abs=1e-14
    )
    assert models.logistic_log_posterior(np.array([10.0]), one) == pytest.approx(-0.0500454, abs=1e-7)
    zero = models.LogisticModelData(np.array([0.0]), np.ones((1, 1)))
    assert models.logistic_log_posterior(np.zeros(1), zero) == pytest.approx(-math.log(2), abs=1e-15)


def test_logistic_grad_at_zero(birthwt):
    _, X, y, _ = birthwt
    data = models.LogisticModelData(y, X)
    np.testing.assert_allclose(
        models.logistic_grad(np.zeros(11), data), X.T @ (y - 0.5), rtol=1e-14
    )


def test_logistic_grad_finite_differences(birthwt):
    _, X, y, _ = birthwt
    data = models.LogisticModelData(y, X)
    rng = np.random.default_rng(2)
    scale = 1.0 / np.maximum(1.0, np.abs(X).max(axis=0))
    for _ in range(20):
        theta = rng.standard_normal(11) * scale
        assert_grad_matches(
            lambda t: models.logistic_log_posterior(t, data),
            lambda t: models.logistic_grad(t, data),
            theta,
        )


def test_logistic_no_overflow():
    data = models.LogisticModelData(np.array([0.0, 1.0]), np.array([[1.0], [-1.0]]))
    value = models.logistic_log_posterior(np.array([1e4]), data)
    assert math.isfinite(value)
    assert np.all(np.isfinite(models.logistic_grad(np.array([1e4]), data)))
    assert value == pytest.approx(-2e4 - 1e8 / 2e3, rel=1e-12)


def test_logistic_concave(birthwt):
    _, X, y, _ = birthwt
    data = models.LogisticModelData(y, X)
    f = lambda t: models.logistic_log_posterior(t, data)
    rng = np.random.default_rng(3)
    scale = 1.0 / np.maximum(1.0, np.abs(X).max(axis=0))
    for _ in range(100):
        a, b = rng.standard_normal(11) * scale, rng.standard_normal(11) * scale
        assert f(0.5 * (a + b)) >= 0.5 * (f(a) + f(b)) - 1e-12
        d = rng.standard_normal(11) * scale
        h = 1e-2
        assert f(a + h * d) - 2 * f(a) + f(a - h * d) < 0


def test_logistic_rejects_non_binary():
    with pytest.raises(ContractError):
        models.LogisticModelData(np.array([0.0, 2.0]), np.ones((2, 1)))


# --- Poisson GLMM ----------------------------------------------------------

def gdat_shaped(y=None):
    X = np.column_stack([np.ones(30), np.tile([0, 1, 0], 10), np.tile([0, 0, 1], 10), np.zeros(30)])
    Z = np.kron(np.eye(10), np.ones((3, 1)))
    return models.PoissonGlmmData(np.zeros(30) if y is None else y, X, Z)


def test_glmm_zero_theta_value():
    data = gdat_shaped()
    assert data.dim == 15
    expected = -30 - math.log1p(1 / 625)
    assert models.glmm_log_posterior(np.zeros(15), data) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(-30.0016, abs=1e-4)


def test_glmm_single_observation():
    data = models.PoissonGlmmData(np.zeros(1), np.zeros((1, 1)), np.ones((1, 1)))
    assert models.glmm_log_posterior(np.zeros(3), data) == pytest.approx(
        -1 - math.log(626 / 625), abs=1e-13
    )


def test_glmm_grad_at_zero():
    rng = np.random.default_rng(4)
    y = rng.poisson(2.0, 30).astype(float)
    data = gdat_shaped(y)
    g = models.glmm_grad(np.zeros(15), data)
    np.testing.assert_allclose(g[:4], data.X.T @ (y - 1), rtol=1e-14)
    np.testing.assert_allclose(g[4:14], data.Z.T @ (y - 1), rtol=1e-14)
    assert g[14] == pytest.approx(1 - 2 / 626, abs=1e-14)
    assert g[14] == pytest.approx(0.99680, abs=1e-5)


def test_glmm_tau_prior_quadratic():
    # Subtract the likelihood change by hand; what remains is the prior.
    data = gdat_shaped()
    theta = np.zeros(15)
    theta[4] = 0.7
    doubled = theta.copy()
    doubled[4] = 1.4
    f = lambda t: models.glmm_log_posterior(t, data)
    lik = lambda tau: -3 * math.exp(tau) + 3  # three rows in group 1, y = 0
    diff = f(doubled) - f(theta) - (lik(1.4) - lik(0.7))
    assert diff == pytest.approx(-0.5 * (1.4**2 - 0.7**2), abs=1e-12)


def test_glmm_grad_finite_differences(glmm_data):
    rng = np.random.default_rng(5)
    sd = np.full(glmm_data.dim, 0.5)
    sd[3] = 0.5 / 80  # prevalence covariate spans 0..80
    for _ in range(20):
        theta = rng.standard_normal(glmm_data.dim) * sd
        assert_grad_matches(
            lambda t: models.glmm_log_posterior(t, glmm_data),
            lambda t: models.glmm_grad(t, glmm_data),
            theta,
        )


def test_glmm_depends_on_u_only():
    data = synthetic_glmm(seed=3)
    rng = np.random.default_rng(6)
    theta = rng.standard_normal(data.dim) * 0.3
    theta[3] *= 0.01
    beta, tau, xi = data.split(theta)
    u = models.u_from_tau_xi(tau[None, :], np.array([xi]))[0, :-1]
    eta = data.X @ beta + data.Z @ u
    lam = math.exp(xi)
    by_hand = (
        -np.exp(eta).sum() + data.y @ eta - beta @ beta / 2e3
        - math.log1p(lam**2 / 625) + xi - 0.5 * tau @ tau
    )
    assert models.glmm_log_posterior(theta, data) == pytest.approx(by_hand, rel=1e-13)


def test_glmm_overflow_guard():
    data = gdat_shaped()
    theta = np.zeros(15)
    theta[0] = 701.0
    assert models.glmm_log_posterior(theta, data) == -math.inf


def test_glmm_z_validation():
    with pytest.raises(ContractError):
        models.PoissonGlmmData(np.zeros(2), np.ones((2, 1)), np.array([[1.0, 1.0], [0.0, 1.0]]))


@pytest.mark.parametrize(
    "tau, xi, expected",
    [([1, 2], 0.0, [1, 2, 1]), ([1, 2], math.log(2), [2, 4, 2]), ([0, 0], 1.7, [0, 0, math.exp(1.7)])],
)
def test_u_from_tau_xi(tau, xi, expected):
    out = models.u_from_tau_xi(np.array([tau], dtype=float), np.array([xi]))
    np.testing.assert_allclose(out[0], expected, rtol=1e-15)


def test_u_from_tau_xi_row_mismatch():
    with pytest.raises(ContractError):
        models.u_from_tau_xi(np.zeros((3, 2)), np.zeros(2))


# --- generic targets -------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_qr_target_gradient(theta):
    rng = np.random.default_rng(9)
    X, y = rng.standard_normal((20, 2)), rng.standard_normal(20)
    from hmclab.design import qr_reparameterize

    _, R = qr_reparameterize(X)
    target = models.qr_target(models.linear_target(models.LinearModelData(y, X)), R, 2)
    th = np.array(theta)
    np.testing.assert_allclose(
        target.grad_log_density(th), finite_diff_grad(target.log_density, th), rtol=1e-5, atol=1e-6
    )


def test_qr_target_matches_original_in_beta():
    rng = np.random.default_rng(10)
    X, y = rng.standard_normal((15, 3)), rng.standard_normal(15)
    from hmclab.design import qr_reparameterize

    _, R = qr_reparameterize(X)
    base = models.linear_target(models.LinearModelData(y, X))
    target = models.qr_target(base, R, 3)
    beta = rng.standard_normal(3)
    eta = np.append(R @ beta, 0.4)
    assert target.log_density(eta) == pytest.approx(base.log_density(np.append(beta, 0.4)), rel=1e-13)


def test_gaussian_target_gradient():
    cov = np.array([[2.0, 0.5], [0.5, 1.0]])
    target = models.gaussian_target([1.0, -1.0], cov)
    th = np.array([0.3, 0.2])
    np.testing.assert_allclose(target.grad_log_density(th), finite_diff_grad(target.log_density, th), rtol=1e-7)

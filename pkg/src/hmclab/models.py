"""Log posteriors and analytic gradients for the Bayesian regression targets.

Parameter layouts
-----------------
linear        ``(beta_0..beta_q, gamma)`` with ``gamma = log sigma_eps^2``
logistic      ``(beta_0..beta_q)``
poisson_glmm  ``(beta_0..beta_q, tau_1..tau_n, xi)`` with random intercepts
              ``u = exp(xi) * tau`` and ``tau ~ N(0, I)``
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .sampler import ContractError, TargetDensity

# Linear predictors above this make exp() overflow in double precision.
EXP_GUARD = 700.0


def _theta(theta, k):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (k,):
        raise ContractError(f"theta has shape {theta.shape}, expected ({k},)")
    return theta


def _design(X, n_rows=None):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ContractError("design matrix must be 2-d")
    if n_rows is not None and X.shape[0] != n_rows:
        raise ContractError(f"design has {X.shape[0]} rows, response has {n_rows}")
    return X


@dataclass(frozen=True)
class LinearModelData:
    y: np.ndarray
    X: np.ndarray
    a: float = 1e-4
    b: float = 1e-4
    sig2beta: float = 1e3

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", _design(self.X, y.shape[0]))
        if min(self.a, self.b, self.sig2beta) <= 0:
            raise ContractError("a, b and sig2beta must be positive")

    @property
    def dim(self) -> int:
        return self.X.shape[1] + 1


@dataclass(frozen=True)
class LogisticModelData:
    y: np.ndarray
    X: np.ndarray
    sig2beta: float = 1e3

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        if not np.all((y == 0) | (y == 1)):
            raise ContractError("logistic response must be 0/1")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", _design(self.X, y.shape[0]))
        if self.sig2beta <= 0:
            raise ContractError("sig2beta must be positive")

    @property
    def dim(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class PoissonGlmmData:
    """Counts ``y`` stacked by group, fixed-effects design ``X`` and the
    random-intercept indicator matrix ``Z`` (one 1 per row)."""

    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    sig2beta: float = 1e3
    nu_xi: float = 1.0
    A_xi: float = 25.0

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        if np.any(y < 0) or np.any(y != np.round(y)):
            raise ContractError("Poisson response must be non-negative integers")
        Z = _design(self.Z, y.shape[0])
        if not (np.all((Z == 0) | (Z == 1)) and np.all(Z.sum(axis=1) == 1)):
            raise ContractError("every Z row needs exactly one 1")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", _design(self.X, y.shape[0]))
        object.__setattr__(self, "Z", Z)
        if min(self.sig2beta, self.nu_xi, self.A_xi) <= 0:
            raise ContractError("sig2beta, nu_xi and A_xi must be positive")

    @property
    def n_groups(self) -> int:
        return self.Z.shape[1]

    @property
    def dim(self) -> int:
        return self.X.shape[1] + self.n_groups + 1

    def split(self, theta):
        theta = _theta(theta, self.dim)
        p, n = self.X.shape[1], self.n_groups
        return theta[:p], theta[p : p + n], theta[p + n]


def linear_log_posterior(theta, data: LinearModelData) -> float:
    theta = _theta(theta, data.dim)
    beta, gamma = theta[:-1], theta[-1]
    n = data.y.shape[0]
    resid = data.y - data.X @ beta
    return float(
        -(n / 2 + data.a) * gamma
        - np.exp(-gamma) / 2 * (resid @ resid)
        - (beta @ beta) / (2 * data.sig2beta)
        - data.b * np.exp(-gamma)
    )


def linear_grad(theta, data: LinearModelData) -> np.ndarray:
    theta = _theta(theta, data.dim)
    beta, gamma = theta[:-1], theta[-1]
    n = data.y.shape[0]
    resid = data.y - data.X @ beta
    scale = np.exp(-gamma)
    g_beta = scale * (data.X.T @ resid) - beta / data.sig2beta
    g_gamma = -(n / 2 + data.a) + scale / 2 * (resid @ resid) + data.b * scale
    return np.append(g_beta, g_gamma)


def logistic_log_posterior(theta, data: LogisticModelData) -> float:
    beta = _theta(theta, data.dim)
    v = data.X @ beta
    # log(1 + e^-v) without overflow
    softplus = np.logaddexp(0.0, -v)
    return float(
        v @ (data.y - 1.0) - softplus.sum() - (beta @ beta) / (2 * data.sig2beta)
    )


def logistic_grad(theta, data: LogisticModelData) -> np.ndarray:
    beta = _theta(theta, data.dim)
    v = data.X @ beta
    # e^-v / (1 + e^-v) == expit(-v)
    return data.X.T @ (data.y - 1.0 + expit(-v)) - beta / data.sig2beta


def _glmm_parts(theta, data):
    beta, tau, xi = data.split(theta)
    lam = np.exp(xi)
    eta = data.X @ beta + lam * (data.Z @ tau)
    return beta, tau, xi, lam, eta


def glmm_log_posterior(theta, data: PoissonGlmmData) -> float:
    """Poisson random-intercept log posterior (non-centered, half-t on
    ``exp(xi)``, including the ``+xi`` log-Jacobian).

    Returns ``-inf`` when any linear predictor exceeds ``EXP_GUARD``.
    """
    beta, tau, xi, lam, eta = _glmm_parts(theta, data)
    if not np.all(np.isfinite(eta)) or np.max(eta) > EXP_GUARD:
        return -np.inf
    nu, A = data.nu_xi, data.A_xi
    return float(
        -np.exp(eta).sum()
        + data.y @ eta
        - (beta @ beta) / (2 * data.sig2beta)
        - (nu + 1) / 2 * np.log1p(lam**2 / (nu * A**2))
        + xi
        - 0.5 * (tau @ tau)
    )


def glmm_grad(theta, data: PoissonGlmmData) -> np.ndarray:
    """Gradient blocks ``(d/d beta, d/d tau, d/d xi)``.

    Non-finite when the linear predictor overflows; the sampler treats
    that as a divergent trajectory.
    """
    beta, tau, xi, lam, eta = _glmm_parts(theta, data)
    with np.errstate(over="ignore", invalid="ignore"):
        resid = data.y - np.exp(eta)
        zr = data.Z.T @ resid
        g_beta = data.X.T @ resid - beta / data.sig2beta
        g_tau = lam * zr - tau
        nu, A = data.nu_xi, data.A_xi
        g_xi = lam * (tau @ zr) - (nu + 1) / (1 + nu * A**2 * np.exp(-2 * xi)) + 1
    return np.concatenate([g_beta, g_tau, [g_xi]])


def u_from_tau_xi(tau_samples, xi_samples) -> np.ndarray:
    """Back-transform to random intercepts.

    Row ``t`` of the result is ``exp(xi_t) * tau_t`` followed by a final
    ``lambda_t = exp(xi_t)`` column.
    """
    tau = np.atleast_2d(np.asarray(tau_samples, dtype=float))
    xi = np.asarray(xi_samples, dtype=float).ravel()
    if tau.shape[0] != xi.shape[0]:
        raise ContractError(
            f"{tau.shape[0]} tau rows but {xi.shape[0]} xi values"
        )
    lam = np.exp(xi)
    return np.column_stack([tau * lam[:, None], lam])


def linear_target(data: LinearModelData, names=None) -> TargetDensity:
    return TargetDensity(
        lambda th: linear_log_posterior(th, data),
        lambda th: linear_grad(th, data),
        data.dim,
        tuple(names) if names is not None else None,
    )


def logistic_target(data: LogisticModelData, names=None) -> TargetDensity:
    return TargetDensity(
        lambda th: logistic_log_posterior(th, data),
        lambda th: logistic_grad(th, data),
        data.dim,
        tuple(names) if names is not None else None,
    )


def glmm_target(data: PoissonGlmmData, names=None) -> TargetDensity:
    return TargetDensity(
        lambda th: glmm_log_posterior(th, data),
        lambda th: glmm_grad(th, data),
        data.dim,
        tuple(names) if names is not None else None,
    )


def gaussian_target(mean, cov=None, names=None) -> TargetDensity:
    """Multivariate normal target; identity covariance by default."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    k = mean.shape[0]
    cov = np.eye(k) if cov is None else np.asarray(cov, dtype=float)
    if cov.shape != (k, k):
        raise ContractError(f"covariance must be {k}x{k}")
    prec = np.linalg.inv(cov)

    def log_density(th):
        d = _theta(th, k) - mean
        return float(-0.5 * d @ prec @ d)

    def grad(th):
        return -prec @ (_theta(th, k) - mean)

    return TargetDensity(log_density, grad, k, tuple(names) if names else None)


def qr_target(target: TargetDensity, R, n_coef: int | None = None) -> TargetDensity:
    """Reparameterize the leading coefficient block by ``eta = R @ beta``.

    The returned target evaluates ``target`` at ``beta = R^-1 eta`` (other
    coordinates pass through) and chains the gradient with ``R^-T``. With
    ``R`` from the thin QR of the design, ``X beta == Q eta``, so this is
    sampling in the orthogonal ``Q`` basis with the prior carried over
    exactly. Use :func:`hmclab.design.qr_back_transform` on the eta block
    of the samples afterwards.
    """
    from scipy.linalg import solve_triangular

    R = np.asarray(R, dtype=float)
    p = R.shape[0] if n_coef is None else n_coef
    if R.shape != (p, p):
        raise ContractError("R must be square and match the coefficient block")

    def to_beta(th):
        th = np.array(th, dtype=float)
        th[:p] = solve_triangular(R, th[:p], lower=False)
        return th

    def log_density(th):
        return target.log_density(to_beta(th))

    def grad(th):
        g = np.asarray(target.grad_log_density(to_beta(th)), dtype=float).copy()
        g[:p] = solve_triangular(R, g[:p], trans="T", lower=False)
        return g

    return TargetDensity(log_density, grad, target.dim, target.names)

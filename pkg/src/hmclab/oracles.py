"""Independent checks: finite-difference gradients and frequentist fits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import expit

from .design import qr_reparameterize


class SeparationError(RuntimeError):
    """Logistic MLE diverged, typically because the data are separable."""


@dataclass(frozen=True)
class FitResult:
    coefficients: np.ndarray
    aux: float | None = None
    iterations: int = 0


def finite_diff_grad(f, theta, h_scale=1e-6) -> np.ndarray:
    """Central differences with step ``h_scale * max(1, |theta_i|)``."""
    theta = np.asarray(theta, dtype=float)
    grad = np.empty_like(theta)
    for i in range(theta.shape[0]):
        h = h_scale * max(1.0, abs(theta[i]))
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        fu, fd = float(f(up)), float(f(down))
        if not (math.isfinite(fu) and math.isfinite(fd)):
            raise FloatingPointError(f"f is not finite around coordinate {i}")
        grad[i] = (fu - fd) / (2 * h)
    return grad


def ols_fit(y, X) -> FitResult:
    """Least squares via ``R beta = Q^T y``; ``aux = 2 log(sigma_hat)``."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    Q, R = qr_reparameterize(X)
    beta = solve_triangular(R, Q.T @ y, lower=False)
    resid = y - X @ beta
    dof = X.shape[0] - X.shape[1]
    aux = math.log(resid @ resid / dof) if dof > 0 and resid @ resid > 0 else -math.inf
    return FitResult(beta, aux)


def irls_logistic(y, X, tol=1e-10, max_iter=50) -> FitResult:
    """Logistic-regression MLE by Newton-Raphson (IRLS)."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    beta = np.zeros(X.shape[1])
    for it in range(1, max_iter + 1):
        mu = expit(X @ beta)
        w = mu * (1 - mu)
        hess = X.T @ (X * w[:, None])
        try:
            step = np.linalg.solve(hess, X.T @ (y - mu))
        except np.linalg.LinAlgError as exc:
            if it > 1 and np.max(np.abs(y - mu)) < 1e-8:
                # fitted probabilities saturated at 0/1: weights underflowed
                raise SeparationError("fitted probabilities saturated; data are separable") from exc
            raise np.linalg.LinAlgError("singular weighted normal matrix") from exc
        beta = beta + step
        if not np.all(np.isfinite(beta)) or np.linalg.norm(beta) > 1e4:
            raise SeparationError("coefficients diverged; data may be separable")
        if np.max(np.abs(step)) < tol:
            return FitResult(beta, None, it)
    return FitResult(beta, None, max_iter)

"""scikit-learn style wrappers around the HMC regression targets.

The estimators take an already-built design matrix (see
:func:`hmclab.design.build_design`), run the sampler in ``fit`` and expose
posterior draws after burn-in as ``samples_``. Point predictions use the
posterior median.

>>> est = HMCLinearRegression(eps=[0.2] * 6 + [0.02], n_steps=20,
...                           gamma_init=1.0, seed=143)   # doctest: +SKIP
>>> est.fit(X, y).summary_.median("log_sigma_sq")        # doctest: +SKIP
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import models
from .design import qr_back_transform, qr_reparameterize
from .diagnostics import quantile_summary
from .sampler import HmcConfig, LeapfrogConfig, MassSpec, MhConfig, run_chains


class _HMCBase(BaseEstimator):
    """Sampler plumbing shared by the regression estimators.

    Common parameters
    -----------------
    n_samples : int
        Iterations per chain (the starting point is not emitted).
    burnin : int
        Leading draws per chain dropped from ``samples_`` and summaries.
    eps : float or array-like
        Leapfrog step size(s), one per parameter or a scalar.
    n_steps : int
        Leapfrog steps per iteration.
    chains, seed, parallel
        Number of chains, run seed, and whether to run chains in threads.
    theta_init : array-like, optional
        Starting point; zeros by default.
    mass_diag : array-like, optional
        Diagonal of the momentum covariance.
    jitter_steps, jitter_eps : bool
        Randomize the step count / step size each iteration.
    qr : bool
        Sample the coefficients in the orthogonal basis of the design.
    sampler : {"hmc", "mh"}
        ``"mh"`` runs random-walk Metropolis with ``proposal_scale``.
    """

    def _init_theta(self, dim):
        if self.theta_init is None:
            return np.zeros(dim)
        theta = np.asarray(self.theta_init, dtype=float)
        if theta.shape != (dim,):
            raise ValueError(f"theta_init must have length {dim}")
        return theta

    def _config(self, theta0):
        dim = theta0.shape[0]
        if self.sampler == "mh":
            return MhConfig(
                self.n_samples, theta0, self.proposal_scale, self.chains,
                self.seed, self.parallel,
            )
        if self.sampler != "hmc":
            raise ValueError(f"unknown sampler {self.sampler!r}")
        eps = np.broadcast_to(np.asarray(self.eps, dtype=float), (dim,))
        mass = None if self.mass_diag is None else MassSpec(self.mass_diag)
        lf = LeapfrogConfig(eps, self.n_steps, self.jitter_steps, self.jitter_eps)
        return HmcConfig(
            self.n_samples, theta0, lf, mass, self.chains, self.seed, self.parallel
        )

    def _sample(self, target, n_coef):
        theta0 = self._init_theta(target.dim)
        R = None
        if self.qr:
            _, R = qr_reparameterize(self._X_fit)
            target = models.qr_target(target, R, n_coef)
            theta0 = theta0.copy()
            theta0[:n_coef] = R @ theta0[:n_coef]
        chains = run_chains(target, self._config(theta0))
        if R is not None:
            for c in chains:
                c.samples[:, :n_coef] = qr_back_transform(c.samples[:, :n_coef], R)
        self.chains_ = chains
        self.acceptance_rates_ = np.array([c.acceptance_rate for c in chains])
        self.divergences_ = np.array([c.divergences for c in chains])
        self.samples_ = np.vstack([c.samples[self.burnin :] for c in chains])
        self.summary_ = quantile_summary(chains, self.burnin, names=target.param_names())
        self.rhat_ = self.summary_.rhat
        self.n_features_in_ = self._X_fit.shape[1]
        return np.median(self.samples_, axis=0)


class HMCLinearRegression(RegressorMixin, _HMCBase):
    """Bayesian linear regression, normal prior on the coefficients and an
    inverse-gamma prior on the noise variance, sampled as ``log_sigma_sq``.

    ``a``/``b`` are the inverse-gamma hyperparameters, ``sig2beta`` the
    coefficient prior variance. ``gamma_init`` sets the starting
    ``log_sigma_sq`` when ``theta_init`` is omitted. See ``_HMCBase`` for
    the sampler parameters.
    """

    def __init__(
        self, n_samples=2000, burnin=200, eps=0.01, n_steps=10, chains=2,
        seed=0, parallel=False, theta_init=None, gamma_init=None,
        mass_diag=None, jitter_steps=False, jitter_eps=False, qr=False,
        sampler="hmc", proposal_scale=0.1, a=1e-4, b=1e-4, sig2beta=1e3,
    ):
        self.n_samples = n_samples
        self.burnin = burnin
        self.eps = eps
        self.n_steps = n_steps
        self.chains = chains
        self.seed = seed
        self.parallel = parallel
        self.theta_init = theta_init
        self.gamma_init = gamma_init
        self.mass_diag = mass_diag
        self.jitter_steps = jitter_steps
        self.jitter_eps = jitter_eps
        self.qr = qr
        self.sampler = sampler
        self.proposal_scale = proposal_scale
        self.a = a
        self.b = b
        self.sig2beta = sig2beta

    def _init_theta(self, dim):
        theta = super()._init_theta(dim)
        if self.theta_init is None and self.gamma_init is not None:
            theta[-1] = self.gamma_init
        return theta

    def fit(self, X, y, feature_names=None):
        X, y = check_X_y(X, y, y_numeric=True)
        self._X_fit = X
        names = list(feature_names) if feature_names is not None else [
            f"beta{i}" for i in range(X.shape[1])
        ]
        data = models.LinearModelData(y, X, self.a, self.b, self.sig2beta)
        target = models.linear_target(data, names + ["log_sigma_sq"])
        med = self._sample(target, X.shape[1])
        self.coef_ = med[:-1]
        self.log_sigma_sq_ = med[-1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return check_array(X) @ self.coef_


class HMCLogisticRegression(ClassifierMixin, _HMCBase):
    """Bayesian logistic regression with independent normal priors of
    variance ``sig2beta``."""

    def __init__(
        self, n_samples=2000, burnin=200, eps=0.01, n_steps=10, chains=2,
        seed=0, parallel=False, theta_init=None, mass_diag=None,
        jitter_steps=False, jitter_eps=False, qr=False, sampler="hmc",
        proposal_scale=0.1, sig2beta=1e3,
    ):
        self.n_samples = n_samples
        self.burnin = burnin
        self.eps = eps
        self.n_steps = n_steps
        self.chains = chains
        self.seed = seed
        self.parallel = parallel
        self.theta_init = theta_init
        self.mass_diag = mass_diag
        self.jitter_steps = jitter_steps
        self.jitter_eps = jitter_eps
        self.qr = qr
        self.sampler = sampler
        self.proposal_scale = proposal_scale
        self.sig2beta = sig2beta

    def fit(self, X, y, feature_names=None):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        if not set(self.classes_.tolist()) <= {0, 1}:
            raise ValueError("y must be coded 0/1")
        self._X_fit = X
        names = list(feature_names) if feature_names is not None else [
            f"beta{i}" for i in range(X.shape[1])
        ]
        data = models.LogisticModelData(y, X, self.sig2beta)
        self.coef_ = self._sample(models.logistic_target(data, names), X.shape[1])
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "coef_")
        p1 = 1.0 / (1.0 + np.exp(-(check_array(X) @ self.coef_)))
        return np.column_stack([1 - p1, p1])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)


class HMCPoissonGLMM(RegressorMixin, _HMCBase):
    """Poisson regression with one random intercept per group.

    Random intercepts are ``u = exp(xi) * tau`` with ``tau ~ N(0, I)`` and a
    half-t(``nu_xi``, ``A_xi``) prior on ``exp(xi)``. Group labels are passed
    to ``fit`` as ``groups``; ``random_effects_`` and ``lambda_`` hold the
    posterior medians of ``u`` and ``exp(xi)``.
    """

    def __init__(
        self, n_samples=2000, burnin=200, eps=0.01, n_steps=10, chains=2,
        seed=0, parallel=False, theta_init=None, mass_diag=None,
        jitter_steps=False, jitter_eps=False, qr=False, sampler="hmc",
        proposal_scale=0.1, sig2beta=1e3, nu_xi=1.0, A_xi=25.0,
    ):
        self.n_samples = n_samples
        self.burnin = burnin
        self.eps = eps
        self.n_steps = n_steps
        self.chains = chains
        self.seed = seed
        self.parallel = parallel
        self.theta_init = theta_init
        self.mass_diag = mass_diag
        self.jitter_steps = jitter_steps
        self.jitter_eps = jitter_eps
        self.qr = qr
        self.sampler = sampler
        self.proposal_scale = proposal_scale
        self.sig2beta = sig2beta
        self.nu_xi = nu_xi
        self.A_xi = A_xi

    def fit(self, X, y, groups, feature_names=None):
        X, y = check_X_y(X, y, y_numeric=True)
        groups = np.asarray(groups)
        if groups.shape != (X.shape[0],):
            raise ValueError("groups must give one label per row")
        self.groups_ = list(dict.fromkeys(groups.tolist()))
        index = {g: j for j, g in enumerate(self.groups_)}
        Z = np.zeros((X.shape[0], len(self.groups_)))
        Z[np.arange(X.shape[0]), [index[g] for g in groups.tolist()]] = 1.0
        self._X_fit = X
        names = list(feature_names) if feature_names is not None else [
            f"beta{i}" for i in range(X.shape[1])
        ]
        names += [f"tau{j + 1}" for j in range(len(self.groups_))] + ["xi"]
        data = models.PoissonGlmmData(y, X, Z, self.sig2beta, self.nu_xi, self.A_xi)
        self._sample(models.glmm_target(data, names), X.shape[1])
        p, n = X.shape[1], len(self.groups_)
        u = models.u_from_tau_xi(self.samples_[:, p : p + n], self.samples_[:, -1])
        self.coef_ = np.median(self.samples_[:, :p], axis=0)
        self.random_effects_ = np.median(u[:, :-1], axis=0)
        self.lambda_ = float(np.median(u[:, -1]))
        return self

    def predict(self, X, groups=None):
        """Expected counts; rows with unseen or missing groups get ``u = 0``."""
        check_is_fitted(self, "coef_")
        eta = check_array(X) @ self.coef_
        if groups is not None:
            lookup = dict(zip(self.groups_, self.random_effects_))
            eta = eta + np.array([lookup.get(g, 0.0) for g in np.asarray(groups).tolist()])
        return np.exp(eta)

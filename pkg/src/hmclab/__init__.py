"""Hamiltonian Monte Carlo for Bayesian regression.

Submodules
----------
sampler      leapfrog integrator, HMC and random-walk Metropolis chains
models       log posteriors and gradients (linear, logistic, Poisson GLMM)
design       dataset fixtures, formulas, design matrices, QR
diagnostics  quantile summaries, split R-hat, plot data
oracles      finite differences, OLS and IRLS reference fits
estimators   scikit-learn style wrappers
experiment   config-driven runs and their files; ``cli`` is the entry point
"""

from .design import build_design, load_dataset, parse_formula, qr_reparameterize
from .diagnostics import quantile_summary, split_rhat
from .estimators import HMCLinearRegression, HMCLogisticRegression, HMCPoissonGLMM
from .experiment import ExperimentConfig, load_config, run_experiment
from .sampler import (
    HmcConfig,
    LeapfrogConfig,
    MassSpec,
    MhConfig,
    TargetDensity,
    leapfrog_step,
    run_chains,
    run_hmc_chain,
    run_mh_chain,
)

__all__ = [
    "ExperimentConfig", "HMCLinearRegression", "HMCLogisticRegression",
    "HMCPoissonGLMM", "HmcConfig", "LeapfrogConfig", "MassSpec", "MhConfig",
    "TargetDensity", "build_design", "leapfrog_step", "load_config",
    "load_dataset", "parse_formula", "qr_reparameterize", "quantile_summary",
    "run_chains", "run_experiment", "run_hmc_chain", "run_mh_chain",
    "split_rhat",
]
__version__ = "0.1.0"

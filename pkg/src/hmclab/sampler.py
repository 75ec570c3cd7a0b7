"""Leapfrog integration, HMC and random-walk Metropolis transitions, and
multi-chain orchestration.

Randomness
----------
Every chain owns a :class:`numpy.random.Generator` backed by PCG64
(128-bit state), seeded with ``SeedSequence([seed, chain_id])``. Normal
variates come from numpy's ziggurat transform of the PCG64 stream, so a
``(seed, chain_id)`` pair pins every draw regardless of how many chains
run concurrently. Within one HMC iteration draws are consumed in a fixed
order: momentum (``k`` normals), step-count jitter, step-size jitter,
then the acceptance uniform. The uniform is drawn even when the
trajectory diverges so that the stream stays aligned.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class ContractError(ValueError):
    """Raised when inputs violate a dimension or positivity contract."""


class ConfigurationError(ValueError):
    """Raised when a sampler configuration cannot be run."""


class DivergentTrajectoryError(FloatingPointError):
    """A leapfrog step produced a non-finite gradient.

    Attributes
    ----------
    theta : ndarray
        The position at which the gradient was not finite.
    """

    def __init__(self, theta, message="non-finite gradient in leapfrog step"):
        super().__init__(message)
        self.theta = np.array(theta, dtype=float, copy=True)


class ChainError(RuntimeError):
    """Wraps any exception raised while running a single chain."""

    def __init__(self, chain_id, cause):
        super().__init__(f"chain {chain_id} failed: {cause}")
        self.chain_id = chain_id
        self.cause = cause


@dataclass(frozen=True)
class TargetDensity:
    """Unnormalized log density together with its gradient.

    Both callables must be pure: chains running in parallel threads share
    one instance.
    """

    log_density: Callable[[np.ndarray], float]
    grad_log_density: Callable[[np.ndarray], np.ndarray]
    dim: int
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ContractError(f"dim must be positive, got {self.dim}")
        if self.names is not None and len(self.names) != self.dim:
            raise ContractError(
                f"{len(self.names)} names given for a {self.dim}-d target"
            )

    def check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ContractError(
                f"theta has shape {theta.shape}, target expects ({self.dim},)"
            )
        return theta

    def param_names(self) -> list[str]:
        if self.names is not None:
            return list(self.names)
        return [f"theta{i + 1}" for i in range(self.dim)]


@dataclass(frozen=True)
class PhaseState:
    """Position ``theta`` and auxiliary momentum of equal length."""

    theta: np.ndarray
    momentum: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        momentum = np.asarray(self.momentum, dtype=float)
        if theta.ndim != 1 or theta.shape != momentum.shape:
            raise ContractError(
                f"theta {theta.shape} and momentum {momentum.shape} must be "
                "1-d arrays of equal length"
            )
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "momentum", momentum)

    def negate(self) -> PhaseState:
        return PhaseState(self.theta, -self.momentum)


@dataclass(frozen=True)
class MassSpec:
    """Diagonal of the momentum covariance ``M``."""

    diag: np.ndarray

    def __post_init__(self):
        diag = np.atleast_1d(np.asarray(self.diag, dtype=float))
        if diag.ndim != 1 or not np.all(np.isfinite(diag)) or np.any(diag <= 0):
            raise ContractError("mass diagonal entries must be finite and > 0")
        object.__setattr__(self, "diag", diag)

    @classmethod
    def identity(cls, dim: int) -> MassSpec:
        return cls(np.ones(dim))

    @property
    def dim(self) -> int:
        return self.diag.shape[0]


@dataclass(frozen=True)
class LeapfrogConfig:
    """Step size(s), number of steps and optional per-iteration jitter.

    ``eps`` may be a scalar; :meth:`for_dim` broadcasts it.
    """

    eps: np.ndarray | float
    steps: int
    jitter_steps: bool = False
    jitter_eps: bool = False

    def __post_init__(self):
        eps = np.atleast_1d(np.asarray(self.eps, dtype=float))
        if eps.ndim != 1 or not np.all(np.isfinite(eps)) or np.any(eps <= 0):
            raise ContractError("step sizes must be finite and > 0")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ContractError(f"steps must be a positive integer, got {self.steps}")
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "steps", int(self.steps))

    def for_dim(self, dim: int) -> np.ndarray:
        if self.eps.shape[0] == 1:
            return np.full(dim, self.eps[0])
        if self.eps.shape[0] != dim:
            raise ContractError(
                f"{self.eps.shape[0]} step sizes given for a {dim}-d target"
            )
        return self.eps

    def step_range(self) -> tuple[int, int]:
        """Inclusive bounds of the jittered step count."""
        lo = max(1, math.ceil(0.8 * self.steps))
        hi = max(lo, math.floor(1.2 * self.steps))
        return lo, hi


@dataclass(frozen=True)
class HmcConfig:
    n_samples: int
    theta_init: np.ndarray
    leapfrog: LeapfrogConfig
    mass: MassSpec | None = None
    chains: int = 1
    seed: int = 0
    parallel: bool = False

    def __post_init__(self):
        _check_common(self)
        object.__setattr__(
            self, "theta_init", np.asarray(self.theta_init, dtype=float)
        )


@dataclass(frozen=True)
class MhConfig:
    """Random-walk Metropolis run; ``proposal_scale`` broadcasts like ``eps``."""

    n_samples: int
    theta_init: np.ndarray
    proposal_scale: np.ndarray | float = 1.0
    chains: int = 1
    seed: int = 0
    parallel: bool = False

    def __post_init__(self):
        _check_common(self)
        scale = np.atleast_1d(np.asarray(self.proposal_scale, dtype=float))
        if not np.all(np.isfinite(scale)) or np.any(scale < 0):
            raise ContractError("proposal scales must be finite and >= 0")
        object.__setattr__(
            self, "theta_init", np.asarray(self.theta_init, dtype=float)
        )
        object.__setattr__(self, "proposal_scale", scale)

    def scale_for_dim(self, dim: int) -> np.ndarray:
        if self.proposal_scale.shape[0] == 1:
            return np.full(dim, self.proposal_scale[0])
        if self.proposal_scale.shape[0] != dim:
            raise ContractError(
                f"{self.proposal_scale.shape[0]} proposal scales for a {dim}-d target"
            )
        return self.proposal_scale


def _check_common(cfg):
    if int(cfg.n_samples) != cfg.n_samples or cfg.n_samples < 1:
        raise ConfigurationError(f"n_samples must be >= 1, got {cfg.n_samples}")
    if int(cfg.chains) != cfg.chains or cfg.chains < 1:
        raise ConfigurationError(f"chains must be >= 1, got {cfg.chains}")
    if not 0 <= int(cfg.seed) < 2**64:
        raise ConfigurationError("seed must be an unsigned 64-bit integer")


@dataclass
class ChainResult:
    samples: np.ndarray
    accepted: np.ndarray
    log_post_trace: np.ndarray
    chain_id: int
    divergences: int = 0
    steps_used: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted))


class StepResult(NamedTuple):
    theta: np.ndarray
    accepted: bool
    log_post: float
    divergent: bool = False
    steps: int = 0


def chain_rng(seed: int, chain_id: int) -> np.random.Generator:
    """Independent generator for chain ``chain_id`` of a run seeded by ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, chain_id])))


def _resolve_mass(mass, dim):
    if mass is None:
        return MassSpec.identity(dim)
    if mass.dim != dim:
        raise ContractError(f"mass has {mass.dim} entries, target has dim {dim}")
    return mass


def hamiltonian(state: PhaseState, target: TargetDensity, mass: MassSpec | None = None) -> float:
    """Potential ``-log f(theta)`` plus kinetic ``p^T M^-1 p / 2``."""
    theta = target.check_theta(state.theta)
    mass = _resolve_mass(mass, target.dim)
    logf = float(target.log_density(theta))
    kinetic = 0.5 * float(np.sum(state.momentum**2 / mass.diag))
    if math.isnan(logf) or logf == -math.inf:
        return math.inf
    return -logf + kinetic


def sample_momentum(mass: MassSpec, rng: np.random.Generator) -> np.ndarray:
    return np.sqrt(mass.diag) * rng.standard_normal(mass.dim)


def _gradient(target, theta):
    with np.errstate(over="ignore", invalid="ignore"):
        grad = np.asarray(target.grad_log_density(theta), dtype=float)
    if grad.shape != theta.shape:
        raise ContractError(
            f"gradient has shape {grad.shape}, expected {theta.shape}"
        )
    if not np.all(np.isfinite(grad)):
        raise DivergentTrajectoryError(theta)
    return grad


def _leapfrog(theta, momentum, grad, target, eps, inv_mass):
    half = momentum + 0.5 * eps * grad
    theta_new = theta + eps * half * inv_mass
    grad_new = _gradient(target, theta_new)
    return theta_new, half + 0.5 * eps * grad_new, grad_new


def leapfrog_step(state: PhaseState, target: TargetDensity, eps, mass: MassSpec | None = None) -> PhaseState:
    """One leapfrog update with per-coordinate step sizes.

    Parameters
    ----------
    state : PhaseState
    target : TargetDensity
    eps : float or array_like
        Step size, broadcast to ``target.dim`` if scalar.
    mass : MassSpec, optional
        Identity when omitted.

    Raises
    ------
    DivergentTrajectoryError
        If the gradient is not finite at the start or end position.
    """
    theta = target.check_theta(state.theta)
    mass = _resolve_mass(mass, target.dim)
    eps = LeapfrogConfig(eps, 1).for_dim(target.dim)
    grad = _gradient(target, theta)
    theta_new, p_new, _ = _leapfrog(
        theta, state.momentum, grad, target, eps, 1.0 / mass.diag
    )
    return PhaseState(theta_new, p_new)


def _draw_jitter(cfg: LeapfrogConfig, eps, rng):
    steps = cfg.steps
    if cfg.jitter_steps:
        lo, hi = cfg.step_range()
        steps = int(rng.integers(lo, hi + 1))
    if cfg.jitter_eps:
        eps = eps * rng.uniform(0.9, 1.1)
    return steps, eps


def _trajectory(theta, momentum, target, eps, steps, inv_mass):
    grad = _gradient(target, theta)
    for _ in range(steps):
        theta, momentum, grad = _leapfrog(theta, momentum, grad, target, eps, inv_mass)
    return theta, momentum


def leapfrog_trajectory(
    state: PhaseState,
    target: TargetDensity,
    cfg: LeapfrogConfig,
    mass: MassSpec | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[PhaseState, int]:
    """Compose ``cfg.steps`` leapfrog steps, returning the end state and the
    number of steps actually taken (differs from ``cfg.steps`` under jitter).

    Gradients are cached between consecutive steps; the result is identical
    to calling :func:`leapfrog_step` repeatedly.
    """
    theta = target.check_theta(state.theta)
    mass = _resolve_mass(mass, target.dim)
    eps = cfg.for_dim(target.dim)
    if cfg.jitter_steps or cfg.jitter_eps:
        if rng is None:
            raise ConfigurationError("jittered trajectories need an rng")
        steps, eps = _draw_jitter(cfg, eps, rng)
    else:
        steps = cfg.steps
    theta, momentum = _trajectory(
        theta, state.momentum, target, eps, steps, 1.0 / mass.diag
    )
    return PhaseState(theta, momentum), steps


def _log_density(target, theta):
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        value = float(target.log_density(theta))
    return value if math.isfinite(value) else -math.inf


def hmc_step(
    theta_prev,
    target: TargetDensity,
    cfg: LeapfrogConfig,
    mass: MassSpec | None,
    rng: np.random.Generator,
    log_post_prev: float | None = None,
) -> StepResult:
    """One HMC transition.

    A divergent trajectory (non-finite gradient or end-point density) is
    rejected and flagged in ``StepResult.divergent``.
    """
    theta_prev = target.check_theta(theta_prev)
    mass = _resolve_mass(mass, target.dim)
    if log_post_prev is None:
        log_post_prev = _log_density(target, theta_prev)
    inv_mass = 1.0 / mass.diag

    p0 = sample_momentum(mass, rng)
    steps, eps = _draw_jitter(cfg, cfg.for_dim(target.dim), rng)
    divergent = False
    try:
        theta_new, p_new = _trajectory(theta_prev, p0, target, eps, steps, inv_mass)
        p_new = -p_new
        log_post_new = _log_density(target, theta_new)
        divergent = log_post_new == -math.inf
    except DivergentTrajectoryError:
        divergent = True
    u = rng.random()

    if divergent:
        return StepResult(theta_prev, False, log_post_prev, True, steps)
    log_alpha = (log_post_new - 0.5 * np.sum(p_new**2 * inv_mass)) - (
        log_post_prev - 0.5 * np.sum(p0**2 * inv_mass)
    )
    if math.isnan(log_alpha):
        return StepResult(theta_prev, False, log_post_prev, True, steps)
    if math.log(u) <= min(0.0, log_alpha):
        return StepResult(theta_new, True, log_post_new, False, steps)
    return StepResult(theta_prev, False, log_post_prev, False, steps)


def mh_step(
    theta_prev,
    target: TargetDensity,
    proposal_scale,
    rng: np.random.Generator,
    log_post_prev: float | None = None,
) -> StepResult:
    """Random-walk Metropolis transition with a symmetric Gaussian proposal.

    Accepts when ``u <= alpha`` (``log u <= min(0, log alpha)``).
    """
    theta_prev = target.check_theta(theta_prev)
    scale = np.broadcast_to(np.asarray(proposal_scale, dtype=float), theta_prev.shape)
    if log_post_prev is None:
        log_post_prev = _log_density(target, theta_prev)
    proposal = theta_prev + scale * rng.standard_normal(target.dim)
    u = rng.random()
    log_post_prop = _log_density(target, proposal)
    if log_post_prop == -math.inf:
        return StepResult(theta_prev, False, log_post_prev, True)
    log_alpha = log_post_prop - log_post_prev
    if math.log(u) <= min(0.0, log_alpha):
        return StepResult(proposal, True, log_post_prop)
    return StepResult(theta_prev, False, log_post_prev)


def _initial_state(target, theta_init):
    theta = target.check_theta(theta_init).copy()
    log_post = _log_density(target, theta)
    if not math.isfinite(log_post):
        raise ConfigurationError("log density is not finite at theta_init")
    return theta, log_post


def _run(target, n_samples, theta_init, chain_id, step):
    theta, log_post = _initial_state(target, theta_init)
    samples = np.empty((n_samples, target.dim))
    accepted = np.zeros(n_samples, dtype=bool)
    trace = np.empty(n_samples)
    steps_used = np.zeros(n_samples, dtype=int)
    divergences = 0
    for t in range(n_samples):
        res = step(theta, log_post)
        theta, log_post = res.theta, res.log_post
        samples[t] = theta
        accepted[t] = res.accepted
        trace[t] = log_post
        steps_used[t] = res.steps
        divergences += res.divergent
    return ChainResult(samples, accepted, trace, chain_id, divergences, steps_used)


def run_hmc_chain(target: TargetDensity, config: HmcConfig, chain_id: int = 0, rng=None) -> ChainResult:
    """Run ``config.n_samples`` HMC iterations; ``theta_init`` is not emitted."""
    if rng is None:
        rng = chain_rng(config.seed, chain_id)
    mass = _resolve_mass(config.mass, target.dim)
    cfg = config.leapfrog
    cfg.for_dim(target.dim)

    def step(theta, log_post):
        return hmc_step(theta, target, cfg, mass, rng, log_post)

    return _run(target, config.n_samples, config.theta_init, chain_id, step)


def run_mh_chain(target: TargetDensity, config: MhConfig, chain_id: int = 0, rng=None) -> ChainResult:
    if rng is None:
        rng = chain_rng(config.seed, chain_id)
    scale = config.scale_for_dim(target.dim)

    def step(theta, log_post):
        return mh_step(theta, target, scale, rng, log_post)

    return _run(target, config.n_samples, config.theta_init, chain_id, step)


def run_chains(target: TargetDensity, config: HmcConfig | MhConfig) -> list[ChainResult]:
    """Run ``config.chains`` independent chains, ordered by chain id.

    Chain ``c`` always uses ``chain_rng(config.seed, c)``, so the output
    does not depend on ``config.parallel`` or thread scheduling.

    Raises
    ------
    ChainError
        Carrying the id of the first failing chain.
    """
    runner = run_mh_chain if isinstance(config, MhConfig) else run_hmc_chain

    def one(chain_id):
        try:
            return runner(target, config, chain_id, chain_rng(config.seed, chain_id))
        except Exception as exc:
            raise ChainError(chain_id, exc) from exc

    ids: Sequence[int] = range(config.chains)
    if config.parallel and config.chains > 1:
        with ThreadPoolExecutor(max_workers=config.chains) as pool:
            futures = [pool.submit(one, c) for c in ids]
            return [f.result() for f in futures]
    return [one(c) for c in ids]

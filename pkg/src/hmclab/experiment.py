"""Config-driven experiment runs and their on-disk artifacts.

An experiment config is one JSON document::

    {
      "model": "linear" | "logistic" | "poisson_glmm" | "gaussian_demo",
      "data": "warpbreaks" | {"config": "path/to/dataset.json"},
      "formula": "breaks ~ wool*tension",
      "random_intercept": "Site",            # poisson_glmm only
      "hyperparameters": {"sig2beta": 1000},
      "sampler": "hmc" | "mh",
      "n_samples": 2000, "burnin": 200, "chains": 2, "seed": 143,
      "eps": 0.2 | [...], "L": 20,
      "jitter_steps": false, "jitter_eps": false,
      "mass_diag": null, "qr": false,
      "theta_init": "zeros" | [...], "gamma_init": 1.0,
      "proposal_scale": 0.1,                 # mh only
      "dim": 5,                              # gaussian_demo only
      "bins": 30,
      "comparison": "auto" | [...] | {...} | null
    }

Relative dataset paths resolve against the config file's directory. A run
writes ``samples.csv``, ``summary.csv``, ``diagnostics.json``,
``plotdata.json`` and ``manifest.json``. ``samples.csv`` is a pure
function of the config and seed.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import models
from .design import (
    build_design,
    build_random_intercept,
    build_response,
    load_dataset,
    qr_back_transform,
    qr_reparameterize,
)
from .diagnostics import export_plot_data, quantile_summary, split_rhat
from .oracles import irls_logistic, ols_fit
from .sampler import (
    ChainResult,
    HmcConfig,
    LeapfrogConfig,
    MassSpec,
    MhConfig,
    run_chains,
)

CONFIG_DIR = Path(__file__).resolve().parent / "configs"
MODELS = ("linear", "logistic", "poisson_glmm", "gaussian_demo")
_HYPER_DEFAULTS = {
    "linear": {"a": 1e-4, "b": 1e-4, "sig2beta": 1e3},
    "logistic": {"sig2beta": 1e3},
    "poisson_glmm": {"sig2beta": 1e3, "nu_xi": 1.0, "A_xi": 25.0},
    "gaussian_demo": {},
}


class ConfigError(ValueError):
    """The experiment config is malformed or inconsistent."""


@dataclass
class ExperimentConfig:
    model: str
    data: str | dict | None = None
    formula: str | None = None
    random_intercept: str | None = None
    hyperparameters: dict = field(default_factory=dict)
    sampler: str = "hmc"
    n_samples: int = 2000
    burnin: int = 200
    chains: int = 2
    seed: int = 0
    eps: float | list = 0.01
    L: int = 10
    jitter_steps: bool = False
    jitter_eps: bool = False
    mass_diag: list | None = None
    qr: bool = False
    theta_init: str | list = "zeros"
    gamma_init: float | None = None
    proposal_scale: float | list = 0.1
    dim: int | None = None
    bins: int = 30
    comparison: str | list | dict | None = "auto"
    base_dir: str = "."

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.sampler not in ("hmc", "mh"):
            raise ConfigError(f"sampler must be 'hmc' or 'mh', got {self.sampler!r}")
        if self.model == "gaussian_demo":
            if not isinstance(self.dim, int) or self.dim < 1:
                raise ConfigError("gaussian_demo needs a positive integer 'dim'")
        else:
            if self.data is None or self.formula is None:
                raise ConfigError(f"model {self.model!r} needs 'data' and 'formula'")
        if self.model == "poisson_glmm" and not self.random_intercept:
            raise ConfigError("poisson_glmm needs 'random_intercept'")
        unknown = set(self.hyperparameters) - set(_HYPER_DEFAULTS[self.model])
        if unknown:
            raise ConfigError(f"unknown hyperparameters for {self.model}: {sorted(unknown)}")
        for name in ("n_samples", "chains", "L", "bins"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if not isinstance(self.burnin, int) or not 0 <= self.burnin < self.n_samples:
            raise ConfigError("burnin must be an integer in [0, n_samples)")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.qr and self.model == "gaussian_demo":
            raise ConfigError("qr has no design matrix to act on for gaussian_demo")

    @property
    def hyper(self) -> dict:
        return {**_HYPER_DEFAULTS[self.model], **self.hyperparameters}


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    raw.pop("name", None)
    raw.pop("description", None)
    known = set(ExperimentConfig.__dataclass_fields__) - {"base_dir"}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"{path}: unknown keys {sorted(extra)}")
    try:
        return ExperimentConfig(**raw, base_dir=str(path.parent))
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _dataset(cfg: ExperimentConfig):
    if isinstance(cfg.data, str):
        candidate = Path(cfg.base_dir) / cfg.data
        return load_dataset(candidate if candidate.suffix == ".json" and candidate.exists() else cfg.data)
    if isinstance(cfg.data, dict) and "config" in cfg.data:
        return load_dataset(Path(cfg.base_dir) / cfg.data["config"])
    raise ConfigError("data must be a fixture name or {'config': path}")


@dataclass
class Problem:
    """Everything needed to sample one experiment."""

    target: object
    names: list
    n_coef: int = 0
    X: np.ndarray | None = None
    y: np.ndarray | None = None
    comparison: dict | None = None


def build_problem(cfg: ExperimentConfig) -> Problem:
    h = cfg.hyper
    if cfg.model == "gaussian_demo":
        names = [f"x{i + 1}" for i in range(cfg.dim)]
        return Problem(models.gaussian_target(np.zeros(cfg.dim), names=names), names)

    table = _dataset(cfg)
    X, cols = build_design(table, cfg.formula)
    y = build_response(table, cfg.formula)
    if cfg.model == "linear":
        names = cols + ["log_sigma_sq"]
        data = models.LinearModelData(y, X, h["a"], h["b"], h["sig2beta"])
        target = models.linear_target(data, names)
    elif cfg.model == "logistic":
        names = list(cols)
        target = models.logistic_target(models.LogisticModelData(y, X, h["sig2beta"]), names)
    else:
        Z, groups = build_random_intercept(table, cfg.random_intercept)
        names = cols + [f"tau{j + 1}" for j in range(len(groups))] + ["xi"]
        data = models.PoissonGlmmData(y, X, Z, h["sig2beta"], h["nu_xi"], h["A_xi"])
        target = models.glmm_target(data, names)
    return Problem(target, names, X.shape[1], X, y, _comparison(cfg, names, X, y))


def _comparison(cfg, names, X, y):
    if cfg.comparison is None:
        return None
    if isinstance(cfg.comparison, dict):
        return {k: float(v) for k, v in cfg.comparison.items()}
    if isinstance(cfg.comparison, list):
        return dict(zip(names, map(float, cfg.comparison)))
    if cfg.comparison != "auto":
        raise ConfigError("comparison must be 'auto', a list, an object or null")
    if cfg.model == "linear":
        fit = ols_fit(y, X)
        return dict(zip(names, [*fit.coefficients.tolist(), fit.aux]))
    if cfg.model == "logistic":
        return dict(zip(names, irls_logistic(y, X).coefficients.tolist()))
    return None


def _vector(value, k, what):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.shape[0] == 1:
        return np.full(k, arr[0])
    if arr.shape != (k,):
        raise ConfigError(f"{what} has {arr.shape[0]} entries, model has {k} parameters")
    return arr


def sampler_config(cfg: ExperimentConfig, k: int, parallel: bool):
    if cfg.theta_init == "zeros":
        theta0 = np.zeros(k)
        if cfg.gamma_init is not None:
            if cfg.model != "linear":
                raise ConfigError("gamma_init only applies to the linear model")
            theta0[-1] = cfg.gamma_init
    elif isinstance(cfg.theta_init, list):
        theta0 = _vector(cfg.theta_init, k, "theta_init")
        if len(cfg.theta_init) != k:
            raise ConfigError(f"theta_init must have {k} entries")
    else:
        raise ConfigError("theta_init must be 'zeros' or a list")
    if cfg.sampler == "mh":
        scale = _vector(cfg.proposal_scale, k, "proposal_scale")
        return MhConfig(cfg.n_samples, theta0, scale, cfg.chains, cfg.seed, parallel)
    eps = _vector(cfg.eps, k, "eps")
    if np.any(eps <= 0):
        raise ConfigError("eps entries must be positive")
    mass = None
    if cfg.mass_diag is not None:
        mass_diag = _vector(cfg.mass_diag, k, "mass_diag")
        if np.any(mass_diag <= 0):
            raise ConfigError("mass_diag entries must be positive")
        mass = MassSpec(mass_diag)
    lf = LeapfrogConfig(eps, cfg.L, cfg.jitter_steps, cfg.jitter_eps)
    return HmcConfig(cfg.n_samples, theta0, lf, mass, cfg.chains, cfg.seed, parallel)


def sample(cfg: ExperimentConfig, parallel: bool = False):
    """Run the chains for ``cfg``; coefficients are returned in the original
    basis even when ``cfg.qr`` is set."""
    problem = build_problem(cfg)
    target = problem.target
    scfg = sampler_config(cfg, target.dim, parallel)
    R = None
    if cfg.qr:
        _, R = qr_reparameterize(problem.X)
        target = models.qr_target(target, R, problem.n_coef)
        theta0 = scfg.theta_init.copy()
        theta0[: problem.n_coef] = R @ theta0[: problem.n_coef]
        scfg = type(scfg)(**{**scfg.__dict__, "theta_init": theta0})
    chains = run_chains(target, scfg)
    if R is not None:
        p = problem.n_coef
        for c in chains:
            c.samples[:, :p] = qr_back_transform(c.samples[:, :p], R)
    return problem, chains


def derived_columns(names, samples):
    """Random-intercept back-transform columns ``u1..un`` and ``lambda``
    when ``names`` include ``tau*`` and ``xi``; otherwise nothing."""
    tau_idx = [i for i, n in enumerate(names) if n.startswith("tau") and n[3:].isdigit()]
    if "xi" not in names or not tau_idx:
        return [], np.empty((samples.shape[0], 0))
    u = models.u_from_tau_xi(samples[:, tau_idx], samples[:, names.index("xi")])
    return [f"u{j + 1}" for j in range(len(tau_idx))] + ["lambda"], u


def _fmt(x) -> str:
    return repr(float(x))


def samples_csv(names, chains) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["chain", "iter", *names, "accept", "log_post"])
    for c in chains:
        for t in range(c.n_samples):
            w.writerow(
                [c.chain_id, t + 1, *map(_fmt, c.samples[t]), int(c.accepted[t]), _fmt(c.log_post_trace[t])]
            )
    return buf.getvalue()


def read_samples(path):
    """Parse a ``samples.csv`` back into parameter names and chains."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["chain", "iter"] or header[-2:] != ["accept", "log_post"]:
            raise ValueError(f"{path}: not a samples file")
        rows = list(reader)
    names = header[2:-2]
    by_chain: dict[int, list] = {}
    for r in rows:
        by_chain.setdefault(int(r[0]), []).append(r)
    chains = []
    for cid in sorted(by_chain):
        block = by_chain[cid]
        vals = np.array([[float(v) for v in r[2:-2]] for r in block])
        acc = np.array([r[-2] == "1" for r in block])
        lp = np.array([float(r[-1]) for r in block])
        chains.append(ChainResult(vals.reshape(len(block), len(names)), acc, lp, cid))
    return names, chains


def _json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def diagnostics_doc(names, chains, burnin) -> dict:
    rhat = split_rhat(chains, burnin)
    return {
        "burnin": burnin,
        "acceptance": [c.acceptance_rate for c in chains],
        "divergences": [int(c.divergences) for c in chains],
        "rhat": dict(zip(names, rhat.tolist())),
        "max_rhat": float(np.max(rhat)),
    }


def plot_doc(names, chains, burnin, bins, comparison=None) -> dict:
    extra_names, _ = derived_columns(names, chains[0].samples)
    arrays = []
    for c in chains:
        _, extra = derived_columns(names, c.samples)
        arrays.append(np.hstack([c.samples, extra]))
    return export_plot_data(arrays, burnin, bins, names + extra_names, comparison)


def run_experiment(cfg: ExperimentConfig, out_dir, parallel: bool = False) -> dict:
    """Sample ``cfg`` and write all artifacts into ``out_dir``."""
    t0 = time.perf_counter()
    problem, chains = sample(cfg, parallel)
    wall = time.perf_counter() - t0
    names = problem.names
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    summary = quantile_summary(chains, cfg.burnin, names=names)
    files = {
        "samples.csv": samples_csv(names, chains),
        "summary.csv": summary.to_csv(),
        "diagnostics.json": _json(diagnostics_doc(names, chains, cfg.burnin)),
        "plotdata.json": _json(plot_doc(names, chains, cfg.burnin, cfg.bins, problem.comparison)),
    }
    manifest = {
        "config": {k: v for k, v in asdict(cfg).items() if k != "base_dir"},
        "seed": cfg.seed,
        "parallel": parallel,
        "parameters": names,
        "acceptance": [c.acceptance_rate for c in chains],
        "divergences": [int(c.divergences) for c in chains],
        "wall_time_s": wall,
        "files": sorted(files) + ["manifest.json"],
    }
    if problem.comparison is not None:
        manifest["comparison"] = problem.comparison
    for fname, text in files.items():
        (out / fname).write_text(text, encoding="utf-8")
    (out / "manifest.json").write_text(_json(manifest), encoding="utf-8")
    return manifest



"""Posterior summaries, split R-hat and plot-data export.

Functions accept chains either as :class:`~hmclab.sampler.ChainResult`
objects or as plain ``(N, k)`` arrays. Burn-in is always applied here,
never at sampling time.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

DEFAULT_PROBS = (0.025, 0.05, 0.25, 0.50, 0.75, 0.95, 0.975)


def _arrays(chains):
    out = []
    for c in chains:
        a = np.asarray(getattr(c, "samples", c), dtype=float)
        out.append(a[:, None] if a.ndim == 1 else a)
    if not out:
        raise ValueError("at least one chain is required")
    k = {a.shape[1] for a in out}
    if len(k) != 1:
        raise ValueError("chains have different parameter counts")
    return out


def _post_burnin(chains, burnin):
    arrays = _arrays(chains)
    n = min(a.shape[0] for a in arrays)
    if not 0 <= burnin < n:
        raise ValueError(f"burnin={burnin} must be in [0, {n})")
    return [a[burnin:] for a in arrays]


def acceptance_rate(chain) -> float:
    accepted = np.asarray(getattr(chain, "accepted", chain), dtype=bool)
    if accepted.size == 0:
        raise ValueError("empty chain")
    return float(accepted.mean())


def quantile(x, p) -> float:
    """Linearly interpolated empirical quantile.

    With ``x`` sorted and ``h = (m - 1) p + 1`` (1-based), returns
    ``x[floor(h)] + (h - floor(h)) (x[floor(h) + 1] - x[floor(h)])``.
    """
    x = np.sort(np.asarray(x, dtype=float))
    h = (x.shape[0] - 1) * p
    lo = int(np.floor(h))
    hi = min(lo + 1, x.shape[0] - 1)
    return float(x[lo] + (h - lo) * (x[hi] - x[lo]))


@dataclass
class SummaryTable:
    names: list[str]
    probs: tuple[float, ...]
    quantiles: np.ndarray  # (k, len(probs))
    rhat: np.ndarray

    def _labels(self):
        return [f"{100 * p:g}%" for p in self.probs]

    def row(self, name) -> dict:
        i = self.names.index(name)
        out = dict(zip(self._labels(), self.quantiles[i].tolist()))
        out["rhat"] = float(self.rhat[i])
        return out

    def median(self, name) -> float:
        return quantile_at(self, name, 0.5)

    def to_dict(self) -> dict:
        return {
            "probs": list(self.probs),
            "parameters": [{"name": n, **self.row(n)} for n in self.names],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["parameter", *self._labels(), "rhat"])
        for i, n in enumerate(self.names):
            w.writerow([n, *map(repr, self.quantiles[i].tolist()), repr(float(self.rhat[i]))])
        return buf.getvalue()


def quantile_at(table: SummaryTable, name: str, p: float) -> float:
    return float(table.quantiles[table.names.index(name), table.probs.index(p)])


def quantile_summary(chains, burnin=0, probs=DEFAULT_PROBS, names=None) -> SummaryTable:
    """Pool post-burn-in draws of all chains and tabulate quantiles and R-hat."""
    segments = _post_burnin(chains, burnin)
    pooled = np.vstack(segments)
    k = pooled.shape[1]
    names = list(names) if names is not None else [f"theta{i + 1}" for i in range(k)]
    if len(names) != k:
        raise ValueError(f"{len(names)} names for {k} parameters")
    q = np.array([[quantile(pooled[:, j], p) for p in probs] for j in range(k)])
    rhat = split_rhat(chains, burnin) if all(s.shape[0] >= 4 for s in segments) else np.full(k, np.nan)
    return SummaryTable(names, tuple(probs), q, rhat)


def split_rhat(chains, burnin=0) -> np.ndarray:
    """Split-chain Gelman-Rubin statistic per parameter.

    Each post-burn-in segment is cut into two halves of length ``m`` (the
    middle draw is dropped when the length is odd). With ``W`` the mean of
    the half-chain variances and ``B`` ``m`` times the variance of their
    means, ``Rhat = sqrt((m - 1)/m + B/(m W))``; 1.0 where ``W == 0``.
    """
    segments = _post_burnin(chains, burnin)
    n = min(s.shape[0] for s in segments)
    if n < 4:
        raise ValueError(f"need at least 4 post-burn-in draws per chain, got {n}")
    m = n // 2
    seqs = []
    for s in segments:
        s = s[:n]
        seqs += [s[:m], s[n - m :]]
    seqs = np.stack(seqs)  # (2C, m, k)
    means = seqs.mean(axis=1)
    W = seqs.var(axis=1, ddof=1).mean(axis=0)
    B = m * means.var(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rhat = np.sqrt((m - 1) / m + B / (m * W))
    return np.where(W == 0, 1.0, rhat)


def export_plot_data(
    chains,
    burnin=0,
    bins=30,
    names=None,
    comparison=None,
    max_trace_points=1000,
) -> dict:
    """Histogram and thinned trace per parameter as a JSON-ready dict.

    ``comparison`` optionally maps parameter names (or positions) to
    reference values drawn as vertical lines, e.g. frequentist estimates.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    segments = _post_burnin(chains, burnin)
    pooled = np.vstack(segments)
    k = pooled.shape[1]
    names = list(names) if names is not None else [f"theta{i + 1}" for i in range(k)]
    if comparison is not None and not isinstance(comparison, dict):
        comparison = dict(zip(names, comparison))
    thin = max(1, -(-segments[0].shape[0] // max_trace_points))
    params = []
    for j, name in enumerate(names):
        counts, edges = np.histogram(pooled[:, j], bins=bins)
        trace = {"chain": [], "iter": [], "value": []}
        for c, s in enumerate(segments):
            idx = np.arange(0, s.shape[0], thin)
            trace["chain"] += [c] * idx.shape[0]
            trace["iter"] += (idx + burnin + 1).tolist()
            trace["value"] += s[idx, j].tolist()
        entry = {
            "name": name,
            "histogram": {"edges": edges.tolist(), "counts": counts.tolist()},
            "trace": trace,
        }
        if comparison is not None and name in comparison:
            entry["comparison"] = float(comparison[name])
        params.append(entry)
    return {"burnin": burnin, "bins": bins, "thin": thin, "parameters": params}

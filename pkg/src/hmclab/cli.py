"""Command-line entry point.

::

    hmclab fit --config cfg.json --out runs/ex1 [--parallel] [--seed N]
    hmclab summarize runs/ex1/samples.csv --burnin 200 [--out summary.csv]
    hmclab diagnose runs/ex1/samples.csv --burnin 200 [--out diag.json]
    hmclab plot-data runs/ex1/samples.csv --bins 30 --burnin 200 \\
        [--compare values.json] [--out plot.json]

Exit codes: 0 success, 2 invalid config or arguments, 3 sampling failure,
4 file-system error. Error messages go to standard error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .design import DesignError, RankDeficientError
from .experiment import (
    ConfigError,
    diagnostics_doc,
    load_config,
    plot_doc,
    read_samples,
    run_experiment,
)
from .diagnostics import quantile_summary
from .sampler import ChainError, ConfigurationError, ContractError

EXIT_CONFIG, EXIT_SAMPLING, EXIT_IO = 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hmclab", description="HMC experiments for Bayesian regression")
    sub = p.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="sample an experiment config and write its artifacts")
    fit.add_argument("--config", required=True, type=Path)
    fit.add_argument("--out", required=True, type=Path)
    fit.add_argument("--parallel", action="store_true", help="run chains concurrently")
    fit.add_argument("--seed", type=int, default=None, help="override the config seed")

    for name, helptext in (
        ("summarize", "quantile table with split R-hat (CSV)"),
        ("diagnose", "acceptance, divergences and split R-hat (JSON)"),
        ("plot-data", "histograms and traces (JSON)"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("samples", type=Path, help="samples.csv written by 'fit'")
        s.add_argument("--burnin", type=int, default=0)
        s.add_argument("--out", type=Path, default=None, help="write here instead of stdout")
        if name == "plot-data":
            s.add_argument("--bins", type=int, default=30)
            s.add_argument("--compare", type=Path, default=None,
                           help="JSON object or list of reference values")
    return p


def _emit(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")


def _load_compare(path: Path):
    try:
        values = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(values, (dict, list)):
        raise ConfigError(f"{path}: expected an object or a list")
    return values


def _run(args) -> int:
    if args.command == "fit":
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        manifest = run_experiment(cfg, args.out, parallel=args.parallel)
        acc = ", ".join(f"{a:.4f}" for a in manifest["acceptance"])
        print(f"wrote {args.out} (acceptance {acc}; {manifest['wall_time_s']:.2f} s)")
        return 0

    names, chains = read_samples(args.samples)
    if args.command == "summarize":
        text = quantile_summary(chains, args.burnin, names=names).to_csv()
    elif args.command == "diagnose":
        text = json.dumps(diagnostics_doc(names, chains, args.burnin), indent=2) + "\n"
    else:
        compare = _load_compare(args.compare) if args.compare else None
        text = json.dumps(plot_doc(names, chains, args.burnin, args.bins, compare), indent=2) + "\n"
    _emit(text, args.out)
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _run(args)
    except (ConfigError, ConfigurationError, ContractError, DesignError, RankDeficientError) as exc:
        print(f"hmclab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ChainError as exc:
        if isinstance(exc.cause, ConfigurationError):
            print(f"hmclab: configuration error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"hmclab: sampling failed: {exc}", file=sys.stderr)
        return EXIT_SAMPLING
    except OSError as exc:
        print(f"hmclab: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # malformed samples files, bad burn-in, etc.
        print(f"hmclab: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface for fits, experiments, and self-checks.

Every command validates its parameters before any work starts, writes
its artifacts through the run store, and prints the run directory on
standard output.  Progress goes to standard error only.  Exit codes:
0 success, 1 failed self-test, 2 input error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, selftest
from .generators import (
    DENSITY_IDS,
    METHODS,
    ExperimentPlan,
    bootstrap_slope_ci,
    contraction_errors,
    density_spec,
    results_to_csv,
    results_to_markdown,
    run_mse_experiment,
)
from .kernels import mixture_pdf
from .metrics import GridDensity, canonical_grid, hellinger, mse_grid
from .multitest import (
    MTP_METHODS,
    estimates_histogram_csv,
    mtp_rows_to_csv,
    run_mtp_experiment,
    scenarios_from_config,
)
from .runstore import RunManifest, write_run
from .slice_sampler import (
    PriorConfig,
    SamplerConfig,
    draws_to_jsonl,
    posterior_mean_beta0,
    posterior_mean_density,
    run_chain,
)

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_INPUT = 2
EXIT_RUNTIME = 3


class InputError(Exception):
    """Bad user input: file contents, flag values, or config keys."""


def _progress(message: str) -> None:
    print(f"[kmono] {message}", file=sys.stderr)


def _read_data_csv(path) -> np.ndarray:
    """Parse a single-column numeric CSV; one optional header line."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    values = []
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        try:
            values.append((lineno, float(text)))
        except ValueError:
            if lineno == 1:
                continue  # header
            raise InputError(f"{path}: line {lineno}: not a number: {text!r}")
    if len(values) < 2:
        raise InputError(f"{path}: need at least 2 observations")
    outside = [(ln, v) for ln, v in values if not 0.0 < v < 1.0]
    if outside:
        shown = ", ".join(f"line {ln}: {v!r}" for ln, v in outside[:5])
        more = f" and {len(outside) - 5} more" if len(outside) > 5 else ""
        raise InputError(f"{path}: values outside (0,1): {shown}{more}")
    return np.array([v for _, v in values])


def _data_csv_text(data: np.ndarray) -> str:
    return "x\n" + "\n".join(f"{float(v)!r}" for v in data) + "\n"


def _config_json(config: dict) -> str:
    return json.dumps(config, indent=2, sort_keys=True) + "\n"


def _finish_run(seed: int, payloads: dict, out) -> int:
    manifest = RunManifest(artifact_version=__version__, master_seed=seed)
    run_dir = write_run(manifest, payloads, root=out)
    print(run_dir)
    return EXIT_OK


def cmd_fit(args) -> int:
    data = _read_data_csv(args.data)
    try:
        prior = PriorConfig(fixed_k=args.fixed_k, precision_a=args.precision)
        cfg = SamplerConfig(
            burn_in=args.burn_in, draws=args.draws, thin=args.thin, seed=args.seed
        )
        truth = density_spec(args.truth) if args.truth else None
    except ValueError as exc:
        raise InputError(str(exc)) from exc

    _progress(f"fit: n={len(data)}, burn_in={cfg.burn_in}, draws={cfg.draws}")
    draws = run_chain(data, prior, cfg)
    grid = canonical_grid(100)
    density = posterior_mean_density(draws, grid)
    beta0 = posterior_mean_beta0(draws)
    k_values = sorted(d.k for d in draws)
    k_mode = max(set(k_values), key=k_values.count)

    results = [
        ("beta0_mean", float(beta0)),
        ("k_mode", int(k_mode)),
        ("draws", len(draws)),
    ]
    if truth is not None:
        results.append(("mse_grid", mse_grid(density, truth.pdf)))

        def estimate(xs):
            acc = np.zeros_like(np.asarray(xs, dtype=float))
            for d in draws:
                acc += mixture_pdf(d.to_kmixture(), xs)
            return acc / len(draws)

        results.append(("hellinger", hellinger(estimate, truth.pdf)))
    results_csv = "quantity,value\n" + "".join(
        f"{name},{value!r}\n" for name, value in results
    )

    config = {
        "command": "fit",
        "data": str(args.data),
        "burn_in": cfg.burn_in,
        "draws": cfg.draws,
        "thin": cfg.thin,
        "fixed_k": prior.fixed_k,
        "precision": prior.precision_a,
        "truth": args.truth,
        "seed": args.seed,
    }
    payloads = {
        "config.json": _config_json(config),
        "data.csv": _data_csv_text(data),
        "draws.jsonl": draws_to_jsonl(draws),
        "density_grid.csv": density.csv_text(),
        "results.csv": results_csv,
    }
    return _finish_run(args.seed, payloads, args.out)


def cmd_table1(args) -> int:
    try:
        plan = ExperimentPlan(
            densities=tuple(args.densities),
            sizes=tuple(args.n),
            replications=args.R,
            methods=tuple(args.methods),
            master_seed=args.seed,
            burn_in=args.burn_in,
            draws=args.draws,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    _progress(
        f"table1: R={plan.replications}, n={list(plan.sizes)}, "
        f"densities={list(plan.densities)}, threads={args.threads}"
    )
    rows = run_mse_experiment(plan, threads=args.threads)
    config = {
        "command": "table1",
        "densities": list(plan.densities),
        "sizes": list(plan.sizes),
        "replications": plan.replications,
        "methods": list(plan.methods),
        "burn_in": plan.burn_in,
        "draws": plan.draws,
        "seed": plan.master_seed,
    }
    payloads = {
        "config.json": _config_json(config),
        "results.csv": results_to_csv(rows),
        "results.md": results_to_markdown(rows),
    }
    return _finish_run(plan.master_seed, payloads, args.out)


def _cell_histogram_name(row: dict) -> str:
    return (
        f"hist_alpha{row['alpha0']}_rho{row['rho']}_G{row['G']}"
        f"_{row['sidedness']}_{row['method']}.csv"
    )


def cmd_mtp(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {args.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{args.config}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise InputError(f"{args.config}: expected a JSON object")

    # flags override config-file values
    run_keys = {
        "R": args.R,
        "burn_in": args.burn_in,
        "draws": args.draws,
        "seed": args.seed,
    }
    defaults = {"R": 50, "burn_in": 2000, "draws": 1000, "seed": 0}
    resolved = {}
    for key, flag in run_keys.items():
        file_value = raw.pop(key, None)
        resolved[key] = flag if flag is not None else (
            file_value if file_value is not None else defaults[key]
        )
    try:
        scenarios = scenarios_from_config(raw)
    except (ValueError, TypeError) as exc:
        raise InputError(f"{args.config}: {exc}") from exc

    _progress(
        f"mtp: {len(scenarios)} scenario(s), R={resolved['R']}, "
        f"threads={args.threads}"
    )
    rows = run_mtp_experiment(
        scenarios,
        replications=int(resolved["R"]),
        master_seed=int(resolved["seed"]),
        burn_in=int(resolved["burn_in"]),
        draws=int(resolved["draws"]),
        threads=args.threads,
    )
    config = {
        "command": "mtp",
        "scenarios": raw,
        **{k: int(v) for k, v in resolved.items()},
    }
    payloads = {
        "config.json": _config_json(config),
        "results.csv": mtp_rows_to_csv(rows),
    }
    cells = {}
    for row in rows:
        cells.setdefault(_cell_histogram_name(row), []).append(row["estimate"])
    for name, estimates in cells.items():
        payloads[name] = estimates_histogram_csv(estimates)
    return _finish_run(int(resolved["seed"]), payloads, args.out)


def cmd_contraction(args) -> int:
    try:
        spec = density_spec(args.density)
        if args.k < 1 or args.reps < 1 or len(args.sizes) < 2:
            raise ValueError("need k >= 1, reps >= 1 and at least two sizes")
        sizes = sorted(int(n) for n in args.sizes)
        if any(n < 2 for n in sizes) or len(set(sizes)) != len(sizes):
            raise ValueError("sizes must be distinct integers >= 2")
    except ValueError as exc:
        raise InputError(str(exc)) from exc

    _progress(
        f"contraction: {spec.id}, k={args.k}, sizes={sizes}, reps={args.reps}"
    )
    errors = contraction_errors(
        spec,
        args.k,
        sizes,
        args.reps,
        master_seed=args.seed,
        burn_in=args.burn_in,
        draws=args.draws,
        threads=args.threads,
    )
    medians = np.median(errors, axis=0)
    slope = float(np.polyfit(np.log(sizes), np.log(medians), 1)[0])
    lo, hi = bootstrap_slope_ci(sizes, errors, seed=args.seed)

    errors_csv = ",".join(f"n{n}" for n in sizes) + "\n"
    errors_csv += "".join(
        ",".join(f"{float(v)!r}" for v in row) + "\n" for row in errors
    )
    results_csv = "n,median_hellinger\n" + "".join(
        f"{n},{float(m)!r}\n" for n, m in zip(sizes, medians)
    )
    summary = {"slope": slope, "ci_low": lo, "ci_high": hi}
    config = {
        "command": "contraction",
        "density": spec.id,
        "k": args.k,
        "sizes": sizes,
        "reps": args.reps,
        "burn_in": args.burn_in,
        "draws": args.draws,
        "seed": args.seed,
    }
    payloads = {
        "config.json": _config_json(config),
        "errors.csv": errors_csv,
        "results.csv": results_csv,
        "summary.json": _config_json(summary),
    }
    return _finish_run(args.seed, payloads, args.out)


def cmd_selftest(args) -> int:
    if args.list:
        for name in selftest.list_invariants():
            print(name)
        return EXIT_OK
    failures = selftest.run_selftest(report=print)
    if failures:
        print(f"{len(failures)} invariant(s) failed")
        return EXIT_SELFTEST
    print("all invariants hold")
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser, seed_default=0) -> None:
    parser.add_argument("--seed", type=int, default=seed_default, help="master seed")
    parser.add_argument(
        "--threads",
        type=int,
        default=os.cpu_count() or 1,
        help="worker processes (never changes output bytes)",
    )
    parser.add_argument("--out", default="runs", help="parent directory for runs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kmono",
        description="Mixture-based density estimation on (0,1) "
        "under a monotone-derivative shape constraint.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit the mixture posterior to a data file")
    fit.add_argument("data", help="CSV with one numeric column in (0,1)")
    fit.add_argument("--burn-in", type=int, default=2000)
    fit.add_argument("--draws", type=int, default=1000)
    fit.add_argument("--thin", type=int, default=1)
    fit.add_argument(
        "--fixed-k", type=int, default=None, help="pin the order k (default: adapt)"
    )
    fit.add_argument(
        "--precision", type=float, default=1.0, help="mixing precision a"
    )
    fit.add_argument(
        "--truth",
        choices=DENSITY_IDS,
        default=None,
        help="benchmark density for fit diagnostics",
    )
    _add_common(fit)
    fit.set_defaults(func=cmd_fit)

    table1 = sub.add_parser("table1", help="mean-MSE benchmark over methods")
    table1.add_argument("--R", type=int, default=100, help="replications per cell")
    table1.add_argument(
        "--n", type=int, nargs="+", default=[100, 200, 500], help="sample sizes"
    )
    table1.add_argument(
        "--densities", nargs="+", choices=DENSITY_IDS, default=list(DENSITY_IDS)
    )
    table1.add_argument(
        "--methods", nargs="+", choices=METHODS, default=list(METHODS)
    )
    table1.add_argument("--burn-in", type=int, default=2000)
    table1.add_argument("--draws", type=int, default=1000)
    _add_common(table1)
    table1.set_defaults(func=cmd_table1)

    mtp = sub.add_parser("mtp", help="null-proportion estimation experiment")
    mtp.add_argument("config", help="JSON scenario grid")
    mtp.add_argument("--R", type=int, default=None, help="replications per scenario")
    mtp.add_argument("--burn-in", type=int, default=None)
    mtp.add_argument("--draws", type=int, default=None)
    _add_common(mtp, seed_default=None)
    mtp.set_defaults(func=cmd_mtp)

    contraction = sub.add_parser(
        "contraction", help="posterior error versus sample size"
    )
    contraction.add_argument("--density", choices=DENSITY_IDS, default="g1")
    contraction.add_argument("--k", type=int, default=2)
    contraction.add_argument(
        "--sizes", type=int, nargs="+", default=[100, 200, 400, 800]
    )
    contraction.add_argument("--reps", type=int, default=20)
    contraction.add_argument("--burn-in", type=int, default=2000)
    contraction.add_argument("--draws", type=int, default=1000)
    _add_common(contraction)
    contraction.set_defaults(func=cmd_contraction)

    check = sub.add_parser("selftest", help="run fast named invariant checks")
    check.add_argument(
        "--list", action="store_true", help="print invariant names without running"
    )
    check.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"kmono: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:
        print(f"kmono: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``orars <subcommand> ...``.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime
failure (divergence, failed strict check).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import secrets
import sys
from pathlib import Path

import numpy as np

from . import simulation as sim
from .core import derive_seed, normalize_features
from .estimators import SORARSRegressor, load_estimator, save_estimator
from .exceptions import (
    ContractViolationError,
    DatasetParseError,
    GridSearchFailedError,
    InvalidConfigError,
    InvalidDataError,
    OutOfDomainError,
    TrainingDivergedError,
)
from .harness import FoldContext, compare, fit_grnn_fold, fit_orars_fold
from .io import DatasetFileSpec, env_overrides, load_config, load_csv, parse_flat, synth_dataset

log = logging.getLogger("orars")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _setup_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("orars:%(levelname)s:%(name)s: %(message)s"))
    root = logging.getLogger("orars")
    root.handlers[:] = [handler]
    root.setLevel(logging.INFO if verbose else logging.WARNING)
    root.propagate = False


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(type(obj).__name__)


def _resolve_config(kind: str, args, flag_values: dict):
    """Defaults < --config file < ORARS_* env < flags; draws and reports a seed if none is set."""
    file_values = parse_flat(Path(args.config).read_text()) if getattr(args, "config", None) else {}
    flags = {k: v for k, v in flag_values.items() if v is not None}
    if not any("seed" in layer for layer in (file_values, env_overrides(kind), flags)):
        flags["seed"] = secrets.randbits(31)
        print(f"orars: no --seed given, using seed {flags['seed']}", file=sys.stderr)
    return load_config(None, kind, overrides={**file_values, **env_overrides(kind), **flags}, environ={})


def _float_row(d: dict) -> dict:
    return {k: (repr(v) if isinstance(v, float) else v) for k, v in d.items()}


def cmd_simulate(args) -> int:
    config = _resolve_config("simulation", args, {
        "N": args.N, "M": args.M, "C": args.C, "error_dist": args.dist,
        "repeats": args.repeats, "seed": args.seed,
    })
    out = _out_dir(args.out)
    results = sim.simulate(config)
    with open(out / "simulation.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["repeat", "mae_reg", "mae_sorars", "mae_gain", "xi_empirical"])
        for i, r in enumerate(results):
            w.writerow([i] + [repr(v) for v in r.to_row().values()])
    summary = sim.summarize(results)
    side = {"mae_reg_analytic": sim.analytic_mae_reg(config.M) if config.error_dist == "uniform" else None}
    try:
        side["xi_analytic"] = sim.analytic_xi(config.N, config.M) if config.error_dist == "uniform" else None
        side["mae_sorars_xi_substituted"] = (sim.analytic_mae_sorars(config.N, config.M)
                                             if config.error_dist == "uniform" else None)
        side["mae_sorars_printed"] = (sim.printed_mae_sorars(config.N, config.M)
                                      if config.error_dist == "uniform" else None)
    except OutOfDomainError:
        side.update(xi_analytic=None, mae_sorars_xi_substituted=None, mae_sorars_printed=None)
    _write_json(out / "summary.json", {"config": sim.config_dict(config), "empirical": summary, "analytic": side})
    _write_json(out / "config.json", {"command": "simulate", **sim.config_dict(config)})
    print(f"mean MAE_reg    {summary['mean_mae_reg']:.6f}   analytic M/2 {_opt(side['mae_reg_analytic'])}")
    print(f"mean MAE_sorars {summary['mean_mae_sorars']:.6f}   xi*N/2 {_opt(side['mae_sorars_xi_substituted'])}"
          f"   M/3-M^2/N {_opt(side['mae_sorars_printed'])}")
    print(f"mean MAE_gain   {summary['mean_mae_gain']:.6f}   (gain > 0 in {summary['fraction_gain_positive']:.0%} of repeats)")
    print(f"mean xi         {summary['mean_xi_empirical']:.6f}   analytic {_opt(side['xi_analytic'])}")
    return EXIT_OK


def _opt(v) -> str:
    return "n/a" if v is None else f"{v:.6f}"


def cmd_grid(args) -> int:
    config = _resolve_config("simulation", args, {
        "N": args.N, "error_dist": args.dist, "repeats": args.repeats, "seed": args.seed,
    })
    grid = sim.gain_grid(args.C_values, args.M_values, config.error_dist, config.repeats, config.seed, config.N)
    out = _out_dir(args.out)
    grid.to_csv(out / "gain_grid.csv")
    _write_json(out / "gain_grid.json", grid.sidecar())
    _write_json(out / "config.json", {"command": "grid", **grid.sidecar()})
    print((out / "gain_grid.csv").read_text(), end="")
    return EXIT_OK


def cmd_verify_analytic(args) -> int:
    seed = args.seed
    if seed is None:
        seed = secrets.randbits(31)
        print(f"orars: no --seed given, using seed {seed}", file=sys.stderr)
    rows, failed = [], False
    for i, M in enumerate(args.M):
        row = {"N": args.N, "M": M}
        row["xi_monte_carlo"] = sim.monte_carlo_xi(args.N, M, "uniform", args.trials, seed=seed + i)
        try:
            row["xi_analytic"] = sim.analytic_xi(args.N, M)
        except OutOfDomainError:
            row.update(xi_analytic=None, abs_diff=None, status="out-of-domain")
        else:
            row["abs_diff"] = abs(row["xi_analytic"] - row["xi_monte_carlo"])
            row["status"] = "pass" if row["abs_diff"] <= args.tolerance else "FAIL"
            failed |= row["status"] == "FAIL"
        report = sim.analytic_report(args.N, M, C=args.C, repeats=args.repeats, seed=seed + 1000 + i)
        for key in ("mae_reg_analytic", "mae_reg_empirical", "mae_sorars_xi_substituted",
                    "mae_sorars_printed", "mae_sorars_empirical", "xi_empirical"):
            row[key] = report[key]
        rows.append(row)
    out = _out_dir(args.out)
    cols = ["N", "M", "xi_analytic", "xi_monte_carlo", "abs_diff", "status", "xi_empirical",
            "mae_reg_analytic", "mae_reg_empirical", "mae_sorars_xi_substituted",
            "mae_sorars_printed", "mae_sorars_empirical"]
    with open(out / "verify.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, cols, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow(_float_row({k: ("" if row[k] is None else row[k]) for k in cols}))
    _write_json(out / "config.json", {"command": "verify-analytic", "N": args.N, "M": args.M,
                                      "trials": args.trials, "seed": seed, "tolerance": args.tolerance,
                                      "C": args.C, "repeats": args.repeats})
    print(f"{'N':>6} {'M':>6} {'xi':>10} {'xi_MC':>10} {'|diff|':>10} {'status':>14} "
          f"{'MAEs xiN/2':>11} {'MAEs print':>11} {'MAEs emp':>10}")
    for r in rows:
        print(f"{r['N']:>6g} {r['M']:>6g} {_cell(r['xi_analytic'])} {_cell(r['xi_monte_carlo'])} "
              f"{_cell(r['abs_diff'])} {r['status']:>14} {_cell(r['mae_sorars_xi_substituted'], 11)} "
              f"{_cell(r['mae_sorars_printed'], 11)} {_cell(r['mae_sorars_empirical'])}")
    return EXIT_RUNTIME if failed else EXIT_OK


def _cell(v, width=10) -> str:
    return f"{'-':>{width}}" if v is None else f"{v:>{width}.6f}"


def _dataset_from_args(args, seed):
    if args.data:
        spec = DatasetFileSpec(args.data, args.delimiter, args.target_column,
                               False if args.no_header else None)
        return load_csv(spec)
    if args.synth:
        return synth_dataset(args.synth, args.n, args.dims, args.noise, seed if args.synth_seed is None
                             else args.synth_seed).dataset
    raise UsageError("give --data FILE or --synth KIND")


def _experiment_flags(args) -> dict:
    return {
        "k": getattr(args, "k", None), "seed": args.seed, "method": getattr(args, "method", None),
        "grnn_grid": args.grnn_grid, "orars_grid": args.orars_grid, "jobs": args.jobs,
    }


def cmd_compare(args) -> int:
    spec = _resolve_config("experiment", args, _experiment_flags(args))
    dataset = _dataset_from_args(args, spec.seed)
    report = compare(dataset, spec)
    out = _out_dir(args.out)
    (out / "comparison.txt").write_text(report.to_text())
    (out / "comparison.csv").write_text(report.summary_csv())
    (out / "folds.csv").write_text(report.folds_csv())
    (out / "comparison.json").write_text(report.to_json() + "\n")
    _write_json(out / "config.json", {"command": "compare", "data": args.data, "synth": args.synth,
                                      **spec.to_dict()})
    print(report.to_text(), end="")
    if args.strict and report.any_failed:
        log.error("strict mode: at least one fold failed")
        return EXIT_RUNTIME
    return EXIT_OK


def _fit_full(dataset, spec):
    """Fit one model on all rows: a seeded dev split, train-only normalization."""
    perm = np.random.default_rng(derive_seed(spec.seed, 99)).permutation(dataset.size)
    n_dev = min(max(1, int(np.floor(spec.dev_fraction * dataset.size + 0.5))), dataset.size - 2)
    dev, train = np.sort(perm[:n_dev]), np.sort(perm[n_dev:])
    normed, scaler = normalize_features(dataset, train)
    ctx = FoldContext(0, normed.X, dataset.y, train, dev, np.empty(0, dtype=np.int64))
    if spec.method == "orars":
        est, summary = fit_orars_fold(ctx, spec, dataset.size)
    else:
        est, summary = fit_grnn_fold(ctx, spec)
        if spec.method == "sorars":
            est = SORARSRegressor(est, prefit=True, legacy_max_index=spec.legacy_max_index)
            est.fit(ctx.X[train], ctx.y[train])
    return est, scaler, summary


def _write_predictions(path: Path, preds) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "prediction"])
        for i, p in enumerate(preds):
            w.writerow([i, repr(float(p))])


def cmd_train(args) -> int:
    flags = _experiment_flags(args)
    spec = _resolve_config("experiment", args, flags)
    if spec.method == "all":
        raise InvalidConfigError("train needs a single --method (grnn, sorars or orars)")
    dataset = _dataset_from_args(args, spec.seed)
    est, scaler, summary = _fit_full(dataset, spec)
    out = _out_dir(args.out)
    checkpoint = Path(args.checkpoint) if args.checkpoint else out / "model.npz"
    save_estimator(checkpoint, est, scaler, {"seed": spec.seed, "fit": summary, "dataset": dataset.name})
    _write_predictions(out / "train_predictions.csv", est.predict(scaler.transform(dataset.X)))
    _write_json(out / "config.json", {"command": "train", "data": args.data, "synth": args.synth,
                                      "checkpoint": str(checkpoint), **spec.to_dict()})
    print(f"saved {spec.method} checkpoint to {checkpoint}")
    return EXIT_OK


def cmd_predict(args) -> int:
    est, scaler, meta = load_estimator(args.checkpoint)
    spec = DatasetFileSpec(args.data, args.delimiter, args.target_column, False if args.no_header else None)
    dataset = load_csv(spec)
    if dataset.feature_dim != scaler.n_features_in_:
        raise ContractViolationError(
            f"{args.data} has {dataset.feature_dim} features but the checkpoint expects {scaler.n_features_in_}"
        )
    out = _out_dir(args.out)
    _write_predictions(out / "predictions.csv", est.predict(scaler.transform(dataset.X)))
    _write_json(out / "config.json", {"command": "predict", "data": args.data,
                                      "checkpoint": str(args.checkpoint), "kind": meta.get("kind")})
    return EXIT_OK


def _add_data_flags(p, with_synth=True):
    p.add_argument("--data", help="delimited data file (target column last by default)")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--target-column", type=int, default=-1)
    p.add_argument("--no-header", action="store_true", help="treat the first row as data")
    if with_synth:
        p.add_argument("--synth", choices=("linear", "monotone_noisy", "constant"))
        p.add_argument("--n", type=int, default=300)
        p.add_argument("--dims", type=int, default=1)
        p.add_argument("--noise", type=float, default=0.05)
        p.add_argument("--synth-seed", type=int, default=None, help="defaults to --seed")


def _add_experiment_flags(p):
    p.add_argument("--config", help="flat key = value file")
    p.add_argument("--seed", type=int)
    p.add_argument("--grnn-grid", choices=("full", "fixed"))
    p.add_argument("--orars-grid", choices=("auto", "full", "restricted", "fixed"))
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="orars", description="ORARS, sORARS and GRNN experiments and simulations")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="Monte-Carlo MAE gain for one (N, M, C) setting")
    p.add_argument("--N", type=float)
    p.add_argument("--M", type=float, required=True)
    p.add_argument("--C", type=int, required=True)
    p.add_argument("--dist", choices=sim.DISTRIBUTIONS)
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="flat key = value file with SimConfig fields")
    p.add_argument("--out", required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("grid", help="MAE gain over a grid of sample counts C and error scales M")
    p.add_argument("--C-values", type=int, nargs="+", default=list(sim.DEFAULT_C_AXIS))
    p.add_argument("--M-values", type=float, nargs="+", default=list(sim.DEFAULT_M_AXIS))
    p.add_argument("--N", type=float)
    p.add_argument("--dist", choices=sim.DISTRIBUTIONS)
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("verify-analytic", help="closed forms versus Monte-Carlo estimates")
    p.add_argument("--N", type=float, default=100.0)
    p.add_argument("--M", type=float, nargs="+", default=[10.0, 25.0, 50.0])
    p.add_argument("--trials", type=int, default=1_000_000)
    p.add_argument("--tolerance", type=float, default=0.005)
    p.add_argument("--C", type=int, default=10_000, help="points per rescoring simulation")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_verify_analytic)

    p = sub.add_parser("compare", help="cross-validated GRNN vs sORARS vs ORARS")
    _add_data_flags(p)
    p.add_argument("--k", type=int)
    p.add_argument("--method", choices=("grnn", "sorars", "orars", "all"))
    p.add_argument("--strict", action="store_true", help="exit 2 if any fold fails")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("train", help="fit one model on a whole dataset and save a checkpoint")
    _add_data_flags(p)
    p.add_argument("--method", choices=("grnn", "sorars", "orars"), required=True)
    p.add_argument("--checkpoint", help="checkpoint path (default OUT/model.npz)")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict a data file with a saved checkpoint")
    _add_data_flags(p, with_synth=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"orars: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    _setup_logging(getattr(args, "verbose", False))
    if args.command == "predict" and not args.data:
        print("orars: error: predict needs --data", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except (UsageError, InvalidConfigError, InvalidDataError, DatasetParseError,
            ContractViolationError, OutOfDomainError, FileNotFoundError) as exc:
        print(f"orars: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (TrainingDivergedError, GridSearchFailedError) as exc:
        print(f"orars: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

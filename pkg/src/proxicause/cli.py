"""Command-line interface.

Subcommands: ``check-graph`` (run the graphical criteria on a DAG file),
``oracle`` (Monte Carlo interventional means for a built-in example),
``fit`` (estimate a causal curve from user CSVs guarded by the graph
checks), ``run`` (the replication harness, writing CSV reports and band
figures), and ``list-examples``.

Exit codes: 0 success, 2 usage or validation failure, 3 degraded experiment
(more than 10% of runs failed).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from .data import LabeledDataset, Provenance
from .estimators import EstimationError, StageConfig, fit_naive, fit_rr, fit_tsr
from .examples import EXAMPLE_NAMES, builtin_example
from .experiments import (
    ESTIMATOR_NAMES,
    ExperimentConfig,
    ExperimentError,
    config_from_dict,
    emit_report,
    format_summary,
    load_experiment_config,
    run_experiment,
)
from .graph import (
    GraphError,
    TsrCase,
    check_gact3,
    check_pmar,
    check_recoverability,
    check_selection_backdoor,
    decompose_proxies,
    load_dag,
    tsr_case,
)
from .linear import FeatureMap, SingularDesignError
from .scm import SampleMode, SimulationError, oracle_do_curve

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DEGRADED = 3


class CliError(Exception):
    """Validation failure surfaced to the user with exit code 2."""


def _default_seed() -> int:
    raw = os.environ.get("PROXICAUSE_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"PROXICAUSE_SEED must be an integer, got {raw!r}") from None


def _parse_float_list(raw: list[str]) -> list[float]:
    values: list[float] = []
    for chunk in raw:
        for part in chunk.split(","):
            part = part.strip()
            if part:
                values.append(float(part))
    if not values:
        raise CliError("no evaluation points given")
    return values


def _parse_grid(spec: str) -> np.ndarray:
    try:
        lo, hi, count = spec.split(":")
        lo_f, hi_f, count_i = float(lo), float(hi), int(count)
    except ValueError:
        raise CliError(f"grid must look like lo:hi:count, got {spec!r}") from None
    if count_i < 2 or hi_f <= lo_f:
        raise CliError(f"grid must have count >= 2 and hi > lo, got {spec!r}")
    return np.linspace(lo_f, hi_f, count_i)


# ---------------------------------------------------------------------------
# check-graph


def cmd_check_graph(args: argparse.Namespace) -> int:
    try:
        dag = load_dag(args.path)
    except (GraphError, OSError) as exc:
        raise CliError(f"cannot load graph: {exc}") from exc
    try:
        if args.zt is not None:
            zt = tuple(_split_names(args.zt))
        else:
            zt = tuple(n for n in dag.z if n in dag.t_scope)
        reports = [
            check_pmar(dag),
            check_recoverability(dag),
            check_selection_backdoor(dag),
            check_gact3(dag, zt),
        ]
    except GraphError as exc:
        raise CliError(str(exc)) from exc
    for report in reports:
        status = "HOLDS" if report.holds else "FAILS"
        print(f"{report.criterion:<20} {status}")
        for label, witness in report.failures:
            print(f"    {label}: {witness}")
    recoverable = reports[1].holds
    return EXIT_OK if recoverable else EXIT_USAGE


def _split_names(raw: list[str]) -> list[str]:
    names = []
    for chunk in raw:
        names.extend(part.strip() for part in chunk.split(",") if part.strip())
    return names


# ---------------------------------------------------------------------------
# oracle


def cmd_oracle(args: argparse.Namespace) -> int:
    ex = _get_example(args.example)
    if args.nmc < 1:
        raise CliError("--nmc must be at least 1")
    if args.x and args.grid:
        raise CliError("give either --x or --grid, not both")
    if args.x:
        points = np.asarray(_parse_float_list(args.x))
    elif args.grid:
        points = _parse_grid(args.grid)
    else:
        points = ex.default_grid(9)
    seed = args.seed if args.seed is not None else _default_seed()
    curve = oracle_do_curve(ex.scm, points, args.nmc, seed=seed)
    analytic = ex.truths.causal_effect
    writer = csv.writer(sys.stdout)
    header = ["x", "do_mean", "mc_se"] + (["analytic"] if analytic is not None else [])
    writer.writerow(header)
    for i in range(points.shape[0]):
        row = [_g(curve.x[i]), _g(curve.mean[i]), _g(curve.se[i])]
        if analytic is not None:
            row.append(_g(float(analytic(curve.x[i]))))
        writer.writerow(row)
    return EXIT_OK


def _g(value: float) -> str:
    return format(float(value), ".6g")


def _get_example(name: str):
    try:
        return builtin_example(name)
    except KeyError as exc:
        raise CliError(str(exc.args[0])) from exc


# ---------------------------------------------------------------------------
# fit


def _read_csv_columns(path: str) -> dict[str, np.ndarray]:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise CliError(f"{path} is empty") from None
        rows = [row for row in reader if row]
    if not rows:
        raise CliError(f"{path} has a header but no data rows")
    try:
        data = np.asarray(rows, dtype=float)
    except ValueError as exc:
        raise CliError(f"{path} contains non-numeric values: {exc}") from exc
    return {name.strip(): data[:, i] for i, name in enumerate(header)}


def _build_dataset(
    columns: dict[str, np.ndarray],
    x_names: tuple[str, ...],
    zplus_names: tuple[str, ...],
    zminus_names: tuple[str, ...],
    y_name: str | None,
    path: str,
) -> LabeledDataset:
    needed = list(x_names) + list(zplus_names) + list(zminus_names)
    if y_name is not None:
        needed.append(y_name)
    missing = [n for n in needed if n not in columns]
    if missing:
        raise CliError(f"{path} is missing required columns: {', '.join(missing)}")

    def block(names: tuple[str, ...]) -> np.ndarray:
        n_rows = len(next(iter(columns.values())))
        if not names:
            return np.empty((n_rows, 0))
        return np.column_stack([columns[n] for n in names])

    return LabeledDataset(
        x=block(x_names),
        zplus=block(zplus_names),
        zminus=block(zminus_names),
        y=columns[y_name] if y_name is not None else None,
        provenance=Provenance.SELECTED if y_name is not None else Provenance.EXTERNAL,
        x_names=x_names,
        zplus_names=zplus_names,
        zminus_names=zminus_names,
    )


def _structural_case(zplus: tuple[str, ...], zminus: tuple[str, ...]) -> TsrCase:
    if not zplus and not zminus:
        return TsrCase.NO_PROXIES
    if not zminus:
        return TsrCase.ZPLUS_ONLY
    if not zplus:
        return TsrCase.ZMINUS_ONLY_UNCONFOUNDED
    return TsrCase.FULL_LINEAR_SHORTCUT


def cmd_fit(args: argparse.Namespace) -> int:
    try:
        dag = load_dag(args.dag)
        dag.require_roles()
        dag.require_selection()
        zplus_set, zminus_set = decompose_proxies(dag)
    except (GraphError, OSError) as exc:
        raise CliError(str(exc)) from exc
    if len(dag.x) != 1:
        raise CliError("fit supports a single treatment column")
    zplus = tuple(n for n in dag.z if n in zplus_set)
    zminus = tuple(n for n in dag.z if n in zminus_set)

    report = check_recoverability(dag)
    if not report.holds:
        print(report.summary(), file=sys.stderr)
        if not args.force:
            print("refusing to fit; pass --force to override", file=sys.stderr)
            return EXIT_USAGE
        print("continuing under --force", file=sys.stderr)

    selected = _build_dataset(
        _read_csv_columns(args.selected), dag.x, zplus, zminus, dag.y, args.selected
    )
    external = _build_dataset(
        _read_csv_columns(args.external), dag.x, zplus, zminus, None, args.external
    )

    degree = args.degree
    stage_one = FeatureMap.per_column([degree] * len(dag.x) + [1] * (len(zplus) + len(zminus)))
    cfg = StageConfig(
        stage_one_map=stage_one,
        stage_two_map=FeatureMap.per_column(
            [degree] * len(dag.x) if args.estimator == "rr"
            else [1] * (len(dag.x) + len(zplus))
        ),
        ridge_stage_one=args.ridge,
    )
    seed = args.seed if args.seed is not None else _default_seed()
    try:
        if args.estimator == "naive":
            curve = fit_naive(selected, FeatureMap.per_column([degree] * len(dag.x)))
        elif args.estimator == "rr":
            curve = fit_rr(selected, external, cfg, seed=seed)
        else:
            if report.holds:
                case = tsr_case(dag)
            else:
                case = _structural_case(zplus, zminus)
            curve = fit_tsr(selected, external, case, cfg, seed=seed)
            print(f"two-step case: {case.value}", file=sys.stderr)
    except (EstimationError, SingularDesignError, ValueError) as exc:
        raise CliError(str(exc)) from exc

    if args.x:
        points = np.asarray(_parse_float_list(args.x))
    elif args.grid:
        points = _parse_grid(args.grid)
    else:
        xcol = external.x[:, 0]
        points = np.linspace(xcol.min(), xcol.max(), 101)
    values = np.asarray(curve(points.reshape(-1, len(dag.x))))
    writer = csv.writer(sys.stdout)
    writer.writerow(["x", "estimate"])
    for i in range(points.shape[0]):
        writer.writerow([_g(points[i]), _g(values[i])])
    return EXIT_OK


# ---------------------------------------------------------------------------
# run


def _run_configs(args: argparse.Namespace) -> list[ExperimentConfig]:
    if args.config is not None:
        try:
            base = load_experiment_config(args.config)
        except (ValueError, OSError) as exc:
            raise CliError(str(exc)) from exc
    else:
        base = None
    example = args.example or (base.example if base else None)
    if example is None:
        raise CliError("an example must be given via --example or a config file")
    _get_example(example)

    n_values = tuple(args.n) if args.n else (base.n_values if base else (500, 1000, 5000))
    runs = args.runs if args.runs is not None else (base.runs if base else 100)
    estimators = tuple(_split_names(args.estimators)) if args.estimators else (
        base.estimators if base else ESTIMATOR_NAMES
    )
    seed = args.seed if args.seed is not None else (base.master_seed if base else
                                                    _default_seed())
    workers = args.workers if args.workers is not None else (base.workers if base else 1)
    grid_points = args.grid_points if args.grid_points is not None else (
        base.grid_points if base else 101
    )
    x_range = None
    if args.x_range:
        lo, hi = (float(v) for v in args.x_range.split(":"))
        x_range = (lo, hi)
    elif base is not None:
        x_range = base.x_range

    mode_arg = args.mode or (base.mode.value if base else "disjoint")
    modes = [SampleMode.SUBSET, SampleMode.DISJOINT] if mode_arg == "both" else \
        [SampleMode(mode_arg)]
    try:
        return [
            ExperimentConfig(
                example=example, n_values=n_values, runs=runs, mode=mode,
                estimators=estimators, master_seed=seed, grid_points=grid_points,
                x_range=x_range, workers=workers,
            )
            for mode in modes
        ]
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def cmd_run(args: argparse.Namespace) -> int:
    configs = _run_configs(args)
    reports = []
    degraded = False
    for cfg in configs:
        try:
            reports.append(run_experiment(cfg))
        except ExperimentError as exc:
            degraded = True
            print(f"warning: {exc}", file=sys.stderr)
            if exc.report is not None:
                reports.append(exc.report)
    written = emit_report(reports, args.out, figures=not args.no_figures)
    print(format_summary(reports))
    print(f"\nwrote {len(written)} files to {args.out}")
    return EXIT_DEGRADED if degraded else EXIT_OK


def cmd_list_examples(_: argparse.Namespace) -> int:
    for name in EXAMPLE_NAMES:
        print(name)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proxicause",
        description="Causal effect estimation from selection-biased data "
                    "with proxy variables and external data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-graph", help="run the graphical criteria on a DAG file")
    p.add_argument("path", help="JSON graph description")
    p.add_argument("--zt", action="append", default=None,
                   help="proxy subset for the adjustment-pair criterion "
                        "(default: Z restricted to the external scope)")
    p.set_defaults(func=cmd_check_graph)

    p = sub.add_parser("oracle", help="Monte Carlo interventional means for an example")
    p.add_argument("example")
    p.add_argument("--x", action="append", default=None, help="evaluation points (comma list)")
    p.add_argument("--grid", default=None, help="lo:hi:count evaluation grid")
    p.add_argument("--nmc", type=int, default=100_000, help="Monte Carlo draws per point")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("fit", help="fit a causal curve from selected/external CSVs")
    p.add_argument("--selected", required=True, help="CSV with X, Z and Y columns")
    p.add_argument("--external", required=True, help="CSV with X and Z columns")
    p.add_argument("--dag", required=True, help="JSON graph binding column roles")
    p.add_argument("--estimator", choices=("tsr", "rr", "naive"), default="tsr")
    p.add_argument("--degree", type=int, default=1, help="treatment feature degree")
    p.add_argument("--ridge", action="store_true", help="penalized first step")
    p.add_argument("--x", action="append", default=None)
    p.add_argument("--grid", default=None)
    p.add_argument("--force", action="store_true",
                   help="fit even when the recoverability criterion fails")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("run", help="run the replication harness")
    p.add_argument("config", nargs="?", default=None, help="JSON experiment config")
    p.add_argument("--example", default=None)
    p.add_argument("--n", action="append", type=int, default=None)
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--mode", choices=("subset", "disjoint", "both"), default=None)
    p.add_argument("--estimators", action="append", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="proxicause_out")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--grid-points", type=int, default=None)
    p.add_argument("--x-range", default=None, help="lo:hi band grid range")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("list-examples", help="list the built-in examples")
    p.set_defaults(func=cmd_list_examples)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SimulationError, ExperimentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGRADED


if __name__ == "__main__":
    sys.exit(main())

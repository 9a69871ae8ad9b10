"""Replication harness: repeated paired-sample runs, MSE tables, and bands.

One experiment fixes a built-in example, a dataset mode, and a list of
estimators, then repeats ``runs`` times: draw a training pair and a test
pair with derived seeds, fit every estimator on the training pair, and score
each fitted curve against the example's interventional truth on the test-S
and test-D treatment values.  Aggregates are the per-cell MSE mean/sd plus,
per estimator and sample size, the pointwise central 95% band of the fitted
curves over an evaluation grid.

Truth is the analytic curve when the example has one, otherwise a cached
Monte Carlo oracle curve (10^6 draws per point on a 201-point grid, linearly
interpolated).  Failed fits are recorded and excluded from aggregates; an
experiment where any cell loses more than 10% of its runs raises
:class:`ExperimentError` with the partial report attached.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .data import LabeledDataset
from .estimators import (
    CausalCurve,
    DegenerateSampleError,
    EstimationError,
    StageConfig,
    evaluate_mse,
    fit_naive,
    fit_rr,
    fit_tsr,
)
from .examples import BuiltinExample, builtin_example
from .graph import TsrCase
from .linear import DegenerateFeatureError, SingularDesignError
from .rng import SeedLike, child_seed
from .scm import SampleMode, SimulationError, make_paired, oracle_do_curve

ESTIMATOR_NAMES = ("naive", "rr", "rr-ridge", "tsr", "tsr-ridge")

_TRAIN_STREAM = 0
_TEST_STREAM = 1
_CV_STREAM = 2

ORACLE_TRUTH_SEED = 202406
ORACLE_TRUTH_POINTS = 201
ORACLE_TRUTH_DRAWS = 1_000_000
ORACLE_TRUTH_SPAN = 6.5  # standard deviations around the treatment mean

MAX_FAILURE_FRACTION = 0.1

_FIT_FAILURES = (
    EstimationError,
    DegenerateSampleError,
    SingularDesignError,
    DegenerateFeatureError,
    SimulationError,
)


class ExperimentError(RuntimeError):
    def __init__(self, message: str, report: "ExperimentReport | None" = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class ExperimentConfig:
    example: str
    n_values: tuple[int, ...] = (500, 1000, 5000)
    runs: int = 100
    mode: SampleMode = SampleMode.DISJOINT
    estimators: tuple[str, ...] = ESTIMATOR_NAMES
    master_seed: int = 0
    grid_points: int = 101
    x_range: tuple[float, float] | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if any(n < 10 for n in self.n_values) or not self.n_values:
            raise ValueError("sample sizes must be >= 10")
        if self.grid_points < 2:
            raise ValueError("the evaluation grid needs at least 2 points")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        unknown = set(self.estimators) - set(ESTIMATOR_NAMES)
        if unknown or not self.estimators:
            raise ValueError(
                f"unknown estimators {sorted(unknown)}; choose from {ESTIMATOR_NAMES}"
            )


@dataclass(frozen=True)
class BandReport:
    """Pointwise central 95% band of the fitted curves over the grid."""

    x: np.ndarray
    lower: np.ndarray
    mean: np.ndarray
    upper: np.ndarray
    truth: np.ndarray


@dataclass(frozen=True)
class CellResult:
    estimator: str
    n: int
    mode: SampleMode
    mse_s_mean: float
    mse_s_sd: float
    mse_d_mean: float
    mse_d_sd: float
    runs_total: int
    failures: int
    per_run_mse_s: tuple[float, ...] = field(repr=False, default=())
    per_run_mse_d: tuple[float, ...] = field(repr=False, default=())


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    cells: tuple[CellResult, ...]
    bands: Mapping[tuple[str, int], BandReport]

    @property
    def example(self) -> str:
        return self.config.example

    @property
    def mode(self) -> SampleMode:
        return self.config.mode

    def cell(self, estimator: str, n: int) -> CellResult:
        for c in self.cells:
            if c.estimator == estimator and c.n == n:
                return c
        raise KeyError(f"no cell for ({estimator}, {n})")

    def band(self, estimator: str, n: int) -> BandReport:
        return self.bands[(estimator, n)]

    @property
    def degraded_cells(self) -> tuple[CellResult, ...]:
        return tuple(
            c for c in self.cells if c.failures > MAX_FAILURE_FRACTION * c.runs_total
        )


def make_stage_config(
    ex: BuiltinExample, estimator: str, case: TsrCase | None = None
) -> StageConfig:
    """Recommended stage configuration for one named estimator on one example."""
    ridge = estimator.endswith("-ridge")
    if estimator.startswith("rr"):
        stage_two = ex.rr_stage_two_map
        ridge_two = False
    else:
        stage_two = ex.tsr_stage_two_map
        # A second-step penalty only matters when a second regression exists,
        # i.e. in the cases with descendant proxies.
        case = case or ex.case
        ridge_two = ridge and case in (
            TsrCase.ZMINUS_ONLY_UNCONFOUNDED,
            TsrCase.FULL_LINEAR_SHORTCUT,
            TsrCase.FULL_INTEGRAL,
        )
    return StageConfig(
        stage_one_map=ex.stage_one_map,
        stage_two_map=stage_two,
        ridge_stage_one=ridge,
        ridge_stage_two=ridge_two,
    )


def fit_named_estimator(
    name: str,
    ex: BuiltinExample,
    selected: LabeledDataset,
    external: LabeledDataset,
    seed: SeedLike = 0,
) -> CausalCurve:
    if name == "naive":
        return fit_naive(selected, ex.naive_map)
    cfg = make_stage_config(ex, name)
    if name.startswith("rr"):
        return fit_rr(selected, external, cfg, seed=seed)
    return fit_tsr(selected, external, ex.case, cfg, seed=seed)


def truth_function(
    ex: BuiltinExample, seed: SeedLike = ORACLE_TRUTH_SEED
) -> Callable[[np.ndarray], np.ndarray]:
    """Analytic interventional mean, or the cached Monte Carlo oracle curve."""
    if ex.truths.causal_effect is not None:
        return ex.truths.causal_effect
    lo = ex.x_mean - ORACLE_TRUTH_SPAN * ex.x_sd
    hi = ex.x_mean + ORACLE_TRUTH_SPAN * ex.x_sd
    grid = np.linspace(lo, hi, ORACLE_TRUTH_POINTS)
    curve = oracle_do_curve(ex.scm, grid, ORACLE_TRUTH_DRAWS, seed=seed)
    return curve.interpolator()


_TRUTH_CACHE: dict[str, Callable[[np.ndarray], np.ndarray]] = {}


def _cached_truth(ex: BuiltinExample) -> Callable[[np.ndarray], np.ndarray]:
    if ex.name not in _TRUTH_CACHE:
        _TRUTH_CACHE[ex.name] = truth_function(ex)
    return _TRUTH_CACHE[ex.name]


def compute_band(
    x_grid: np.ndarray, curves: np.ndarray, truth_values: np.ndarray
) -> BandReport:
    """Empirical 2.5%/97.5% quantiles and mean of per-run curves, pointwise."""
    curves = np.asarray(curves, dtype=float)
    if curves.ndim != 2 or curves.shape[0] < 1:
        raise ValueError("curves must be a (runs, grid) matrix with at least one run")
    lower = np.quantile(curves, 0.025, axis=0)
    upper = np.quantile(curves, 0.975, axis=0)
    if np.any(lower > upper):
        raise AssertionError("band quantiles crossed")
    return BandReport(
        x=np.asarray(x_grid, dtype=float),
        lower=lower,
        mean=curves.mean(axis=0),
        upper=upper,
        truth=np.asarray(truth_values, dtype=float),
    )


def _run_once(
    ex: BuiltinExample,
    cfg: ExperimentConfig,
    truth: Callable[[np.ndarray], np.ndarray],
    grid: np.ndarray,
    n: int,
    run: int,
) -> dict[str, tuple[float, float, np.ndarray] | str]:
    base = (cfg.master_seed, n, run)
    try:
        train = make_paired(ex.scm, ex.selection, n, cfg.mode,
                            child_seed(base, _TRAIN_STREAM))
        test = make_paired(ex.scm, ex.selection, n, cfg.mode,
                           child_seed(base, _TEST_STREAM))
    except SimulationError as exc:
        return {name: f"SimulationError: {exc}" for name in cfg.estimators}
    out: dict[str, tuple[float, float, np.ndarray] | str] = {}
    for name in cfg.estimators:
        try:
            curve = fit_named_estimator(
                name, ex, train.selected, train.external, seed=child_seed(base, _CV_STREAM)
            )
            mse_s = evaluate_mse(curve, test.selected.x[:, 0], truth)
            mse_d = evaluate_mse(curve, test.external.x[:, 0], truth)
            out[name] = (mse_s, mse_d, np.asarray(curve(grid)))
        except _FIT_FAILURES as exc:
            out[name] = f"{type(exc).__name__}: {exc}"
    return out


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Execute the full protocol for one example and one dataset mode."""
    ex = builtin_example(cfg.example)
    if ex.x_sd <= 0:
        raise ValueError("example has a degenerate treatment marginal")
    truth = _cached_truth(ex)
    if cfg.x_range is not None:
        grid = np.linspace(cfg.x_range[0], cfg.x_range[1], cfg.grid_points)
    else:
        grid = ex.default_grid(cfg.grid_points)
    truth_on_grid = np.asarray(truth(grid), dtype=float)

    cells: list[CellResult] = []
    bands: dict[tuple[str, int], BandReport] = {}
    for n in cfg.n_values:
        def job(run: int, n=n):
            return _run_once(ex, cfg, truth, grid, n, run)

        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(job, range(cfg.runs)))
        else:
            results = [job(run) for run in range(cfg.runs)]

        for name in cfg.estimators:
            mses_s: list[float] = []
            mses_d: list[float] = []
            rows: list[np.ndarray] = []
            failures = 0
            for res in results:
                outcome = res[name]
                if isinstance(outcome, str):
                    failures += 1
                    continue
                mse_s, mse_d, curve_row = outcome
                mses_s.append(mse_s)
                mses_d.append(mse_d)
                rows.append(curve_row)
            cells.append(CellResult(
                estimator=name,
                n=n,
                mode=cfg.mode,
                mse_s_mean=float(np.mean(mses_s)) if mses_s else float("nan"),
                mse_s_sd=float(np.std(mses_s, ddof=1)) if len(mses_s) > 1 else 0.0,
                mse_d_mean=float(np.mean(mses_d)) if mses_d else float("nan"),
                mse_d_sd=float(np.std(mses_d, ddof=1)) if len(mses_d) > 1 else 0.0,
                runs_total=cfg.runs,
                failures=failures,
                per_run_mse_s=tuple(mses_s),
                per_run_mse_d=tuple(mses_d),
            ))
            if rows:
                bands[(name, n)] = compute_band(grid, np.vstack(rows), truth_on_grid)

    report = ExperimentReport(config=cfg, cells=tuple(cells), bands=bands)
    if report.degraded_cells:
        labels = ", ".join(f"{c.estimator}@n={c.n}" for c in report.degraded_cells)
        raise ExperimentError(
            f"more than {MAX_FAILURE_FRACTION:.0%} of runs failed for: {labels}",
            report=report,
        )
    return report


# ---------------------------------------------------------------------------
# report serialization


def _fmt(value: float) -> str:
    return format(float(value), ".6g")


def emit_report(
    reports: ExperimentReport | Sequence[ExperimentReport],
    destination: str | Path,
    figures: bool = True,
) -> list[Path]:
    """Write summary, per-run, and band CSVs (plus band figures) to a directory.

    ``summary.csv`` holds one row per (example, estimator, n, mode, split);
    ``runs.csv`` the per-run MSE vectors behind each summary row; one band CSV
    per (example, estimator, n, mode).  Numbers carry 6 significant digits.
    """
    if isinstance(reports, ExperimentReport):
        reports = [reports]
    out_dir = Path(destination)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    summary_path = out_dir / "summary.csv"
    with summary_path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["example", "estimator", "n", "mode", "split",
             "mse_mean", "mse_sd", "runs", "failures"]
        )
        for report in reports:
            for cell in report.cells:
                for split, mean, sd in (
                    ("S", cell.mse_s_mean, cell.mse_s_sd),
                    ("D", cell.mse_d_mean, cell.mse_d_sd),
                ):
                    writer.writerow([
                        report.example, cell.estimator, cell.n, report.mode.value,
                        split, _fmt(mean), _fmt(sd), cell.runs_total, cell.failures,
                    ])
    written.append(summary_path)

    runs_path = out_dir / "runs.csv"
    with runs_path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["example", "estimator", "n", "mode", "split", "run", "mse"])
        for report in reports:
            for cell in report.cells:
                for split, values in (("S", cell.per_run_mse_s), ("D", cell.per_run_mse_d)):
                    for run, value in enumerate(values):
                        writer.writerow([
                            report.example, cell.estimator, cell.n,
                            report.mode.value, split, run, _fmt(value),
                        ])
    written.append(runs_path)

    for report in reports:
        for (name, n), band in sorted(report.bands.items()):
            path = out_dir / f"bands_{report.example}_{name}_n{n}_{report.mode.value}.csv"
            with path.open("w", newline="") as handle:
                writer = csv.writer(handle)
                writer.writerow(["x", "lower", "mean", "upper", "truth"])
                for i in range(band.x.shape[0]):
                    writer.writerow([
                        _fmt(band.x[i]), _fmt(band.lower[i]), _fmt(band.mean[i]),
                        _fmt(band.upper[i]), _fmt(band.truth[i]),
                    ])
            written.append(path)

    if figures:
        from .plots import render_band_figure

        for report in reports:
            for n in report.config.n_values:
                available = [m for m in report.config.estimators
                             if (m, n) in report.bands]
                if not available:
                    continue
                path = out_dir / f"band_{report.example}_n{n}_{report.mode.value}.png"
                render_band_figure(report, n, path)
                written.append(path)

    return written


def format_summary(reports: ExperimentReport | Sequence[ExperimentReport]) -> str:
    """Human-readable table mirroring summary.csv."""
    if isinstance(reports, ExperimentReport):
        reports = [reports]
    header = f"{'example':<14}{'estimator':<11}{'n':>6}  {'mode':<9}{'split':<6}" \
             f"{'mse_mean':>12}{'mse_sd':>12}{'runs':>6}{'fail':>6}"
    lines = [header, "-" * len(header)]
    for report in reports:
        for cell in report.cells:
            for split, mean, sd in (
                ("S", cell.mse_s_mean, cell.mse_s_sd),
                ("D", cell.mse_d_mean, cell.mse_d_sd),
            ):
                lines.append(
                    f"{report.example:<14}{cell.estimator:<11}{cell.n:>6}  "
                    f"{report.mode.value:<9}{split:<6}{_fmt(mean):>12}{_fmt(sd):>12}"
                    f"{cell.runs_total:>6}{cell.failures:>6}"
                )
    return "\n".join(lines)


def config_from_dict(payload: Mapping) -> ExperimentConfig:
    mode = payload.get("mode", "disjoint")
    return ExperimentConfig(
        example=payload["example"],
        n_values=tuple(payload.get("n", (500, 1000, 5000))),
        runs=int(payload.get("runs", 100)),
        mode=SampleMode(mode),
        estimators=tuple(payload.get("estimators", ESTIMATOR_NAMES)),
        master_seed=int(payload.get("seed", 0)),
        grid_points=int(payload.get("grid", {}).get("points", 101)),
        x_range=tuple(payload["grid"]["range"]) if payload.get("grid", {}).get("range")
        else None,
        workers=int(payload.get("workers", 1)),
    )


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"cannot parse experiment config {path}: {exc}") from exc
    if "example" not in payload:
        raise ValueError("experiment config must name an example")
    return config_from_dict(payload)

"""Causal-curve estimators over a selected/external dataset pair.

Three estimator families share the same first step, a regression of the
target on treatment and proxy features over the selected rows, and differ in
how (or whether) they use the external data afterwards:

* ``naive``  -- the first step alone, with proxies excluded: a regression of
  the target on treatment features fitted under selection.  Biased whenever
  selection or confounding distorts the data; kept as the baseline.
* ``rr``     -- repeated regression: predict the first-step values on the
  external rows and regress those predictions on the treatment features
  there.  Consistent for the observational mean E[Y|X].
* ``tsr``    -- two-step regression: keep the first-step coefficients and
  replace each proxy feature by an external-data estimate of its value under
  intervention.  Non-descendant proxy features are replaced by their
  external means; descendant proxy features by a second regression on
  (treatment, non-descendant proxies) evaluated either in closed form (the
  linear shortcut) or as a plug-in average over the empirical distribution
  of the non-descendant proxies.  Consistent for the interventional mean
  E[Y|do(X)] when the graph criteria hold.

Stage-one feature maps index the concatenated [x | z+ | z-] columns and must
not mix treatment and proxy columns within one monomial; stage-two maps index
[x | z+].  Either stage can carry a ridge penalty chosen by cross-validation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import LabeledDataset, Provenance
from .graph import TsrCase
from .linear import (
    DEFAULT_LAMBDA_GRID,
    DesignMatrix,
    FeatureMap,
    FittedLinearModel,
    Monomial,
    cross_validate_lambda,
    eval_monomial,
    expand_features,
    fit_ols,
    fit_ridge,
    predict,
)
from .rng import SeedLike, child_seed


class EstimationError(ValueError):
    """A dataset/configuration mismatch that makes the requested fit meaningless."""


class DegenerateSampleError(EstimationError):
    """The selected sample is too small to identify the first-step coefficients."""


@dataclass(frozen=True)
class StageConfig:
    """Feature maps and regularization switches for the two regression stages.

    ``stage_two_map`` indexes treatment columns for the repeated-regression
    second step and [treatment | z+] columns for the two-step second step.
    """

    stage_one_map: FeatureMap
    stage_two_map: FeatureMap
    ridge_stage_one: bool = False
    ridge_stage_two: bool = False
    cv_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    cv_folds: int = 5

    def __post_init__(self) -> None:
        object.__setattr__(self, "cv_grid", tuple(float(v) for v in self.cv_grid))
        if (self.ridge_stage_one or self.ridge_stage_two) and not self.cv_grid:
            raise ValueError("ridge stages require a non-empty cv_grid")


@dataclass(frozen=True)
class _FactorTerm:
    # One stage-two monomial, pre-split: weight = coefficient times the
    # external mean of its z+ factor; x_mono is evaluated at query points.
    weight: float
    x_mono: Monomial


@dataclass(frozen=True)
class _ZminusPart:
    coef: float
    model: FittedLinearModel
    factor_terms: tuple[_FactorTerm, ...] | None = None
    zplus_rows: np.ndarray | None = None


@dataclass(frozen=True)
class CausalCurve:
    """A fitted estimate of x -> E[Y | do(X=x)] (or E[Y|X] for naive/rr).

    Evaluation is deterministic given the fitted state; instances are
    immutable and safe to share across threads.
    """

    kind: str
    case: TsrCase | None
    n_treatments: int
    stage_models: tuple[FittedLinearModel, ...]
    _eval_model: FittedLinearModel | None = None
    _x_terms: tuple[tuple[float, Monomial], ...] = ()
    _plug_constant: float = 0.0
    _zminus_parts: tuple[_ZminusPart, ...] = ()

    def _x_table(self, x) -> np.ndarray:
        table = np.asarray(x, dtype=float)
        if table.ndim == 0:
            table = table.reshape(1, 1)
        elif table.ndim == 1:
            table = table.reshape(-1, 1)
        if table.shape[1] != self.n_treatments:
            raise ValueError(
                f"curve expects {self.n_treatments} treatment column(s), got {table.shape[1]}"
            )
        return table

    def __call__(self, x) -> np.ndarray | float:
        scalar = np.ndim(x) == 0
        table = self._x_table(x)
        if self._eval_model is not None:
            values = predict(self._eval_model, table)
        else:
            values = np.full(table.shape[0], self._plug_constant)
            for coef, mono in self._x_terms:
                values = values + coef * eval_monomial(mono, table)
            for part in self._zminus_parts:
                values = values + part.coef * self._stage_two_values(part, table)
        return float(values[0]) if scalar else values

    def _stage_two_values(self, part: _ZminusPart, table: np.ndarray) -> np.ndarray:
        if part.factor_terms is not None:
            out = np.zeros(table.shape[0])
            for term in part.factor_terms:
                out = out + term.weight * eval_monomial(term.x_mono, table)
            return out
        # Plug-in integral: average the stage-two prediction over the
        # empirical distribution of the external z+ rows.
        rows = part.zplus_rows
        out = np.empty(table.shape[0])
        for i in range(table.shape[0]):
            stacked = np.hstack([np.tile(table[i], (rows.shape[0], 1)), rows])
            out[i] = predict(part.model, stacked).mean()
        return out


def _require(dataset: LabeledDataset, provenance: Provenance, label: str) -> None:
    if dataset.provenance is not provenance:
        raise EstimationError(f"{label} dataset must have provenance {provenance.value}")


def _fit_stage(
    design: DesignMatrix, ridge: bool, cfg: StageConfig, seed: SeedLike
) -> FittedLinearModel:
    if design.n < design.p:
        raise DegenerateSampleError(
            f"{design.n} rows cannot identify {design.p} stage coefficients"
        )
    if not ridge:
        return fit_ols(design)
    if design.n < cfg.cv_folds:
        raise DegenerateSampleError(
            f"{design.n} rows cannot be split into {cfg.cv_folds} cross-validation folds"
        )
    lam = cross_validate_lambda(design, cfg.cv_grid, cfg.cv_folds, seed=seed)
    return fit_ridge(design, lam)


def fit_naive(selected: LabeledDataset, fmap: FeatureMap) -> CausalCurve:
    """Regress the target on treatment features over the selected rows only."""
    _require(selected, Provenance.SELECTED, "selected")
    px = selected.x.shape[1]
    if fmap.n_columns_required > px:
        raise EstimationError("naive feature map must reference treatment columns only")
    if selected.n < fmap.n_terms:
        raise DegenerateSampleError(
            f"{selected.n} selected rows cannot identify {fmap.n_terms} coefficients"
        )
    model = fit_ols(expand_features(fmap, selected.x, response=selected.y))
    return CausalCurve(
        kind="naive", case=None, n_treatments=px,
        stage_models=(model,), _eval_model=model,
    )


def fit_rr(
    selected: LabeledDataset,
    external: LabeledDataset,
    cfg: StageConfig,
    seed: SeedLike = 0,
) -> CausalCurve:
    """Repeated regression: first-step predictions re-regressed on X externally."""
    _require(selected, Provenance.SELECTED, "selected")
    _require(external, Provenance.EXTERNAL, "external")
    if selected.widths != external.widths:
        raise EstimationError(
            f"column mismatch between selected {selected.widths} and external {external.widths}"
        )
    px = selected.x.shape[1]
    if cfg.stage_two_map.n_columns_required > px:
        raise EstimationError(
            "the repeated-regression second step regresses on treatment columns only"
        )
    s1_design = expand_features(cfg.stage_one_map, selected.stage_one_table(),
                                response=selected.y)
    stage_one = _fit_stage(s1_design, cfg.ridge_stage_one, cfg, child_seed(seed, 1))
    imputed = predict(stage_one, external.stage_one_table())
    s2_design = expand_features(cfg.stage_two_map, external.x, response=imputed)
    stage_two = _fit_stage(s2_design, cfg.ridge_stage_two, cfg, child_seed(seed, 2))
    return CausalCurve(
        kind="rr", case=None, n_treatments=px,
        stage_models=(stage_one, stage_two), _eval_model=stage_two,
    )


def _split_stage_one_terms(
    fmap: FeatureMap, px: int, pzp: int, pzm: int
) -> tuple[list[tuple[int, Monomial]], list[int], list[int]]:
    """Partition term indices into x/intercept, z+, and z- groups."""
    x_terms: list[tuple[int, Monomial]] = []
    zplus_idx: list[int] = []
    zminus_idx: list[int] = []
    for j, term in enumerate(fmap.terms):
        cols = {col for col, _ in term}
        if not cols or cols <= set(range(px)):
            x_terms.append((j, term))
        elif cols <= set(range(px, px + pzp)):
            zplus_idx.append(j)
        elif cols <= set(range(px + pzp, px + pzp + pzm)):
            zminus_idx.append(j)
        else:
            raise EstimationError(
                "two-step stage-one features must not mix treatment/z+/z- column groups"
            )
    return x_terms, zplus_idx, zminus_idx


def _check_case_columns(case: TsrCase, pzp: int, pzm: int) -> None:
    if case is TsrCase.NO_PROXIES and (pzp or pzm):
        raise EstimationError("case no-proxies requires datasets without proxy columns")
    if case is TsrCase.ZPLUS_ONLY and pzm:
        raise EstimationError("case zplus-only is incompatible with z- columns")
    if case is TsrCase.ZMINUS_ONLY_UNCONFOUNDED and pzp:
        raise EstimationError("case zminus-only is incompatible with z+ columns")
    if case in (TsrCase.ZMINUS_ONLY_UNCONFOUNDED, TsrCase.FULL_LINEAR_SHORTCUT,
                TsrCase.FULL_INTEGRAL) and not pzm:
        raise EstimationError(f"case {case.value} requires at least one z- column")


def _split_stage_two_term(term: Monomial, px: int) -> tuple[Monomial, Monomial]:
    x_part = tuple((c, e) for c, e in term if c < px)
    z_part = tuple((c - px, e) for c, e in term if c >= px)
    return x_part, z_part


def fit_tsr(
    selected: LabeledDataset,
    external: LabeledDataset,
    case: TsrCase,
    cfg: StageConfig,
    seed: SeedLike = 0,
) -> CausalCurve:
    """Two-step regression for the requested case.

    The first step is fitted on the selected rows; every plug-in quantity
    (z+ feature means, z- stage-two regressions) comes from the external rows.
    """
    _require(selected, Provenance.SELECTED, "selected")
    _require(external, Provenance.EXTERNAL, "external")
    if selected.widths != external.widths:
        raise EstimationError(
            f"column mismatch between selected {selected.widths} and external {external.widths}"
        )
    px, pzp, pzm = selected.widths
    _check_case_columns(case, pzp, pzm)

    s1_design = expand_features(cfg.stage_one_map, selected.stage_one_table(),
                                response=selected.y)
    stage_one = _fit_stage(s1_design, cfg.ridge_stage_one, cfg, child_seed(seed, 1))
    beta = stage_one.coefficients
    x_terms, zplus_idx, zminus_idx = _split_stage_one_terms(cfg.stage_one_map, px, pzp, pzm)
    if zminus_idx and case in (TsrCase.NO_PROXIES, TsrCase.ZPLUS_ONLY):
        raise EstimationError(f"stage-one map has z- terms but case is {case.value}")

    external_table = external.stage_one_table()
    plug_constant = 0.0
    for j in zplus_idx:
        feature_mean = eval_monomial(cfg.stage_one_map.terms[j], external_table).mean()
        plug_constant += float(beta[j]) * float(feature_mean)

    models: list[FittedLinearModel] = [stage_one]
    parts: list[_ZminusPart] = []
    if zminus_idx:
        stage_two_table = external.stage_two_table()
        if cfg.stage_two_map.n_columns_required > px + pzp:
            raise EstimationError(
                "the two-step second step regresses on treatment and z+ columns only"
            )
        if case is TsrCase.FULL_LINEAR_SHORTCUT:
            too_high = [t for t in cfg.stage_two_map.terms if sum(e for _, e in t) > 1]
            if too_high:
                raise EstimationError(
                    "the linear-shortcut case requires a degree-1 stage-two map; "
                    "use the plug-in integral case for higher degrees"
                )
        for k, j in enumerate(zminus_idx):
            response = eval_monomial(cfg.stage_one_map.terms[j], external_table)
            design = expand_features(cfg.stage_two_map, stage_two_table, response=response)
            model = _fit_stage(design, cfg.ridge_stage_two, cfg, child_seed(seed, 2, k))
            models.append(model)
            if case is TsrCase.FULL_INTEGRAL:
                parts.append(_ZminusPart(
                    coef=float(beta[j]), model=model,
                    zplus_rows=np.array(external.zplus),
                ))
            else:
                factor_terms = []
                for gamma, term in zip(model.coefficients, cfg.stage_two_map.terms):
                    x_mono, z_mono = _split_stage_two_term(term, px)
                    z_mean = float(eval_monomial(z_mono, external.zplus).mean()) if z_mono \
                        else 1.0
                    factor_terms.append(_FactorTerm(weight=float(gamma) * z_mean,
                                                    x_mono=x_mono))
                parts.append(_ZminusPart(
                    coef=float(beta[j]), model=model, factor_terms=tuple(factor_terms),
                ))

    return CausalCurve(
        kind="tsr", case=case, n_treatments=px,
        stage_models=tuple(models),
        _x_terms=tuple((float(beta[j]), term) for j, term in x_terms),
        _plug_constant=plug_constant,
        _zminus_parts=tuple(parts),
    )


def rr_closed_form(
    stage_one: FittedLinearModel, proxy_fit: FittedLinearModel, x: float
) -> float:
    """Closed form of the repeated-regression curve in the simple linear case.

    With a first step ``y ~ 1 + x + z`` and an external proxy regression
    ``z ~ 1 + x``, the pipeline collapses algebraically to
    ``b0 + b1*x + b2*(a0 + a1*x)``.
    """
    simple_xz = ((), ((0, 1),), ((1, 1),))
    simple_x = ((), ((0, 1),))
    if stage_one.feature_map is None or stage_one.feature_map.terms != simple_xz:
        raise ValueError("closed form requires a first step over exactly (1, x, z)")
    if proxy_fit.feature_map is None or proxy_fit.feature_map.terms != simple_x:
        raise ValueError("closed form requires a proxy regression over exactly (1, x)")
    b0, b1, b2 = stage_one.coefficients
    a0, a1 = proxy_fit.coefficients
    return float(b0 + b1 * x + b2 * (a0 + a1 * x))


def evaluate_mse(
    curve: CausalCurve,
    x_points: Sequence[float] | np.ndarray,
    truth: Callable[[np.ndarray], np.ndarray],
) -> float:
    """Mean squared error of the curve against a truth function on a point set."""
    pts = np.asarray(x_points, dtype=float)
    if pts.size == 0:
        raise ValueError("x_points must be non-empty")
    estimates = np.asarray(curve(pts))
    target = np.asarray(truth(pts), dtype=float)
    return float(np.mean((estimates - target) ** 2))

"""Tests for the naive, repeated-regression, and two-step estimators."""

import numpy as np
import pytest

from proxicause.data import LabeledDataset, Provenance
from proxicause.estimators import (
    DegenerateSampleError,
    EstimationError,
    StageConfig,
    evaluate_mse,
    fit_naive,
    fit_rr,
    fit_tsr,
    rr_closed_form,
)
from proxicause.examples import builtin_example
from proxicause.graph import TsrCase
from proxicause.linear import FeatureMap, expand_features, fit_ols
from proxicause.scm import SampleMode, make_paired


def dataset(x, zplus=None, zminus=None, y=None):
    n = len(x)
    empty = np.empty((n, 0))
    provenance = Provenance.SELECTED if y is not None else Provenance.EXTERNAL
    return LabeledDataset(
        x=np.asarray(x, dtype=float).reshape(n, -1),
        zplus=empty if zplus is None else np.asarray(zplus, float).reshape(n, -1),
        zminus=empty if zminus is None else np.asarray(zminus, float).reshape(n, -1),
        y=None if y is None else np.asarray(y, float),
        provenance=provenance,
    )


def paired(name, n, seed, mode=SampleMode.DISJOINT):
    ex = builtin_example(name)
    return ex, make_paired(ex.scm, ex.selection, n, mode, seed=seed)


class TestLabeledDataset:
    def test_selected_needs_target(self):
        with pytest.raises(ValueError, match="target"):
            LabeledDataset(x=np.ones((3, 1)), zplus=np.empty((3, 0)),
                           zminus=np.empty((3, 0)), y=None,
                           provenance=Provenance.SELECTED)

    def test_external_rejects_target(self):
        with pytest.raises(ValueError, match="target"):
            LabeledDataset(x=np.ones((3, 1)), zplus=np.empty((3, 0)),
                           zminus=np.empty((3, 0)), y=np.ones(3),
                           provenance=Provenance.EXTERNAL)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            dataset([np.inf, 1.0], y=[0.0, 1.0])

    def test_stage_tables_stack_in_role_order(self):
        ds = dataset([1.0, 2.0], zplus=[3.0, 4.0], zminus=[5.0, 6.0], y=[0.0, 0.0])
        assert np.array_equal(ds.stage_one_table(), [[1, 3, 5], [2, 4, 6]])
        assert np.array_equal(ds.stage_two_table(), [[1, 3], [2, 4]])


class TestStageConfig:
    def test_ridge_requires_grid(self):
        fmap = FeatureMap.per_column([1])
        with pytest.raises(ValueError, match="cv_grid"):
            StageConfig(fmap, fmap, ridge_stage_one=True, cv_grid=())


class TestNaive:
    def test_unbiased_without_selection(self, rng):
        # Data kept in full (selection never fires), no confounding: the
        # naive slope is the causal one.
        n = 4000
        x = rng.normal(size=n)
        y = 3 * x + rng.normal(size=n)
        curve = fit_naive(dataset(x, y=y), FeatureMap.per_column([1]))
        slope = (curve(1.0) - curve(0.0))
        assert slope == pytest.approx(3.0, abs=0.1)

    def test_selection_fakes_curvature_on_linear_truth(self):
        # In the product-threshold setting the truth is linear, but the
        # selected sample bends the naive degree-2 fit visibly.
        ex, pair = paired("ex6", 5000, seed=(10, 1))
        curve = fit_naive(pair.selected, ex.naive_map)
        quad_coef = curve.stage_models[0].coefficients[2]
        assert abs(quad_coef) > 0.05
        mse = evaluate_mse(curve, pair.external.x[:, 0], ex.truths.causal_effect)
        assert mse > 1.0

    def test_rejects_proxy_columns_in_map(self):
        ds = dataset([1.0, 2.0, 3.0], zplus=[1.0, 2.0, 3.0], y=[1.0, 2.0, 3.0])
        with pytest.raises(EstimationError, match="treatment columns"):
            fit_naive(ds, FeatureMap.per_column([1, 1]))

    def test_rejects_external_data(self):
        ds = dataset([1.0, 2.0, 3.0])
        with pytest.raises(EstimationError, match="selected"):
            fit_naive(ds, FeatureMap.per_column([1]))


class TestRepeatedRegression:
    def test_matches_closed_form_identity(self):
        # The fitted pipeline agrees with the hand-derived closed form on
        # the simple linear problem, exactly.
        rng = np.random.default_rng(42)
        n = 300
        z_s = rng.normal(-2, 1, size=n)
        x_s = rng.normal(size=n)
        y_s = 3 * x_s + 5 * z_s + rng.normal(size=n)
        selected = dataset(x_s, zplus=z_s, y=y_s)
        x_d = rng.normal(size=n)
        z_d = rng.normal(-2, 1, size=n)
        external = dataset(x_d, zplus=z_d)
        cfg = StageConfig(FeatureMap.per_column([1, 1]), FeatureMap.per_column([1]))
        curve = fit_rr(selected, external, cfg)

        stage_one = curve.stage_models[0]
        proxy = fit_ols(expand_features(FeatureMap.per_column([1]),
                                        x_d.reshape(-1, 1), response=z_d))
        for x in rng.normal(size=10):
            assert curve(float(x)) == pytest.approx(
                rr_closed_form(stage_one, proxy, float(x)), abs=1e-8)

    def test_converges_to_population_curve(self):
        # Independent treatment and proxy: the second-step slope on the
        # proxy path vanishes and the curve tends to b0 + b1*x + b2*mu_z.
        ex, pair = paired("var-linear", 20000, seed=(1, 2))
        cfg = StageConfig(ex.stage_one_map, ex.rr_stage_two_map)
        curve = fit_rr(pair.selected, pair.external, cfg)
        grid = ex.default_grid(9)
        assert np.max(np.abs(curve(grid) - (3 * grid - 10))) < 0.25

    def test_column_mismatch(self):
        selected = dataset([1.0, 2.0, 3.0], zplus=[1.0, 2.0, 3.0], y=[1.0, 2.0, 3.0])
        external = dataset([1.0, 2.0, 3.0])
        cfg = StageConfig(FeatureMap.per_column([1, 1]), FeatureMap.per_column([1]))
        with pytest.raises(EstimationError, match="mismatch"):
            fit_rr(selected, external, cfg)

    def test_recovers_observational_mean_under_confounding(self):
        # Confounded setting: the pipeline lands on E[Y|X], not the causal
        # curve, so score it against the observational conditional mean.
        ex, pair = paired("ex1", 5000, seed=(9, 9))
        cfg = StageConfig(ex.stage_one_map, ex.rr_stage_two_map)
        curve = fit_rr(pair.selected, pair.external, cfg)
        mse = evaluate_mse(curve, pair.external.x[:, 0], ex.truths.cond_expectation)
        assert mse < 0.5


class TestClosedForm:
    def test_arithmetic(self):
        stage_one = fit_ols(expand_features(
            FeatureMap.per_column([1, 1]),
            np.array([[0.0, 0], [1, 0], [0, 1]]), response=np.array([1.0, 3.0, 4.0])))
        assert np.allclose(stage_one.coefficients, [1, 2, 3])
        proxy = fit_ols(expand_features(
            FeatureMap.per_column([1]), np.array([[0.0], [1.0]]),
            response=np.array([4.0, 9.0])))
        assert np.allclose(proxy.coefficients, [4, 5])
        assert rr_closed_form(stage_one, proxy, 0.0) == pytest.approx(13.0)

    def test_vanishing_proxy_path(self):
        stage_one = fit_ols(expand_features(
            FeatureMap.per_column([1, 1]),
            np.array([[0.0, 0], [1, 0], [0, 1]]), response=np.array([0.0, 1.0, 1.0])))
        proxy = fit_ols(expand_features(
            FeatureMap.per_column([1]), np.array([[0.0], [1.0]]),
            response=np.array([0.0, 0.0])))
        for x in (-3.0, 0.0, 7.5):
            assert rr_closed_form(stage_one, proxy, x) == pytest.approx(x)

    def test_shape_mismatch_rejected(self):
        quadratic = fit_ols(expand_features(
            FeatureMap.per_column([2]), np.array([[0.0], [1.0], [2.0]]),
            response=np.array([0.0, 1.0, 4.0])))
        with pytest.raises(ValueError, match="closed form"):
            rr_closed_form(quadratic, quadratic, 0.0)


class TestTwoStep:
    def test_no_proxies_no_selection_equals_naive(self, rng):
        n = 500
        x = rng.normal(size=n)
        y = 1.5 * x + rng.normal(size=n)
        selected = dataset(x, y=y)
        external = dataset(rng.normal(size=n))
        fmap = FeatureMap.per_column([1])
        cfg = StageConfig(fmap, fmap)
        tsr = fit_tsr(selected, external, TsrCase.NO_PROXIES, cfg)
        naive = fit_naive(selected, fmap)
        grid = np.linspace(-2, 2, 7)
        assert np.allclose(tsr(grid), naive(grid))

    def test_zplus_only_is_mean_shifted_stage_one(self):
        # The curve must equal b0 + b1 x (+ b11 x^2) + b2 * mean(z+ in D).
        ex, pair = paired("var-quadratic", 2000, seed=(2, 5))
        cfg = StageConfig(ex.stage_one_map, ex.tsr_stage_two_map)
        curve = fit_tsr(pair.selected, pair.external, ex.case, cfg)
        beta = curve.stage_models[0].coefficients
        zbar = pair.external.zplus.mean()
        grid = ex.default_grid(9)
        expected = beta[0] + beta[1] * grid + beta[2] * grid**2 + beta[3] * zbar
        assert np.allclose(curve(grid), expected, atol=1e-12)

    def test_integral_and_shortcut_coincide_for_linear_stage_two(self):
        ex, pair = paired("motivating", 1500, seed=(3, 8))
        cfg = StageConfig(ex.stage_one_map, ex.tsr_stage_two_map)
        shortcut = fit_tsr(pair.selected, pair.external,
                           TsrCase.FULL_LINEAR_SHORTCUT, cfg)
        integral = fit_tsr(pair.selected, pair.external, TsrCase.FULL_INTEGRAL, cfg)
        grid = ex.default_grid(17)
        assert np.allclose(shortcut(grid), integral(grid), atol=1e-8)

    def test_shortcut_rejects_quadratic_stage_two(self):
        ex, pair = paired("motivating", 800, seed=(4, 1))
        cfg = StageConfig(ex.stage_one_map, FeatureMap.per_column([2, 2]))
        with pytest.raises(EstimationError, match="degree-1"):
            fit_tsr(pair.selected, pair.external, TsrCase.FULL_LINEAR_SHORTCUT, cfg)

    def test_integral_allows_quadratic_stage_two(self):
        ex, pair = paired("motivating", 800, seed=(4, 2))
        cfg = StageConfig(ex.stage_one_map, FeatureMap.per_column([2, 2]))
        curve = fit_tsr(pair.selected, pair.external, TsrCase.FULL_INTEGRAL, cfg)
        assert np.isfinite(curve(0.0))

    def test_ridge_at_zero_matches_ols(self):
        ex, pair = paired("ex5", 1200, seed=(5, 3))
        plain = StageConfig(ex.stage_one_map, ex.tsr_stage_two_map)
        pinned = StageConfig(ex.stage_one_map, ex.tsr_stage_two_map,
                             ridge_stage_one=True, ridge_stage_two=True,
                             cv_grid=(0.0,), cv_folds=5)
        grid = ex.default_grid(9)
        a = fit_tsr(pair.selected, pair.external, ex.case, plain)(grid)
        b = fit_tsr(pair.selected, pair.external, ex.case, pinned)(grid)
        assert np.allclose(a, b, atol=1e-8)

    def test_case_column_mismatch(self):
        selected = dataset([1.0, 2.0, 3.0], zminus=[1.0, 2.0, 3.0], y=[1.0, 2.0, 3.0])
        external = dataset([1.0, 2.0, 3.0], zminus=[1.0, 2.0, 3.0])
        cfg = StageConfig(FeatureMap.per_column([1, 1]), FeatureMap.per_column([1]))
        with pytest.raises(EstimationError, match="zplus-only"):
            fit_tsr(selected, external, TsrCase.ZPLUS_ONLY, cfg)

    def test_mixed_treatment_proxy_terms_rejected(self):
        ex, pair = paired("var-linear", 500, seed=(6, 0))
        mixed = FeatureMap(terms=((), ((0, 1),), ((0, 1), (1, 1))), max_degree=2)
        cfg = StageConfig(mixed, ex.tsr_stage_two_map)
        with pytest.raises(EstimationError, match="mix"):
            fit_tsr(pair.selected, pair.external, ex.case, cfg)

    def test_degenerate_selected_sample_is_loud(self):
        selected = dataset([1.0, 2.0], zplus=[1.0, 2.0], y=[1.0, 2.0])
        external = dataset([1.0, 2.0, 3.0], zplus=[1.0, 2.0, 3.0])
        cfg = StageConfig(FeatureMap.per_column([2, 1]), FeatureMap.per_column([1]))
        with pytest.raises(DegenerateSampleError):
            fit_tsr(selected, external, TsrCase.ZPLUS_ONLY, cfg)


class TestAgreementInUnconfoundedLimit:
    def test_gap_shrinks_with_sample_size(self):
        ex = builtin_example("var-linear")
        grid = ex.default_grid(9)

        def gap(n, seed):
            pair = make_paired(ex.scm, ex.selection, n, SampleMode.DISJOINT, seed=seed)
            rr = fit_rr(pair.selected, pair.external,
                        StageConfig(ex.stage_one_map, ex.rr_stage_two_map))
            tsr = fit_tsr(pair.selected, pair.external, ex.case,
                          StageConfig(ex.stage_one_map, ex.tsr_stage_two_map))
            return float(np.max(np.abs(rr(grid) - tsr(grid))))

        small = np.mean([gap(500, (7, s)) for s in range(20)])
        large = np.mean([gap(5000, (7, s)) for s in range(20)])
        assert large < small


class TestEvaluateMse:
    def test_perfect_curve(self):
        ex, pair = paired("var-linear", 400, seed=(8, 4))
        cfg = StageConfig(ex.stage_one_map, ex.tsr_stage_two_map)
        curve = fit_tsr(pair.selected, pair.external, ex.case, cfg)
        assert evaluate_mse(curve, [0.0, 1.0], curve) == pytest.approx(0.0)

    def test_constant_offset(self):
        ex, pair = paired("var-linear", 400, seed=(8, 5))
        cfg = StageConfig(ex.stage_one_map, ex.tsr_stage_two_map)
        curve = fit_tsr(pair.selected, pair.external, ex.case, cfg)
        shifted = lambda x: np.asarray(curve(x)) + 1.0
        assert evaluate_mse(curve, [0.0, 1.0, 2.0], shifted) == pytest.approx(1.0)

    def test_empty_points_rejected(self):
        ex, pair = paired("var-linear", 400, seed=(8, 6))
        cfg = StageConfig(ex.stage_one_map, ex.tsr_stage_two_map)
        curve = fit_tsr(pair.selected, pair.external, ex.case, cfg)
        with pytest.raises(ValueError, match="non-empty"):
            evaluate_mse(curve, [], lambda x: x)

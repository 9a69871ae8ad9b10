"""Tests for feature maps, the closed-form solvers, and penalty selection."""

import numpy as np
import pytest

from proxicause.linear import (
    DEFAULT_LAMBDA_GRID,
    DegenerateFeatureError,
    DesignMatrix,
    FeatureMap,
    SingularDesignError,
    cross_validate_lambda,
    expand_features,
    fit_ols,
    fit_ridge,
    predict,
)


def simple_design(x, y=None, degree=1):
    return expand_features(FeatureMap.per_column([degree]), np.asarray(x), response=y)


class TestFeatureMap:
    def test_per_column_builder(self):
        fmap = FeatureMap.per_column([2, 1])
        assert fmap.terms == ((), ((0, 1),), ((0, 2),), ((1, 1),))
        assert fmap.n_columns_required == 2

    def test_intercept_must_come_first(self):
        with pytest.raises(ValueError):
            FeatureMap(terms=(((0, 1),), ()), max_degree=1)

    def test_duplicate_terms_rejected(self):
        with pytest.raises(ValueError):
            FeatureMap(terms=((), ((0, 1),), ((0, 1),)), max_degree=1)

    def test_degree_bound_enforced(self):
        with pytest.raises(ValueError):
            FeatureMap(terms=((), ((0, 3),)), max_degree=2)


class TestExpandFeatures:
    def test_identity_map_single_row(self):
        dm = expand_features(FeatureMap.per_column([1]), np.array([[3.0]]))
        assert np.array_equal(dm.rows, [[1.0, 3.0]])

    def test_quadratic_expansion(self):
        dm = expand_features(FeatureMap.per_column([2]), np.array([[2.0]]))
        assert np.array_equal(dm.rows, [[1.0, 2.0, 4.0]])

    def test_quadratic_model_row(self):
        # Degree-2 treatment feature next to a linear proxy feature.
        dm = expand_features(FeatureMap.per_column([2, 1]), np.array([[1.0, -2.0]]))
        assert np.array_equal(dm.rows, [[1.0, 1.0, 1.0, -2.0]])

    def test_missing_column_rejected(self):
        with pytest.raises(ValueError, match="column"):
            expand_features(FeatureMap.per_column([1, 1]), np.array([[1.0]]))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            expand_features(FeatureMap.per_column([1]), np.array([[np.nan]]))

    def test_expansion_is_bit_identical(self, rng):
        data = rng.normal(size=(50, 2))
        fmap = FeatureMap.per_column([2, 2])
        a = expand_features(fmap, data).rows
        b = expand_features(fmap, data).rows
        assert a.tobytes() == b.tobytes()


class TestFitOls:
    def test_exact_line(self):
        x = np.array([0.0, 1.0, 2.0, 5.0])
        model = fit_ols(simple_design(x, y=2 * x + 1))
        assert np.allclose(model.coefficients, [1.0, 2.0], atol=1e-10)

    def test_intercept_only_recovers_mean(self):
        dm = expand_features(FeatureMap(terms=((),), max_degree=1),
                             np.zeros((4, 1)), response=np.full(4, 3.25))
        model = fit_ols(dm)
        assert model.coefficients[0] == pytest.approx(3.25)

    def test_monte_carlo_two_regressors(self, rng):
        # y = 3x + 5z + noise; estimates land within 3 standard errors.
        n = 5000
        x = rng.normal(size=n)
        z = rng.normal(size=n)
        y = 3 * x + 5 * z + rng.normal(size=n)
        dm = expand_features(FeatureMap.per_column([1, 1]), np.column_stack([x, z]),
                             response=y)
        model = fit_ols(dm)
        resid = y - dm.rows @ model.coefficients
        sigma2 = resid @ resid / (n - 3)
        cov = sigma2 * np.linalg.inv(dm.rows.T @ dm.rows)
        for estimate, truth, var in zip(model.coefficients[1:], (3.0, 5.0),
                                        np.diag(cov)[1:]):
            assert abs(estimate - truth) < 3 * np.sqrt(var)

    def test_rank_deficient_raises(self):
        rows = np.column_stack([np.ones(10), np.arange(10.0), 2 * np.arange(10.0)])
        dm = DesignMatrix(rows, response=np.arange(10.0))
        with pytest.raises(SingularDesignError):
            fit_ols(dm)

    def test_more_columns_than_rows_raises(self):
        dm = simple_design(np.array([1.0]), y=np.array([1.0]))
        with pytest.raises(SingularDesignError):
            fit_ols(dm)

    def test_residual_orthogonality_property(self):
        # Normal-equation residuals stay orthogonal to every design column.
        for seed in range(100):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(20, 80))
            data = rng.normal(size=(n, 3))
            y = rng.normal(size=n)
            dm = expand_features(FeatureMap.per_column([1, 1, 1]), data, response=y)
            model = fit_ols(dm)
            resid = y - dm.rows @ model.coefficients
            scale = np.linalg.norm(y) * np.linalg.norm(dm.rows, axis=0) + 1e-30
            assert np.all(np.abs(dm.rows.T @ resid) / scale <= 1e-8 * n)

    def test_fitted_residual_mean_is_zero_with_intercept(self, rng):
        x = rng.normal(size=200)
        y = rng.normal(size=200)
        dm = simple_design(x, y=y)
        model = fit_ols(dm)
        fitted = predict(model, x.reshape(-1, 1))
        assert abs(np.mean(y - fitted)) < 1e-10


class TestFitRidge:
    def test_zero_penalty_matches_ols(self, rng):
        x = np.array([0.0, 1.0, 2.0, 5.0])
        dm = simple_design(x, y=2 * x + 1)
        ridge = fit_ridge(dm, 0.0)
        ols = fit_ols(dm)
        assert np.allclose(ridge.coefficients, ols.coefficients, atol=1e-8)
        assert ridge.ridge_lambda == 0.0

    def test_infinite_shrinkage_limit(self):
        x = np.linspace(-1.0, 1.0, 101)  # mean-zero feature
        y = 2 * x + 1
        model = fit_ridge(simple_design(x, y=y), 1e6)
        assert abs(model.coefficients[1]) < 1e-3
        assert model.coefficients[0] == pytest.approx(y.mean(), abs=1e-6)

    def test_shrinks_coefficients_on_correlated_design(self, rng):
        # Strongly collinear regressors: the penalized fit has a strictly
        # smaller standardized coefficient norm than least squares.
        n = 500
        z = rng.normal(-2.0, 1.0, size=n)
        x = 2 * z + rng.normal(size=n)
        y = 0.2 * x**2 + 5 * z + rng.normal(size=n)
        dm = expand_features(FeatureMap.per_column([2, 1]), np.column_stack([x, z]),
                             response=y)
        scales = dm.rows[:, 1:].std(axis=0)
        ols_norm = np.linalg.norm(fit_ols(dm).coefficients[1:] * scales)
        ridge_norm = np.linalg.norm(fit_ridge(dm, 1.0).coefficients[1:] * scales)
        assert ridge_norm < ols_norm

    def test_norm_monotone_in_penalty(self, rng):
        data = rng.normal(size=(120, 2))
        y = data @ np.array([1.5, -2.0]) + rng.normal(size=120)
        dm = expand_features(FeatureMap.per_column([1, 1]), data, response=y)
        scales = dm.rows[:, 1:].std(axis=0)
        norms = [
            np.linalg.norm(fit_ridge(dm, lam).coefficients[1:] * scales)
            for lam in (0.0, 0.1, 1.0, 10.0, 100.0)
        ]
        assert all(a >= b - 1e-12 for a, b in zip(norms, norms[1:]))

    def test_zero_variance_feature_rejected(self):
        rows = np.column_stack([np.ones(10), np.full(10, 2.0)])
        dm = DesignMatrix(rows, response=np.arange(10.0),
                          feature_map=FeatureMap.per_column([1]))
        with pytest.raises(DegenerateFeatureError):
            fit_ridge(dm, 0.5)

    def test_negative_penalty_rejected(self):
        dm = simple_design(np.arange(4.0), y=np.arange(4.0))
        with pytest.raises(ValueError):
            fit_ridge(dm, -1.0)


class TestPredict:
    def test_scalar_point(self):
        model = fit_ols(simple_design(np.array([0.0, 1.0, 2.0]),
                                      y=np.array([1.0, 3.0, 5.0])))
        assert predict(model, np.array([[0.0]]))[0] == pytest.approx(1.0)

    def test_vector_points(self):
        model = fit_ols(simple_design(np.array([0.0, 1.0, 2.0]),
                                      y=np.array([1.0, 3.0, 5.0])))
        assert np.allclose(predict(model, np.array([[1.0], [2.0]])), [3.0, 5.0])

    def test_missing_column(self):
        model = fit_ols(expand_features(FeatureMap.per_column([1, 1]),
                                        np.random.default_rng(0).normal(size=(10, 2)),
                                        response=np.arange(10.0)))
        with pytest.raises(ValueError, match="column"):
            predict(model, np.zeros((3, 1)))

    def test_in_sample_rmse_matches_noise_level(self, rng):
        # Quadratic treatment plus linear proxy with unit noise: the
        # training RMSE should sit near 1.
        n = 5000
        x = rng.normal(size=n)
        z = rng.normal(-2.0, 1.0, size=n)
        y = 3 * x**2 + 5 * z + rng.normal(size=n)
        dm = expand_features(FeatureMap.per_column([2, 1]), np.column_stack([x, z]),
                             response=y)
        model = fit_ols(dm)
        rmse = np.sqrt(np.mean((y - dm.rows @ model.coefficients) ** 2))
        assert 0.8 < rmse < 1.2


class TestCrossValidation:
    def test_default_grid_shape(self):
        assert len(DEFAULT_LAMBDA_GRID) == 41
        assert DEFAULT_LAMBDA_GRID[0] == pytest.approx(1e-2)
        assert DEFAULT_LAMBDA_GRID[-1] == pytest.approx(1e2)
        ratios = [b / a for a, b in zip(DEFAULT_LAMBDA_GRID, DEFAULT_LAMBDA_GRID[1:])]
        assert np.allclose(ratios, 10 ** 0.1)

    def test_pure_noise_prefers_heavy_penalty(self):
        picks = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            data = rng.normal(size=(60, 3))
            y = rng.normal(size=60)
            dm = expand_features(FeatureMap.per_column([1, 1, 1]), data, response=y)
            picks.append(cross_validate_lambda(dm, grid=(0.01, 100.0), seed=seed))
        assert sum(p == 100.0 for p in picks) > len(picks) / 2

    def test_noiseless_line_prefers_light_penalty(self):
        x = np.linspace(-2, 2, 40)
        dm = simple_design(x, y=2 * x + 1)
        assert cross_validate_lambda(dm, grid=(0.01, 100.0), seed=3) == 0.01

    def test_zero_lambda_scored_inf_on_rank_deficient_fold(self, rng):
        # Collinear columns: lambda=0 cannot be fit, so a positive penalty wins.
        base = rng.normal(size=30)
        rows = np.column_stack([np.ones(30), base, 2 * base])
        dm = DesignMatrix(rows, response=rng.normal(size=30),
                          feature_map=FeatureMap.per_column([1, 1]))
        assert cross_validate_lambda(dm, grid=(0.0, 1.0), seed=0) == 1.0

    def test_tie_breaks_toward_smaller_lambda(self):
        # Duplicate grid entries are a degenerate tie.
        x = np.linspace(-2, 2, 24)
        dm = simple_design(x, y=2 * x + 1)
        assert cross_validate_lambda(dm, grid=(0.5, 0.5), seed=0) == 0.5

    def test_deterministic_for_fixed_seed(self, rng):
        data = rng.normal(size=(50, 2))
        y = rng.normal(size=50)
        dm = expand_features(FeatureMap.per_column([1, 1]), data, response=y)
        a = cross_validate_lambda(dm, seed=11)
        b = cross_validate_lambda(dm, seed=11)
        assert a == b

    def test_requires_enough_rows(self):
        dm = simple_design(np.arange(3.0), y=np.arange(3.0))
        with pytest.raises(ValueError):
            cross_validate_lambda(dm, folds=5)

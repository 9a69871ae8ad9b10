"""Closed-form least squares and ridge regression over polynomial feature maps.

A :class:`FeatureMap` lists the monomials of a polynomial design; expanding it
against a numeric table gives a :class:`DesignMatrix`, which the solvers turn
into a :class:`FittedLinearModel`.  Ordinary least squares goes through a
pivoted QR factorization (never the normal equations, which lose half the
digits on correlated regressors).  Ridge standardizes the non-intercept
columns, leaves the intercept unpenalized, and reports coefficients back on
the original scale, so one penalty value is comparable across problems.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg

from .rng import SeedLike, derive_rng

# Monomial: ((column, exponent), ...) sorted by column; () is the intercept.
Monomial = tuple[tuple[int, int], ...]

RANK_RTOL = 1e-10
DEFAULT_LAMBDA_GRID: tuple[float, ...] = tuple(10.0 ** (-2.0 + 0.1 * k) for k in range(41))

_CV_STREAM = 71


class SingularDesignError(ValueError):
    """Design matrix is rank deficient (or has fewer rows than columns)."""


class DegenerateFeatureError(ValueError):
    """A feature column has zero variance and cannot be standardized for ridge."""


def _as_monomial(term: Mapping[int, int] | Iterable[tuple[int, int]]) -> Monomial:
    pairs = term.items() if isinstance(term, Mapping) else term
    cleaned = []
    for col, exp in pairs:
        col, exp = int(col), int(exp)
        if col < 0:
            raise ValueError(f"negative column index {col} in feature term")
        if exp < 0:
            raise ValueError(f"negative exponent {exp} in feature term")
        if exp > 0:
            cleaned.append((col, exp))
    return tuple(sorted(cleaned))


@dataclass(frozen=True)
class FeatureMap:
    """Ordered monomial basis; the intercept term comes first, exactly once."""

    terms: tuple[Monomial, ...]
    max_degree: int

    def __post_init__(self) -> None:
        terms = tuple(_as_monomial(t) for t in self.terms)
        object.__setattr__(self, "terms", terms)
        if self.max_degree < 1:
            raise ValueError("max_degree must be >= 1")
        if not terms or terms[0] != ():
            raise ValueError("the intercept monomial must appear first")
        if terms.count(()) != 1:
            raise ValueError("the intercept monomial must appear exactly once")
        if len(set(terms)) != len(terms):
            raise ValueError("duplicate monomials in feature map")
        for term in terms:
            if sum(exp for _, exp in term) > self.max_degree:
                raise ValueError(f"term {term} exceeds max_degree={self.max_degree}")

    @classmethod
    def per_column(cls, degrees: Sequence[int]) -> "FeatureMap":
        """Intercept plus pure powers 1..degrees[c] of each column, no cross terms."""
        degrees = [int(d) for d in degrees]
        if any(d < 0 for d in degrees):
            raise ValueError("per-column degrees must be non-negative")
        terms: list[Monomial] = [()]
        for col, deg in enumerate(degrees):
            for power in range(1, deg + 1):
                terms.append(((col, power),))
        return cls(terms=tuple(terms), max_degree=max(max(degrees, default=1), 1))

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @property
    def n_columns_required(self) -> int:
        cols = [col for term in self.terms for col, _ in term]
        return max(cols) + 1 if cols else 0


@dataclass(frozen=True)
class DesignMatrix:
    rows: np.ndarray
    response: np.ndarray | None = None
    feature_map: FeatureMap | None = None

    def __post_init__(self) -> None:
        rows = np.array(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[0] < 1:
            raise ValueError("design must be a 2-d array with at least one row")
        if not np.all(np.isfinite(rows)):
            raise ValueError("design contains non-finite entries")
        rows.flags.writeable = False
        object.__setattr__(self, "rows", rows)
        if self.response is not None:
            y = np.array(self.response, dtype=float).ravel()
            if y.shape[0] != rows.shape[0]:
                raise ValueError("response length does not match design rows")
            if not np.all(np.isfinite(y)):
                raise ValueError("response contains non-finite entries")
            y.flags.writeable = False
            object.__setattr__(self, "response", y)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def p(self) -> int:
        return self.rows.shape[1]

    def subset(self, idx: np.ndarray) -> "DesignMatrix":
        y = None if self.response is None else self.response[idx]
        return DesignMatrix(self.rows[idx], y, self.feature_map)


@dataclass(frozen=True)
class FittedLinearModel:
    """Coefficients aligned with ``feature_map.terms``, on the original scale.

    ``standardization`` records the per-feature (mean, scale) pairs used by
    ridge before penalization; it is ``None`` for plain least squares.
    """

    feature_map: FeatureMap | None
    coefficients: np.ndarray
    ridge_lambda: float | None = None
    standardization: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self) -> None:
        coef = np.array(self.coefficients, dtype=float).ravel()
        coef.flags.writeable = False
        object.__setattr__(self, "coefficients", coef)
        if self.feature_map is not None and coef.shape[0] != self.feature_map.n_terms:
            raise ValueError("coefficient count does not match feature map terms")
        if self.ridge_lambda is None and self.standardization is not None:
            raise ValueError("standardization recorded without a ridge penalty")


def eval_monomial(term: Monomial, table: np.ndarray) -> np.ndarray:
    """Evaluate one monomial on every row of ``table`` (shape (n, k))."""
    out = np.ones(table.shape[0])
    for col, exp in term:
        out = out * table[:, col] ** exp
    return out


def expand_features(
    fmap: FeatureMap, data: np.ndarray, response: np.ndarray | None = None
) -> DesignMatrix:
    """Expand ``data`` columns through ``fmap`` into a design matrix.

    Row i, column j of the result is the product over (col, exp) in term j of
    ``data[i, col] ** exp``; the intercept column is all ones.
    """
    table = np.asarray(data, dtype=float)
    if table.ndim == 1:
        table = table.reshape(-1, 1)
    if table.ndim != 2:
        raise ValueError("data must be one- or two-dimensional")
    if fmap.n_columns_required > table.shape[1]:
        raise ValueError(
            f"feature map references column {fmap.n_columns_required - 1}, "
            f"but data has only {table.shape[1]} columns"
        )
    if not np.all(np.isfinite(table)):
        raise ValueError("data contains non-finite values")
    rows = np.column_stack([eval_monomial(term, table) for term in fmap.terms])
    return DesignMatrix(rows=rows, response=response, feature_map=fmap)


def fit_ols(design: DesignMatrix) -> FittedLinearModel:
    """Least-squares fit via pivoted QR; raises on rank-deficient designs."""
    if design.response is None:
        raise ValueError("design has no response to fit")
    if design.n < design.p:
        raise SingularDesignError(f"{design.n} rows cannot identify {design.p} coefficients")
    q, r, piv = scipy.linalg.qr(design.rows, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag.min() <= RANK_RTOL * diag.max() or diag.max() == 0.0:
        raise SingularDesignError("design is rank deficient")
    beta_piv = scipy.linalg.solve_triangular(r, q.T @ design.response)
    beta = np.empty_like(beta_piv)
    beta[piv] = beta_piv
    return FittedLinearModel(feature_map=design.feature_map, coefficients=beta)


def fit_ridge(design: DesignMatrix, lam: float) -> FittedLinearModel:
    """Ridge fit standardizing non-intercept columns; the intercept is unpenalized."""
    lam = float(lam)
    if not np.isfinite(lam) or lam < 0:
        raise ValueError(f"ridge penalty must be a finite non-negative number, got {lam}")
    if design.response is None:
        raise ValueError("design has no response to fit")
    fmap = design.feature_map
    if fmap is None or fmap.terms[0] != ():
        raise ValueError("ridge fitting requires a feature map with a leading intercept")
    if lam == 0.0:
        return replace(fit_ols(design), ridge_lambda=0.0)

    features = design.rows[:, 1:]
    y = design.response
    means = features.mean(axis=0)
    scales = features.std(axis=0)
    if np.any(scales == 0.0):
        raise DegenerateFeatureError("zero-variance feature column under a nonzero penalty")
    standardized = (features - means) / scales
    y_bar = y.mean()

    p = standardized.shape[1]
    augmented = np.vstack([standardized, np.sqrt(lam) * np.eye(p)])
    target = np.concatenate([y - y_bar, np.zeros(p)])
    gamma = np.linalg.lstsq(augmented, target, rcond=None)[0]

    coef = np.empty(design.p)
    coef[1:] = gamma / scales
    coef[0] = y_bar - float(np.dot(gamma, means / scales))
    full_means = np.concatenate([[0.0], means])
    full_scales = np.concatenate([[1.0], scales])
    return FittedLinearModel(
        feature_map=fmap,
        coefficients=coef,
        ridge_lambda=lam,
        standardization=(full_means, full_scales),
    )


def predict(model: FittedLinearModel, data: np.ndarray) -> np.ndarray:
    """Evaluate the fitted polynomial on the columns of ``data``."""
    if model.feature_map is None:
        raise ValueError("model carries no feature map; predict from raw tables is undefined")
    design = expand_features(model.feature_map, data)
    return design.rows @ model.coefficients


def cross_validate_lambda(
    design: DesignMatrix,
    grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    folds: int = 5,
    seed: SeedLike = 0,
) -> float:
    """Pick the grid penalty minimizing mean held-out squared error.

    Fold assignment is a seeded shuffle, so the selection is deterministic for
    a fixed seed.  A grid point whose fit fails on any fold (possible only at
    ``lam == 0`` on a rank-deficient fold) scores ``+inf``; ties go to the
    smaller penalty.
    """
    if design.response is None:
        raise ValueError("cross-validation requires a response")
    if not grid:
        raise ValueError("penalty grid is empty")
    if folds < 2:
        raise ValueError("cross-validation needs at least 2 folds")
    if design.n < folds:
        raise ValueError(f"{design.n} rows cannot be split into {folds} folds")

    rng = derive_rng(seed, _CV_STREAM)
    order = rng.permutation(design.n)
    fold_of = np.empty(design.n, dtype=int)
    fold_of[order] = np.arange(design.n) % folds

    best_lam = None
    best_score = np.inf
    for lam in sorted(float(v) for v in grid):
        total = 0.0
        try:
            for k in range(folds):
                held = fold_of == k
                model = fit_ridge(design.subset(~held), lam)
                resid = design.response[held] - design.rows[held] @ model.coefficients
                total += float(np.dot(resid, resid))
            score = total / design.n
        except (SingularDesignError, DegenerateFeatureError):
            score = np.inf
        if score < best_score:
            best_score = score
            best_lam = lam
    if best_lam is None:
        raise ValueError("no grid value produced a finite cross-validation score")
    return best_lam

"""Registry of the built-in simulation settings.

Each entry bundles everything one benchmark scenario needs: the structural
model and its selection mechanism, the implied causal graph (derived
mechanically from the assignments), the analytic observational and
interventional truth curves where a closed form exists, the recommended
polynomial feature maps for each regression stage, the estimator case the
graph admits, and the Gaussian marginal of the treatment (used to place
evaluation grids over the bulk of its support).

Closed-form truths were derived by Gaussian conditioning on the linear parts
of each mechanism; scenarios whose interventional mean has no closed form
(``motivating``) leave it unset, and callers fall back to the Monte Carlo
oracle in :mod:`proxicause.scm`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .graph import CausalDag, TsrCase
from .linear import FeatureMap
from .scm import (
    Exogenous,
    LogisticSelection,
    ScmSpec,
    SelectionSpec,
    Structural,
    ThresholdClause,
    ThresholdSelection,
    VarRole,
)

EXAMPLE_NAMES = (
    "var-linear",
    "var-quadratic",
    "ex1",
    "ex2",
    "ex3",
    "ex4",
    "ex5",
    "ex6",
    "motivating",
)

SELECTION_NODE = "S"

# Central 99% of a standard normal.
_Z995 = 2.5758293035489004


@dataclass(frozen=True)
class TruthFunctions:
    """Analytic truth curves; either may be absent."""

    cond_expectation: Callable[[np.ndarray], np.ndarray] | None
    causal_effect: Callable[[np.ndarray], np.ndarray] | None


@dataclass(frozen=True)
class BuiltinExample:
    name: str
    scm: ScmSpec
    selection: SelectionSpec
    dag: CausalDag
    truths: TruthFunctions
    case: TsrCase
    stage_one_map: FeatureMap
    naive_map: FeatureMap
    rr_stage_two_map: FeatureMap
    tsr_stage_two_map: FeatureMap
    x_mean: float
    x_sd: float

    def default_grid(self, points: int = 101) -> np.ndarray:
        """Evenly spaced points over the central 99% of the treatment marginal."""
        lo = self.x_mean - _Z995 * self.x_sd
        hi = self.x_mean + _Z995 * self.x_sd
        return np.linspace(lo, hi, points)


def dag_from_scm(spec: ScmSpec, selection: SelectionSpec) -> CausalDag:
    """Read the causal graph off the structural assignments and the selector."""
    names = [a.name for a in spec.assignments]
    if SELECTION_NODE in names:
        raise ValueError(f"variable name {SELECTION_NODE!r} is reserved for selection")
    edges: list[tuple[str, str]] = []
    for a in spec.assignments:
        if isinstance(a, Structural):
            parents = {v for _, powers in a.terms for v, _ in powers}
            edges.extend((p, a.name) for p in sorted(parents))
    edges.extend((v, SELECTION_NODE) for v in sorted(selection.variables))
    latent = frozenset(spec.names_with_role(VarRole.LATENT))
    z = spec.zplus_names + spec.zminus_names
    observed = frozenset({spec.treatment, spec.target, *z})
    return CausalDag(
        nodes=tuple(names + [SELECTION_NODE]),
        edges=tuple(edges),
        latent=latent,
        selection=SELECTION_NODE,
        x=(spec.treatment,),
        y=spec.target,
        z=z,
        m_scope=observed,
        t_scope=observed - {spec.target},
    )


def _maps(
    x_degree: int, n_zplus: int, n_zminus: int
) -> tuple[FeatureMap, FeatureMap, FeatureMap, FeatureMap]:
    # Proxies enter every recommended map linearly; only the treatment
    # degree varies across scenarios.
    stage_one = FeatureMap.per_column([x_degree] + [1] * n_zplus + [1] * n_zminus)
    x_only = FeatureMap.per_column([x_degree])
    stage_two = FeatureMap.per_column([1] * (1 + n_zplus))
    return stage_one, x_only, x_only, stage_two


def _example(
    name: str,
    scm: ScmSpec,
    selection: SelectionSpec,
    case: TsrCase,
    x_degree: int,
    x_mean: float,
    x_var: float,
    cond: Callable[[np.ndarray], np.ndarray] | None,
    do: Callable[[np.ndarray], np.ndarray] | None,
) -> BuiltinExample:
    stage_one, naive, rr_two, tsr_two = _maps(
        x_degree, len(scm.zplus_names), len(scm.zminus_names)
    )
    return BuiltinExample(
        name=name,
        scm=scm,
        selection=selection,
        dag=dag_from_scm(scm, selection),
        truths=TruthFunctions(cond_expectation=cond, causal_effect=do),
        case=case,
        stage_one_map=stage_one,
        naive_map=naive,
        rr_stage_two_map=rr_two,
        tsr_stage_two_map=tsr_two,
        x_mean=x_mean,
        x_sd=math.sqrt(x_var),
    )


def _threshold(terms, op, constant) -> ThresholdSelection:
    return ThresholdSelection((ThresholdClause(tuple(terms), op, constant),))


def _variance_study(name: str, quadratic: bool) -> BuiltinExample:
    y_terms = ((3.0, {"x": 2 if quadratic else 1}), (5.0, {"z": 1}))
    scm = ScmSpec((
        Exogenous("x", 0.0, 1.0, VarRole.TREATMENT),
        Exogenous("z", -2.0, 1.0, VarRole.ZPLUS),
        Structural("y", y_terms, VarRole.TARGET),
    ))
    selection = _threshold([(1.0, {"x": 1}), (1.0, {"z": 1})], "<", -2.0)
    if quadratic:
        truth = lambda x: 3.0 * np.asarray(x) ** 2 - 10.0
    else:
        truth = lambda x: 3.0 * np.asarray(x) - 10.0
    return _example(
        name, scm, selection, TsrCase.ZPLUS_ONLY,
        x_degree=2 if quadratic else 1, x_mean=0.0, x_var=1.0,
        cond=truth, do=truth,
    )


def _ex1() -> BuiltinExample:
    scm = ScmSpec((
        Exogenous("z", -2.0, 1.0, VarRole.ZPLUS),
        Structural("x", ((2.0, {"z": 1}),), VarRole.TREATMENT),
        Structural("y", ((0.2, {"x": 2}), (5.0, {"z": 1})), VarRole.TARGET),
    ))
    selection = _threshold([(1.0, {"x": 1}), (1.0, {"z": 1})], "<", -6.0)
    return _example(
        "ex1", scm, selection, TsrCase.ZPLUS_ONLY, x_degree=2, x_mean=-4.0, x_var=5.0,
        cond=lambda x: 0.2 * np.asarray(x) ** 2 + 2.0 * np.asarray(x) - 2.0,
        do=lambda x: 0.2 * np.asarray(x) ** 2 - 10.0,
    )


def _ex2() -> BuiltinExample:
    scm = ScmSpec((
        Exogenous("z", -1.0, 2.0, VarRole.ZPLUS),
        Structural("x", ((1.0, {"z": 1}),), VarRole.TREATMENT),
        Structural("y", ((1.0, {"x": 1}), (5.0, {"z": 1})), VarRole.TARGET),
    ))
    selection = LogisticSelection(((-1.0, "x"), (1.0, "z")))
    return _example(
        "ex2", scm, selection, TsrCase.ZPLUS_ONLY, x_degree=2, x_mean=-1.0, x_var=5.0,
        cond=lambda x: 5.0 * np.asarray(x) - 1.0,
        do=lambda x: np.asarray(x) - 5.0,
    )


def _ex3() -> BuiltinExample:
    scm = ScmSpec((
        Exogenous("w", 2.0, 0.3, VarRole.ZPLUS),
        Structural("x", ((1.0, {"w": 1}),), VarRole.TREATMENT),
        Exogenous("z", -0.3, 1.0, VarRole.ZPLUS),
        Structural("y", ((0.2, {"x": 2}), (1.0, {"z": 1}), (3.0, {"w": 1})), VarRole.TARGET),
    ))
    selection = ThresholdSelection((
        ThresholdClause(((1.0, {"z": 1}),), ">", 0.0),
        ThresholdClause(((1.0, {"x": 1}),), "<", 9.0),
    ))
    slope = 3.0 * 0.09 / 1.09  # regression of w on x
    return _example(
        "ex3", scm, selection, TsrCase.ZPLUS_ONLY, x_degree=2, x_mean=2.0, x_var=1.09,
        cond=lambda x: 0.2 * np.asarray(x) ** 2 + 5.7 + slope * (np.asarray(x) - 2.0),
        do=lambda x: 0.2 * np.asarray(x) ** 2 + 5.7,
    )


def _ex4() -> BuiltinExample:
    scm = ScmSpec((
        Exogenous("w", 2.0, 0.3, VarRole.ZPLUS),
        Structural("x", ((1.0, {"w": 1}),), VarRole.TREATMENT),
        Exogenous("z", 0.0, 1.0, VarRole.ZPLUS),
        Structural("y", ((0.5, {"x": 1}), (1.0, {"z": 1}), (3.0, {"w": 1})), VarRole.TARGET),
    ))
    selection = LogisticSelection(((1.0, "x"), (1.0, "z")))
    slope = 3.0 * 0.09 / 1.09
    return _example(
        "ex4", scm, selection, TsrCase.ZPLUS_ONLY, x_degree=2, x_mean=2.0, x_var=1.09,
        cond=lambda x: 0.5 * np.asarray(x) + 6.0 + slope * (np.asarray(x) - 2.0),
        do=lambda x: 0.5 * np.asarray(x) + 6.0,
    )


def _ex5() -> BuiltinExample:
    scm = ScmSpec((
        Exogenous("w", -1.0, 1.0, VarRole.ZPLUS),
        Structural("x", ((1.0, {"w": 1}),), VarRole.TREATMENT),
        Structural("z", ((-2.0, {"x": 1}),), VarRole.ZMINUS),
        Structural("y", ((1.0, {"x": 2}), (1.0, {"z": 1}), (2.0, {"w": 1})), VarRole.TARGET),
    ))
    selection = LogisticSelection(((1.0, "x"), (1.0, "z")))
    return _example(
        "ex5", scm, selection, TsrCase.FULL_LINEAR_SHORTCUT,
        x_degree=2, x_mean=-1.0, x_var=2.0,
        cond=lambda x: np.asarray(x) ** 2 - np.asarray(x) - 1.0,
        do=lambda x: np.asarray(x) ** 2 - 2.0 * np.asarray(x) - 2.0,
    )


def _ex6() -> BuiltinExample:
    scm = ScmSpec((
        Exogenous("w", 2.0, 1.0, VarRole.ZPLUS),
        Structural("x", ((1.0, {"w": 1}),), VarRole.TREATMENT),
        Structural("z", ((1.0, {"x": 1}),), VarRole.ZMINUS),
        Structural(
            "y",
            ((0.1, {"x": 1}), (0.5, {"z": 1}), (0.3, {"w": 1})),
            VarRole.TARGET,
            noise_coef=0.1,
        ),
    ))
    selection = ThresholdSelection((
        ThresholdClause(((1.0, {"z": 1, "x": 1}),), "<", 1.0),
        ThresholdClause(((1.0, {"z": 2, "x": 2}), (1.0, {"z": 1})), ">", 1.0),
    ))
    return _example(
        "ex6", scm, selection, TsrCase.FULL_LINEAR_SHORTCUT,
        x_degree=2, x_mean=2.0, x_var=2.0,
        cond=lambda x: 0.75 * np.asarray(x) + 0.3,
        do=lambda x: 0.6 * (np.asarray(x) + 1.0),
    )


def _motivating() -> BuiltinExample:
    scm = ScmSpec((
        Exogenous("u", 0.0, 1.0, VarRole.LATENT),
        Structural("zp", ((2.0, {"u": 1}),), VarRole.ZPLUS),
        Structural("x", ((1.0, {"zp": 1}),), VarRole.TREATMENT),
        Structural("zm", ((1.0, {"x": 1}), (2.0, {"u": 1})), VarRole.ZMINUS, noise_coef=2.0),
        Structural(
            "y",
            ((0.5, {"x": 2}), (2.0, {"zm": 1}), (2.0, {"u": 1})),
            VarRole.TARGET,
            noise_coef=3.0,
        ),
    ))
    selection = _threshold([(1.0, {"x": 1}), (1.0, {"zm": 1})], ">", 5.0)
    return _example(
        "motivating", scm, selection, TsrCase.FULL_LINEAR_SHORTCUT,
        x_degree=2, x_mean=0.0, x_var=6.0,
        cond=None, do=None,
    )


def _build_registry() -> dict[str, BuiltinExample]:
    return {
        "var-linear": _variance_study("var-linear", quadratic=False),
        "var-quadratic": _variance_study("var-quadratic", quadratic=True),
        "ex1": _ex1(),
        "ex2": _ex2(),
        "ex3": _ex3(),
        "ex4": _ex4(),
        "ex5": _ex5(),
        "ex6": _ex6(),
        "motivating": _motivating(),
    }


_REGISTRY: dict[str, BuiltinExample] | None = None


def builtin_example(name: str) -> BuiltinExample:
    """Look up a built-in scenario by name; see EXAMPLE_NAMES for the list."""
    global _REGISTRY
    if _REGISTRY is None:
        _REGISTRY = _build_registry()
    try:
        return _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown example {name!r}; expected one of {EXAMPLE_NAMES}") from None

"""Structural causal model specification, sampling, and selection mechanisms.

An :class:`ScmSpec` is an ordered list of assignments: Gaussian exogenous
draws and polynomial structural equations with an additive Gaussian noise
term.  Selection is a separate :class:`SelectionSpec`, either a deterministic
conjunction of polynomial threshold clauses or an independent Bernoulli draw
with a product-of-sigmoids probability.

Sampling is pure given a seed.  :func:`make_paired` produces the two-dataset
protocol used throughout: a selected sample (rows that passed selection,
target retained) and an external sample (unbiased rows, target stripped),
either carved out of one pool or drawn from two independent pools.
:func:`oracle_do_curve` is the ground-truth generator: it overwrites the
treatment assignment with a constant and averages fresh target draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence, Union

import numpy as np

from .data import LabeledDataset, Provenance
from .rng import SeedLike, child_seed, derive_rng

# One polynomial term: (coefficient, ((variable, exponent), ...)).
Term = tuple[float, tuple[tuple[str, int], ...]]

_POOL_STREAM = 11
_SELECTION_STREAM = 12
_EXTERNAL_STREAM = 13
_ORACLE_STREAM = 14

MAX_SELECTION_ATTEMPTS = 10


class SimulationError(RuntimeError):
    """Sampling produced no usable data (e.g. nothing passed selection)."""


class VarRole(Enum):
    TREATMENT = "treatment"
    TARGET = "target"
    ZPLUS = "zplus"
    ZMINUS = "zminus"
    LATENT = "latent"


def _as_terms(terms: Sequence) -> tuple[Term, ...]:
    out = []
    for coef, powers in terms:
        if isinstance(powers, Mapping):
            powers = powers.items()
        cleaned = tuple(sorted((str(v), int(e)) for v, e in powers if int(e) != 0))
        if any(e < 0 for _, e in cleaned):
            raise ValueError("negative exponent in structural term")
        out.append((float(coef), cleaned))
    return tuple(out)


@dataclass(frozen=True)
class Exogenous:
    name: str
    mean: float
    sd: float
    role: VarRole

    def __post_init__(self) -> None:
        if self.sd < 0:
            raise ValueError(f"negative standard deviation for {self.name}")


@dataclass(frozen=True)
class Structural:
    name: str
    terms: tuple[Term, ...]
    role: VarRole
    noise_coef: float = 1.0
    noise_sd: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "terms", _as_terms(self.terms))
        if self.noise_sd < 0:
            raise ValueError(f"negative noise sd for {self.name}")


Assignment = Union[Exogenous, Structural]


def eval_terms(terms: Sequence[Term], table: Mapping[str, np.ndarray], n: int) -> np.ndarray:
    out = np.zeros(n)
    for coef, powers in terms:
        value = np.full(n, coef)
        for var, exp in powers:
            value = value * table[var] ** exp
        out += value
    return out


@dataclass(frozen=True)
class ScmSpec:
    assignments: tuple[Assignment, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "assignments", tuple(self.assignments))
        seen: set[str] = set()
        for a in self.assignments:
            if a.name in seen:
                raise ValueError(f"duplicate variable {a.name}")
            if isinstance(a, Structural):
                loose = {v for _, powers in a.terms for v, _ in powers} - seen
                if loose:
                    raise ValueError(
                        f"{a.name} references {sorted(loose)} before they are defined"
                    )
            seen.add(a.name)
        if len(self.names_with_role(VarRole.TREATMENT)) != 1:
            raise ValueError("exactly one treatment variable is required")
        if len(self.names_with_role(VarRole.TARGET)) != 1:
            raise ValueError("exactly one target variable is required")

    def names_with_role(self, role: VarRole) -> tuple[str, ...]:
        return tuple(a.name for a in self.assignments if a.role is role)

    @property
    def treatment(self) -> str:
        return self.names_with_role(VarRole.TREATMENT)[0]

    @property
    def target(self) -> str:
        return self.names_with_role(VarRole.TARGET)[0]

    @property
    def zplus_names(self) -> tuple[str, ...]:
        return self.names_with_role(VarRole.ZPLUS)

    @property
    def zminus_names(self) -> tuple[str, ...]:
        return self.names_with_role(VarRole.ZMINUS)


@dataclass(frozen=True)
class ThresholdClause:
    terms: tuple[Term, ...]
    op: str
    constant: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "terms", _as_terms(self.terms))
        if self.op not in ("<", ">"):
            raise ValueError(f"threshold comparator must be '<' or '>', got {self.op!r}")

    def evaluate(self, table: Mapping[str, np.ndarray], n: int) -> np.ndarray:
        value = eval_terms(self.terms, table, n)
        return value < self.constant if self.op == "<" else value > self.constant


@dataclass(frozen=True)
class ThresholdSelection:
    """Deterministic indicator: the conjunction of all clauses."""

    clauses: tuple[ThresholdClause, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "clauses", tuple(self.clauses))
        if not self.clauses:
            raise ValueError("threshold selection needs at least one clause")

    @property
    def variables(self) -> frozenset[str]:
        return frozenset(v for c in self.clauses for _, powers in c.terms for v, _ in powers)


@dataclass(frozen=True)
class LogisticSelection:
    """Bernoulli draw with probability prod_k 1 / (1 + exp(sign_k * var_k))."""

    factors: tuple[tuple[float, str], ...]

    def __post_init__(self) -> None:
        factors = tuple((float(s), str(v)) for s, v in self.factors)
        object.__setattr__(self, "factors", factors)
        if not factors:
            raise ValueError("logistic selection needs at least one factor")
        if any(s not in (-1.0, 1.0) for s, _ in factors):
            raise ValueError("logistic factor signs must be +1 or -1")

    @property
    def variables(self) -> frozenset[str]:
        return frozenset(v for _, v in self.factors)


SelectionSpec = Union[ThresholdSelection, LogisticSelection]


def sample(
    spec: ScmSpec,
    n: int,
    seed: SeedLike,
    interventions: Mapping[str, float] | None = None,
) -> dict[str, np.ndarray]:
    """Draw ``n`` i.i.d. rows by evaluating the assignments in order.

    ``interventions`` replaces an assignment by a constant column, severing
    its dependence on parents and noise (a hard intervention).
    """
    if n < 1:
        raise ValueError("sample size must be at least 1")
    interventions = dict(interventions or {})
    known = {a.name for a in spec.assignments}
    unknown = set(interventions) - known
    if unknown:
        raise ValueError(f"interventions on unknown variables {sorted(unknown)}")
    rng = derive_rng(seed)
    table: dict[str, np.ndarray] = {}
    for assignment in spec.assignments:
        if assignment.name in interventions:
            table[assignment.name] = np.full(n, float(interventions[assignment.name]))
            continue
        if isinstance(assignment, Exogenous):
            value = rng.normal(assignment.mean, assignment.sd, size=n)
        else:
            value = eval_terms(assignment.terms, table, n)
            value = value + assignment.noise_coef * rng.normal(0.0, assignment.noise_sd, size=n)
        if not np.all(np.isfinite(value)):
            raise SimulationError(f"assignment {assignment.name} produced non-finite values")
        table[assignment.name] = value
    return table


def apply_selection(
    table: Mapping[str, np.ndarray], selection: SelectionSpec, seed: SeedLike
) -> np.ndarray:
    """Boolean row mask: deterministic thresholds or seeded Bernoulli draws."""
    missing = selection.variables - set(table)
    if missing:
        raise ValueError(f"selection references unknown columns {sorted(missing)}")
    n = len(next(iter(table.values())))
    if isinstance(selection, ThresholdSelection):
        mask = np.ones(n, dtype=bool)
        for clause in selection.clauses:
            mask &= clause.evaluate(table, n)
        return mask
    prob = np.ones(n)
    for sign, var in selection.factors:
        prob = prob / (1.0 + np.exp(sign * table[var]))
    rng = derive_rng(seed, _SELECTION_STREAM)
    return rng.random(n) < prob


class SampleMode(Enum):
    SUBSET = "subset"
    DISJOINT = "disjoint"


@dataclass(frozen=True)
class PairedSample:
    selected: LabeledDataset
    external: LabeledDataset
    mode: SampleMode


def _dataset(
    spec: ScmSpec,
    table: Mapping[str, np.ndarray],
    mask: np.ndarray | None,
    with_target: bool,
) -> LabeledDataset:
    def column(name: str) -> np.ndarray:
        col = table[name]
        return col if mask is None else col[mask]

    def block(names: tuple[str, ...]) -> np.ndarray:
        rows = len(column(spec.treatment))
        if not names:
            return np.empty((rows, 0))
        return np.column_stack([column(n) for n in names])

    return LabeledDataset(
        x=block((spec.treatment,)),
        zplus=block(spec.zplus_names),
        zminus=block(spec.zminus_names),
        y=column(spec.target) if with_target else None,
        provenance=Provenance.SELECTED if with_target else Provenance.EXTERNAL,
        x_names=(spec.treatment,),
        zplus_names=spec.zplus_names,
        zminus_names=spec.zminus_names,
    )


def make_paired(
    spec: ScmSpec,
    selection: SelectionSpec,
    n: int,
    mode: SampleMode,
    seed: SeedLike,
) -> PairedSample:
    """Draw the selected/external dataset pair for one simulation run.

    SUBSET mode keeps all ``n`` external rows and selects the target-carrying
    subset from the same pool; DISJOINT mode draws the external pool
    independently.  Runs where nothing passes selection are redrawn with the
    next derived seed, up to MAX_SELECTION_ATTEMPTS.
    """
    if n < 1:
        raise ValueError("sample size must be at least 1")
    for attempt in range(MAX_SELECTION_ATTEMPTS):
        pool = sample(spec, n, child_seed(seed, _POOL_STREAM, attempt))
        mask = apply_selection(pool, selection, child_seed(seed, attempt))
        if not mask.any():
            continue
        selected = _dataset(spec, pool, mask, with_target=True)
        if mode is SampleMode.SUBSET:
            external = _dataset(spec, pool, None, with_target=False)
        else:
            other = sample(spec, n, child_seed(seed, _EXTERNAL_STREAM, attempt))
            external = _dataset(spec, other, None, with_target=False)
        return PairedSample(selected=selected, external=external, mode=mode)
    raise SimulationError(
        f"selection produced no rows in {MAX_SELECTION_ATTEMPTS} attempts at n={n}"
    )


@dataclass(frozen=True)
class DoCurve:
    x: np.ndarray
    mean: np.ndarray
    se: np.ndarray

    def interpolator(self):
        grid, values = self.x, self.mean
        return lambda pts: np.interp(np.asarray(pts, dtype=float), grid, values)


def oracle_do_curve(
    spec: ScmSpec, x_grid: Sequence[float], n_mc: int, seed: SeedLike
) -> DoCurve:
    """Monte Carlo ground truth: mean target under a hard intervention.

    For each grid value the treatment assignment is replaced by that constant
    and all variables are re-sampled ``n_mc`` times; the per-point standard
    error ``sd / sqrt(n_mc)`` is reported alongside.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be at least 1")
    grid = np.asarray(list(x_grid), dtype=float)
    means = np.empty(grid.shape[0])
    ses = np.empty(grid.shape[0])
    for i, value in enumerate(grid):
        point_seed = child_seed(seed, _ORACLE_STREAM, i)
        table = sample(spec, n_mc, point_seed, interventions={spec.treatment: float(value)})
        target = table[spec.target]
        means[i] = target.mean()
        ses[i] = target.std(ddof=1) / math.sqrt(n_mc) if n_mc > 1 else 0.0
    return DoCurve(x=grid, mean=means, se=ses)


# ---------------------------------------------------------------------------
# serialization (same plain-text structured format as the graph files)


def _terms_to_dicts(terms: Sequence[Term]) -> list[dict]:
    return [{"coef": c, "powers": {v: e for v, e in powers}} for c, powers in terms]


def _terms_from_dicts(payload: Sequence[Mapping]) -> tuple[Term, ...]:
    return _as_terms([(t["coef"], dict(t.get("powers", {}))) for t in payload])


def scm_to_dict(spec: ScmSpec) -> dict:
    variables = []
    for a in spec.assignments:
        if isinstance(a, Exogenous):
            variables.append(
                {"name": a.name, "kind": "exogenous", "mean": a.mean, "sd": a.sd,
                 "role": a.role.value}
            )
        else:
            variables.append(
                {"name": a.name, "kind": "structural", "terms": _terms_to_dicts(a.terms),
                 "noise_coef": a.noise_coef, "noise_sd": a.noise_sd, "role": a.role.value}
            )
    return {"variables": variables}


def scm_from_dict(payload: Mapping) -> ScmSpec:
    assignments: list[Assignment] = []
    for entry in payload["variables"]:
        role = VarRole(entry["role"])
        if entry["kind"] == "exogenous":
            assignments.append(Exogenous(entry["name"], entry["mean"], entry["sd"], role))
        elif entry["kind"] == "structural":
            assignments.append(
                Structural(
                    entry["name"],
                    _terms_from_dicts(entry["terms"]),
                    role,
                    noise_coef=entry.get("noise_coef", 1.0),
                    noise_sd=entry.get("noise_sd", 1.0),
                )
            )
        else:
            raise ValueError(f"unknown assignment kind {entry['kind']!r}")
    return ScmSpec(tuple(assignments))


def selection_to_dict(selection: SelectionSpec) -> dict:
    if isinstance(selection, ThresholdSelection):
        return {
            "kind": "threshold",
            "clauses": [
                {"terms": _terms_to_dicts(c.terms), "op": c.op, "constant": c.constant}
                for c in selection.clauses
            ],
        }
    return {
        "kind": "logistic",
        "factors": [{"sign": s, "var": v} for s, v in selection.factors],
    }


def selection_from_dict(payload: Mapping) -> SelectionSpec:
    if payload["kind"] == "threshold":
        return ThresholdSelection(
            tuple(
                ThresholdClause(_terms_from_dicts(c["terms"]), c["op"], float(c["constant"]))
                for c in payload["clauses"]
            )
        )
    if payload["kind"] == "logistic":
        return LogisticSelection(tuple((f["sign"], f["var"]) for f in payload["factors"]))
    raise ValueError(f"unknown selection kind {payload['kind']!r}")

"""Rectangular numeric datasets with causal column roles.

A :class:`LabeledDataset` is the unit every estimator consumes: treatment
columns, proxy columns split into non-descendants (z+) and descendants (z-)
of the treatment, and, for selection-biased data only, the target.  The
provenance flag records how the rows came to be observed: ``SELECTED`` rows
all passed the selection mechanism (so the implicit selection indicator is 1
everywhere), ``EXTERNAL`` rows are unbiased draws that never carry a target.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class Provenance(Enum):
    SELECTED = "selected"
    EXTERNAL = "external"


def _freeze(array: np.ndarray, n_rows: int | None, name: str, ndim: int) -> np.ndarray:
    out = np.array(array, dtype=float)
    if ndim == 2 and out.ndim == 1:
        out = out.reshape(-1, 1)
    if out.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional")
    if n_rows is not None and out.shape[0] != n_rows:
        raise ValueError(f"{name} has {out.shape[0]} rows, expected {n_rows}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite values")
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class LabeledDataset:
    x: np.ndarray
    zplus: np.ndarray
    zminus: np.ndarray
    y: np.ndarray | None
    provenance: Provenance
    x_names: tuple[str, ...] = ()
    zplus_names: tuple[str, ...] = ()
    zminus_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        x = _freeze(self.x, None, "x", 2)
        if x.shape[0] < 1:
            raise ValueError("dataset needs at least one row")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "zplus", _freeze(self.zplus, x.shape[0], "zplus", 2))
        object.__setattr__(self, "zminus", _freeze(self.zminus, x.shape[0], "zminus", 2))
        if self.provenance is Provenance.SELECTED:
            if self.y is None:
                raise ValueError("selected datasets must carry the target column")
            object.__setattr__(self, "y", _freeze(self.y, x.shape[0], "y", 1))
        elif self.y is not None:
            raise ValueError("external datasets must not carry a target column")
        for attr, width in (("x_names", x.shape[1]), ("zplus_names", self.zplus.shape[1]),
                            ("zminus_names", self.zminus.shape[1])):
            names = tuple(getattr(self, attr))
            if not names:
                prefix = attr.split("_")[0]
                names = tuple(f"{prefix}{i}" for i in range(width))
            if len(names) != width:
                raise ValueError(f"{attr} does not match the column count")
            object.__setattr__(self, attr, names)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def widths(self) -> tuple[int, int, int]:
        return self.x.shape[1], self.zplus.shape[1], self.zminus.shape[1]

    def stage_one_table(self) -> np.ndarray:
        """Columns in estimator order: treatments, then z+, then z-."""
        return np.hstack([self.x, self.zplus, self.zminus])

    def stage_two_table(self) -> np.ndarray:
        """Columns for second-step regressions: treatments, then z+."""
        return np.hstack([self.x, self.zplus])

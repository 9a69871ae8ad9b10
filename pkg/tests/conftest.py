"""Shared test helpers: random DAG instances and small dataset builders."""

from __future__ import annotations

import numpy as np
import pytest

from proxicause.graph import CausalDag


def random_dag_instance(rng: np.random.Generator, max_nodes: int = 8):
    """One random (dag, A, B, C) d-separation query on a small DAG."""
    k = int(rng.integers(3, max_nodes + 1))
    names = tuple(f"n{i}" for i in range(k))
    edges = []
    for i in range(k):
        for j in range(i + 1, k):
            if rng.random() < 0.4:
                edges.append((names[i], names[j]))
    dag = CausalDag(nodes=names, edges=tuple(edges))
    perm = rng.permutation(k)
    a = {names[perm[0]]}
    b = {names[perm[1]]}
    rest = [names[p] for p in perm[2:]]
    c = set(rest[: int(rng.integers(0, len(rest) + 1))]) if rest else set()
    return dag, a, b, c


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)

"""Causal DAGs with a selection node, d-separation, and criterion checkers.

The graph object carries three kinds of annotation on top of nodes and edges:
latent flags (variables that exist in the mechanism but are never measured),
a single selection node (no outgoing edges; conditioning on it is what biases
the data), and dataset scopes M and T (which variables are measured in the
selection-biased sample and in the external sample).

d-separation is implemented twice.  :func:`d_separated` runs the linear-time
reachability automaton; :func:`open_trail` enumerates simple trails and is
kept both as an independent oracle for the reachability code and as the
witness generator for criterion reports.  At the graph sizes this package
handles (under a dozen nodes) enumeration is never a bottleneck.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

Edge = tuple[str, str]

FIXTURE_NAMES = ("fig1", "fig2a", "fig2b", "fig2c", "fig2d", "fig4a", "fig4b", "fig4c")


class GraphError(ValueError):
    """Invalid graph structure, roles, or checker preconditions."""


class TsrCase(Enum):
    """Which reduced form of the two-step estimator a graph admits."""

    NO_PROXIES = "no-proxies"
    ZPLUS_ONLY = "zplus-only"
    ZMINUS_ONLY_UNCONFOUNDED = "zminus-only-unconfounded"
    FULL_LINEAR_SHORTCUT = "full-linear-shortcut"
    FULL_INTEGRAL = "full-integral"


@dataclass(frozen=True)
class CausalDag:
    """Immutable DAG with roles (X, Y, Z), scopes (M, T), and a selection node."""

    nodes: tuple[str, ...]
    edges: tuple[Edge, ...]
    latent: frozenset[str] = frozenset()
    selection: str | None = None
    x: tuple[str, ...] = ()
    y: str | None = None
    z: tuple[str, ...] = ()
    m_scope: frozenset[str] = frozenset()
    t_scope: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        nodes = tuple(self.nodes)
        if len(set(nodes)) != len(nodes):
            raise GraphError("duplicate node names")
        node_set = set(nodes)
        edges = tuple(sorted({(str(a), str(b)) for a, b in self.edges}))
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "latent", frozenset(self.latent))
        object.__setattr__(self, "x", tuple(self.x))
        object.__setattr__(self, "z", tuple(self.z))
        object.__setattr__(self, "m_scope", frozenset(self.m_scope))
        object.__setattr__(self, "t_scope", frozenset(self.t_scope))

        for a, b in self.edges:
            if a not in node_set or b not in node_set:
                raise GraphError(f"edge ({a}, {b}) references an unknown node")
            if a == b:
                raise GraphError(f"self loop on {a}")
        self._check_acyclic(nodes, self.edges)

        if not self.latent <= node_set:
            raise GraphError("latent flag on unknown node")
        if self.selection is not None:
            if self.selection not in node_set:
                raise GraphError(f"unknown selection node {self.selection}")
            if any(a == self.selection for a, _ in self.edges):
                raise GraphError("the selection node must have no outgoing edges")
            if self.selection in self.latent:
                raise GraphError("the selection node cannot be latent")

        roles = list(self.x) + list(self.z) + ([self.y] if self.y is not None else [])
        if len(set(roles)) != len(roles):
            raise GraphError("X, Y and Z roles must be pairwise disjoint")
        for name in roles:
            if name not in node_set:
                raise GraphError(f"role references unknown node {name}")
            if name == self.selection:
                raise GraphError("the selection node cannot carry an X/Y/Z role")
            if name in self.latent:
                raise GraphError(f"latent node {name} cannot carry an X/Y/Z role")
        for scope, label in ((self.m_scope, "M"), (self.t_scope, "T")):
            if not scope <= node_set:
                raise GraphError(f"scope {label} references unknown nodes")
            if scope & self.latent:
                raise GraphError(f"latent nodes cannot appear in scope {label}")
            if self.selection in scope:
                raise GraphError(f"the selection node cannot appear in scope {label}")

    @staticmethod
    def _check_acyclic(nodes: Sequence[str], edges: Sequence[Edge]) -> None:
        indeg = {n: 0 for n in nodes}
        children: dict[str, list[str]] = {n: [] for n in nodes}
        for a, b in edges:
            indeg[b] += 1
            children[a].append(b)
        queue = deque(n for n in nodes if indeg[n] == 0)
        seen = 0
        while queue:
            seen += 1
            for child in children[queue.popleft()]:
                indeg[child] -= 1
                if indeg[child] == 0:
                    queue.append(child)
        if seen != len(nodes):
            raise GraphError("graph contains a cycle")

    def parents(self, node: str) -> tuple[str, ...]:
        return tuple(a for a, b in self.edges if b == node)

    def children(self, node: str) -> tuple[str, ...]:
        return tuple(b for a, b in self.edges if a == node)

    def has_edge(self, a: str, b: str) -> bool:
        return (a, b) in set(self.edges)

    def require_node(self, name: str) -> None:
        if name not in self.nodes:
            raise GraphError(f"unknown node {name}")

    def require_roles(self) -> None:
        if not self.x or self.y is None:
            raise GraphError("graph roles X and Y are not set")

    def require_selection(self) -> str:
        if self.selection is None:
            raise GraphError("graph has no selection node")
        return self.selection


@dataclass(frozen=True)
class CriterionReport:
    """Outcome of one graphical criterion: holds iff no condition failed."""

    criterion: str
    failures: tuple[tuple[str, str], ...] = ()

    @property
    def holds(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        if self.holds:
            return f"{self.criterion}: HOLDS"
        parts = "; ".join(f"{label}: {witness}" for label, witness in self.failures)
        return f"{self.criterion}: FAILS ({parts})"


# ---------------------------------------------------------------------------
# basic graph operations


def _as_node_set(dag: CausalDag, nodes: Iterable[str]) -> frozenset[str]:
    out = frozenset(nodes)
    for n in out:
        dag.require_node(n)
    return out


def descendants(dag: CausalDag, seed: Iterable[str]) -> frozenset[str]:
    """All nodes reachable from ``seed`` by directed paths, excluding ``seed``."""
    seed_set = _as_node_set(dag, seed)
    out: set[str] = set()
    stack = list(seed_set)
    while stack:
        node = stack.pop()
        for child in dag.children(node):
            if child not in out:
                out.add(child)
                stack.append(child)
    return frozenset(out - seed_set)


def ancestors(dag: CausalDag, seed: Iterable[str]) -> frozenset[str]:
    """All nodes with a directed path into ``seed``, excluding ``seed``."""
    seed_set = _as_node_set(dag, seed)
    out: set[str] = set()
    stack = list(seed_set)
    while stack:
        node = stack.pop()
        for parent in dag.parents(node):
            if parent not in out:
                out.add(parent)
                stack.append(parent)
    return frozenset(out - seed_set)


def mutilate(
    dag: CausalDag, remove_into: Iterable[str] = (), remove_out_of: Iterable[str] = ()
) -> CausalDag:
    """Drop every edge into ``remove_into`` and out of ``remove_out_of``."""
    into = _as_node_set(dag, remove_into)
    out_of = _as_node_set(dag, remove_out_of)
    kept = tuple(e for e in dag.edges if e[1] not in into and e[0] not in out_of)
    return replace(dag, edges=kept)


def _validate_dsep_args(
    dag: CausalDag, a: Iterable[str], b: Iterable[str], c: Iterable[str]
) -> tuple[frozenset[str], frozenset[str], frozenset[str]]:
    a_set = _as_node_set(dag, a)
    b_set = _as_node_set(dag, b)
    c_set = _as_node_set(dag, c)
    if a_set & b_set or a_set & c_set or b_set & c_set:
        raise GraphError("d-separation arguments must be pairwise disjoint")
    if c_set & dag.latent:
        raise GraphError("latent nodes cannot appear in a conditioning set")
    return a_set, b_set, c_set


def d_separated(
    dag: CausalDag, a: Iterable[str], b: Iterable[str], c: Iterable[str] = ()
) -> bool:
    """Reachability test: True iff every trail between A and B is blocked by C."""
    a_set, b_set, c_set = _validate_dsep_args(dag, a, b, c)
    if not a_set or not b_set:
        return True
    anc_c = set(ancestors(dag, c_set)) | set(c_set)

    # States (node, arrived-from-child?). Arriving from a child and leaving to
    # anything is legal while the node is unconditioned; arriving from a parent
    # allows passing down when unconditioned and turning back up only at an
    # active collider (node or one of its descendants conditioned on).
    queue: deque[tuple[str, bool]] = deque((n, True) for n in a_set)
    visited: set[tuple[str, bool]] = set()
    while queue:
        node, from_child = queue.popleft()
        if node in b_set:
            return False
        if (node, from_child) in visited:
            continue
        visited.add((node, from_child))
        if from_child:
            if node not in c_set:
                for parent in dag.parents(node):
                    queue.append((parent, True))
                for child in dag.children(node):
                    queue.append((child, False))
        else:
            if node not in c_set:
                for child in dag.children(node):
                    queue.append((child, False))
            if node in anc_c:
                for parent in dag.parents(node):
                    queue.append((parent, True))
    return True


def open_trail(
    dag: CausalDag, a: Iterable[str], b: Iterable[str], c: Iterable[str] = ()
) -> list[str] | None:
    """Exhaustive search for an unblocked simple trail from A to B given C.

    Returns the first open trail found (a node list), or None when A and B are
    d-separated.  Exponential in the worst case; used on small graphs only.
    """
    a_set, b_set, c_set = _validate_dsep_args(dag, a, b, c)
    desc_cache: dict[str, frozenset[str]] = {}

    def node_descendants(node: str) -> frozenset[str]:
        if node not in desc_cache:
            desc_cache[node] = descendants(dag, (node,))
        return desc_cache[node]

    def interior_open(prev: str, node: str, nxt: str) -> bool:
        collider = dag.has_edge(prev, node) and dag.has_edge(nxt, node)
        if collider:
            return node in c_set or bool(node_descendants(node) & c_set)
        return node not in c_set

    def neighbors(node: str) -> tuple[str, ...]:
        return tuple(sorted(set(dag.parents(node)) | set(dag.children(node))))

    def extend(path: list[str]) -> list[str] | None:
        node = path[-1]
        for nxt in neighbors(node):
            if nxt in path:
                continue
            if len(path) >= 2 and not interior_open(path[-2], node, nxt):
                continue
            if nxt in b_set:
                return path + [nxt]
            found = extend(path + [nxt])
            if found is not None:
                return found
        return None

    for start in sorted(a_set):
        found = extend([start])
        if found is not None:
            return found
    return None


def d_separated_enumeration(
    dag: CausalDag, a: Iterable[str], b: Iterable[str], c: Iterable[str] = ()
) -> bool:
    """Brute-force oracle for :func:`d_separated`."""
    return open_trail(dag, a, b, c) is None


def format_trail(dag: CausalDag, trail: Sequence[str]) -> str:
    parts = [trail[0]]
    for prev, node in zip(trail, trail[1:]):
        arrow = " -> " if dag.has_edge(prev, node) else " <- "
        parts.append(arrow + node)
    return "".join(parts)


# ---------------------------------------------------------------------------
# proxy decomposition and criterion checkers


def decompose_proxies(dag: CausalDag) -> tuple[frozenset[str], frozenset[str]]:
    """Split Z into non-descendants and descendants of the treatment set."""
    dag.require_roles()
    desc_x = descendants(dag, dag.x)
    zminus = frozenset(dag.z) & desc_x
    zplus = frozenset(dag.z) - zminus
    return zplus, zminus


def _dsep_failure(
    dag: CausalDag,
    label: str,
    a: Iterable[str],
    b: Iterable[str],
    c: Iterable[str],
) -> tuple[str, str] | None:
    trail = open_trail(dag, a, b, c)
    if trail is None:
        return None
    return (label, "unblocked path " + format_trail(dag, trail))


def check_pmar(dag: CausalDag) -> CriterionReport:
    """Selection is ignorable for the target once treatment and proxies are held fixed.

    Holds iff S is d-separated from Y given X and Z.
    """
    dag.require_roles()
    s = dag.require_selection()
    failures = []
    fail = _dsep_failure(
        dag, "S not separated from Y given X and Z", (s,), (dag.y,), set(dag.x) | set(dag.z)
    )
    if fail:
        failures.append(fail)
    return CriterionReport("PMAR", tuple(failures))


def check_recoverability(dag: CausalDag) -> CriterionReport:
    """The three-part criterion under which the two-step estimator is valid.

    (1) selection ignorability given X and Z; (2) the non-descendant proxies
    block every backdoor path from treatment to target; (3) scope membership:
    Z, X, Y measured under selection, Z measured externally, and X measured
    externally whenever descendant proxies are present.
    """
    dag.require_roles()
    dag.require_selection()
    zplus, zminus = decompose_proxies(dag)
    failures = []

    failures.extend(f for f in [_pmar_failure(dag)] if f)
    failures.extend(f for f in [_backdoor_failure(dag, zplus)] if f)
    failures.extend(_scope_failures(dag, zminus, require_x_external=True))
    return CriterionReport("Assumption-2", tuple(failures))


def _pmar_failure(dag: CausalDag) -> tuple[str, str] | None:
    report = check_pmar(dag)
    if report.holds:
        return None
    return ("condition 1 (selection ignorability): " + report.failures[0][0], report.failures[0][1])


def _backdoor_failure(dag: CausalDag, zplus: frozenset[str]) -> tuple[str, str] | None:
    no_out_of_x = mutilate(dag, remove_out_of=dag.x)
    return _dsep_failure(
        no_out_of_x,
        "condition 2 (backdoor blocking): Y not separated from X given Z+ "
        "after removing edges out of X",
        (dag.y,),
        dag.x,
        zplus,
    )


def _scope_failures(
    dag: CausalDag, zminus: frozenset[str], require_x_external: bool
) -> list[tuple[str, str]]:
    failures = []
    needed_m = set(dag.z) | set(dag.x) | {dag.y}
    missing_m = sorted(needed_m - dag.m_scope)
    if missing_m:
        failures.append(("condition 3 (scopes): missing from M", ", ".join(missing_m)))
    missing_t = sorted(set(dag.z) - dag.t_scope)
    if missing_t:
        failures.append(("condition 3 (scopes): Z missing from T", ", ".join(missing_t)))
    if require_x_external and zminus:
        missing_x = sorted(set(dag.x) - dag.t_scope)
        if missing_x:
            failures.append(
                ("condition 3 (scopes): X missing from T while Z- is non-empty",
                 ", ".join(missing_x))
            )
    return failures


def check_selection_backdoor(dag: CausalDag) -> CriterionReport:
    """Four-part selection backdoor criterion over (X, Y, Z, M, T)."""
    dag.require_roles()
    s = dag.require_selection()
    zplus, zminus = decompose_proxies(dag)
    failures = []

    fail = _dsep_failure(
        dag, "condition 1: S not separated from Y given X and Z",
        (s,), (dag.y,), set(dag.x) | set(dag.z),
    )
    if fail:
        failures.append(fail)
    fail = _backdoor_failure(dag, zplus)
    if fail:
        failures.append(("condition 2 (backdoor blocking)", fail[1]))
    if zminus:
        fail = _dsep_failure(
            dag, "condition 3: Z- not separated from Y given X and Z+",
            zminus, (dag.y,), set(dag.x) | zplus,
        )
        if fail:
            failures.append(fail)
    failures.extend(_scope_failures(dag, zminus, require_x_external=False))
    return CriterionReport("Selection-Backdoor", tuple(failures))


def _proper_causal_paths(dag: CausalDag) -> list[list[str]]:
    """Directed paths from X to Y whose interior avoids X."""
    dag.require_roles()
    x_set = set(dag.x)
    paths: list[list[str]] = []

    def walk(path: list[str]) -> None:
        node = path[-1]
        for child in sorted(dag.children(node)):
            if child in x_set or child in path:
                continue
            if child == dag.y:
                paths.append(path + [child])
            else:
                walk(path + [child])

    for x in sorted(x_set):
        if dag.y == x:
            continue
        walk([x])
    return paths


def proper_backdoor_graph(dag: CausalDag) -> CausalDag:
    """Remove the first edge of every proper causal path from X to Y."""
    first_edges = {(p[0], p[1]) for p in _proper_causal_paths(dag)}
    kept = tuple(e for e in dag.edges if e not in first_edges)
    return replace(dag, edges=kept)


def _noncausal_open_trail(
    dag: CausalDag, conditioning: frozenset[str]
) -> list[str] | None:
    """First open non-causal trail from X to Y given ``conditioning``."""
    causal = {tuple(p) for p in _proper_causal_paths(dag)}
    x_set = set(dag.x)
    desc_cache: dict[str, frozenset[str]] = {}

    def node_descendants(node: str) -> frozenset[str]:
        if node not in desc_cache:
            desc_cache[node] = descendants(dag, (node,))
        return desc_cache[node]

    def interior_open(prev: str, node: str, nxt: str) -> bool:
        if dag.has_edge(prev, node) and dag.has_edge(nxt, node):
            return node in conditioning or bool(node_descendants(node) & conditioning)
        return node not in conditioning

    def extend(path: list[str]) -> list[str] | None:
        node = path[-1]
        for nxt in sorted(set(dag.parents(node)) | set(dag.children(node))):
            if nxt in path or (nxt in x_set and nxt != path[0]):
                continue
            if len(path) >= 2 and not interior_open(path[-2], node, nxt):
                continue
            candidate = path + [nxt]
            if nxt == dag.y:
                if tuple(candidate) not in causal:
                    return candidate
                continue
            found = extend(candidate)
            if found is not None:
                return found
        return None

    for x in sorted(x_set):
        found = extend([x])
        if found is not None:
            return found
    return None


def check_gact3(dag: CausalDag, zt: Iterable[str]) -> CriterionReport:
    """Generalized adjustment criterion (type 3) for (Z, ZT) against (X, Y).

    (1) no proxy descends, in the graph with edges into X removed, from a
    non-treatment node on a proper causal path; (2) every non-causal trail
    from X to Y is blocked by Z together with the selection node; (3) ZT
    separates Y from S in the proper backdoor graph.
    """
    dag.require_roles()
    s = dag.require_selection()
    zt_set = frozenset(zt)
    if not zt_set <= set(dag.z):
        raise GraphError("ZT must be a subset of the proxy set Z")
    failures = []

    paths = _proper_causal_paths(dag)
    mediators = {n for p in paths for n in p[1:]} - set(dag.x)
    if mediators:
        no_into_x = mutilate(dag, remove_into=dag.x)
        # Descendant sets are taken per causal-path node (each excluding that
        # node itself), so one mediator can still forbid another downstream.
        forbidden: set[str] = set()
        for node in mediators:
            forbidden |= descendants(no_into_x, (node,))
        bad = sorted(set(dag.z) & forbidden)
        if bad:
            failures.append(
                ("condition 1: proxies descend from a causal-path node", ", ".join(bad))
            )

    trail = _noncausal_open_trail(dag, frozenset(dag.z) | {s})
    if trail is not None:
        failures.append(
            ("condition 2: non-causal path from X to Y not blocked by Z and S",
             format_trail(dag, trail))
        )

    pbd = proper_backdoor_graph(dag)
    fail = _dsep_failure(
        pbd, "condition 3: ZT does not separate Y from S in the proper backdoor graph",
        (dag.y,), (s,), zt_set,
    )
    if fail:
        failures.append(fail)
    return CriterionReport("GACT3", tuple(failures))


def check_do_calculus_rule(
    dag: CausalDag,
    rule: int,
    x: Iterable[str],
    y: Iterable[str],
    z: Iterable[str],
    w: Iterable[str],
) -> bool:
    """Evaluate the graphical side condition of one do-calculus rule.

    Rule 1 (insert/delete observations), rule 2 (exchange an action for an
    observation) and rule 3 (insert/delete actions) each reduce to one
    d-separation statement on a mutilated graph.
    """
    x_set = _as_node_set(dag, x)
    y_set = _as_node_set(dag, y)
    z_set = _as_node_set(dag, z)
    w_set = _as_node_set(dag, w)
    sets = [x_set, y_set, z_set, w_set]
    for i in range(len(sets)):
        for j in range(i + 1, len(sets)):
            if sets[i] & sets[j]:
                raise GraphError("rule arguments must be pairwise disjoint")
    conditioning = x_set | w_set
    if rule == 1:
        graph = mutilate(dag, remove_into=x_set)
    elif rule == 2:
        graph = mutilate(dag, remove_into=x_set, remove_out_of=z_set)
    elif rule == 3:
        no_into_x = mutilate(dag, remove_into=x_set)
        anc_w = ancestors(no_into_x, w_set) if w_set else frozenset()
        z_not_anc = z_set - anc_w
        graph = mutilate(dag, remove_into=x_set | z_not_anc)
    else:
        raise GraphError(f"invalid do-calculus rule {rule}; expected 1, 2 or 3")
    return d_separated(graph, y_set, z_set, conditioning)


def tsr_case(dag: CausalDag, linear_stage_two: bool = True) -> TsrCase:
    """Classify which reduced estimator form the graph admits.

    Requires the recoverability criterion to hold.  With only non-descendant
    proxies a population mean suffices in the second step; with only
    descendant proxies that are unconfounded with the treatment, a plain
    regression on X does; otherwise the full two-step form is needed, either
    as the linear shortcut or as the plug-in integral.
    """
    report = check_recoverability(dag)
    if not report.holds:
        raise GraphError("recoverability criterion fails: " + report.summary())
    zplus, zminus = decompose_proxies(dag)
    full = TsrCase.FULL_LINEAR_SHORTCUT if linear_stage_two else TsrCase.FULL_INTEGRAL
    if not zplus and not zminus:
        return TsrCase.NO_PROXIES
    if not zminus:
        return TsrCase.ZPLUS_ONLY
    if not zplus:
        no_out_of_x = mutilate(dag, remove_out_of=dag.x)
        if d_separated(no_out_of_x, dag.x, zminus, zplus):
            return TsrCase.ZMINUS_ONLY_UNCONFOUNDED
        return full
    return full


# ---------------------------------------------------------------------------
# serialization and bundled fixtures


def dag_from_dict(payload: Mapping) -> CausalDag:
    try:
        nodes = []
        latent = []
        selection = None
        for entry in payload["nodes"]:
            name = str(entry["name"])
            nodes.append(name)
            if entry.get("latent", False):
                latent.append(name)
            if entry.get("selection", False):
                if selection is not None:
                    raise GraphError("more than one selection node")
                selection = name
        roles = payload.get("roles", {})
        scopes = payload.get("scopes", {})
        return CausalDag(
            nodes=tuple(nodes),
            edges=tuple((str(a), str(b)) for a, b in payload.get("edges", [])),
            latent=frozenset(latent),
            selection=selection,
            x=tuple(roles.get("x", [])),
            y=roles.get("y"),
            z=tuple(roles.get("z", [])),
            m_scope=frozenset(scopes.get("m", [])),
            t_scope=frozenset(scopes.get("t", [])),
        )
    except (KeyError, TypeError) as exc:
        raise GraphError(f"malformed graph description: {exc}") from exc


def dag_to_dict(dag: CausalDag) -> dict:
    return {
        "nodes": [
            {"name": n, "latent": n in dag.latent, "selection": n == dag.selection}
            for n in dag.nodes
        ],
        "edges": [list(e) for e in dag.edges],
        "roles": {"x": list(dag.x), "y": dag.y, "z": list(dag.z)},
        "scopes": {"m": sorted(dag.m_scope), "t": sorted(dag.t_scope)},
    }


def load_dag(path: str | Path) -> CausalDag:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GraphError(f"cannot parse graph file {path}: {exc}") from exc
    return dag_from_dict(payload)


def fixture_dag(name: str) -> CausalDag:
    """Load one of the bundled example graphs by name (see FIXTURE_NAMES)."""
    if name not in FIXTURE_NAMES:
        raise GraphError(f"unknown fixture {name!r}; expected one of {FIXTURE_NAMES}")
    text = resources.files("proxicause.fixtures").joinpath(f"{name}.json").read_text()
    return dag_from_dict(json.loads(text))

"""Causal DAGs with variable roles and optional linear path coefficients.

The graph is immutable; all queries are pure. Linear graphs carry one
coefficient per edge and an optional disturbance variance per node (the
variance of the node's own error term, 1.0 when omitted).
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping

from .errors import GraphParseError, StructureError

ROLES = ("sensitive", "outcome", "covariate", "proxy")

# Path enumeration for Wright's rule is exponential in the worst case.
MAX_PATH_NODES = 12


@dataclass(frozen=True)
class Node:
    name: str
    role: str = "covariate"
    latent: bool = False
    conditioned: bool = False
    variance: float | None = None


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    coefficient: float | None = None


@dataclass(frozen=True)
class StructureTags:
    """Structural roles of the other variables relative to a (sensitive, outcome) pair."""

    confounders: tuple[str, ...] = ()
    latent_confounders: tuple[str, ...] = ()
    colliders: tuple[str, ...] = ()
    proxies: tuple[str, ...] = ()
    second_sensitive: tuple[str, ...] = ()


@dataclass(frozen=True)
class CausalGraph:
    nodes: tuple[Node, ...] = ()
    edges: tuple[Edge, ...] = ()
    _index: Mapping[str, Node] = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "_index", {n.name: n for n in self.nodes})

    @classmethod
    def from_edges(
        cls,
        edges: Iterable[tuple],
        roles: Mapping[str, str] | None = None,
        latent: Iterable[str] = (),
        conditioned: Iterable[str] = (),
        variances: Mapping[str, float] | None = None,
    ) -> "CausalGraph":
        """Build a graph from ``(source, target)`` or ``(source, target, coef)`` tuples.

        Nodes are declared in order of first appearance; ``roles`` may also
        introduce isolated nodes.
        """
        roles = dict(roles or {})
        variances = dict(variances or {})
        latent, conditioned = set(latent), set(conditioned)
        names: list[str] = []
        parsed = []
        for e in edges:
            src, dst = e[0], e[1]
            coef = e[2] if len(e) > 2 else None
            parsed.append(Edge(src, dst, None if coef is None else float(coef)))
            for n in (src, dst):
                if n not in names:
                    names.append(n)
        for n in roles:
            if n not in names:
                names.append(n)
        nodes = tuple(
            Node(n, roles.get(n, "covariate"), n in latent, n in conditioned, variances.get(n))
            for n in names
        )
        return cls(nodes, tuple(parsed))

    # -- basic queries -------------------------------------------------------

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n.name for n in self.nodes)

    @property
    def variances(self) -> dict[str, float]:
        return {n.name: n.variance for n in self.nodes if n.variance is not None}

    def node(self, name: str) -> Node:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown node {name!r}") from None

    def parents(self, name: str) -> tuple[str, ...]:
        return tuple(e.source for e in self.edges if e.target == name)

    def children(self, name: str) -> tuple[str, ...]:
        return tuple(e.target for e in self.edges if e.source == name)

    def coefficient(self, source: str, target: str) -> float | None:
        for e in self.edges:
            if e.source == source and e.target == target:
                return e.coefficient
        raise KeyError(f"no edge {source} -> {target}")

    def ancestors(self, name: str) -> set[str]:
        return _reach(name, self.parents)

    def descendants(self, name: str) -> set[str]:
        return _reach(name, self.children)

    def with_role(self, role: str) -> tuple[str, ...]:
        return tuple(n.name for n in self.nodes if n.role == role)

    @property
    def is_linear(self) -> bool:
        return all(e.coefficient is not None for e in self.edges)

    def without_edge(self, source: str, target: str) -> "CausalGraph":
        edges = tuple(e for e in self.edges if not (e.source == source and e.target == target))
        return CausalGraph(self.nodes, edges)

    def topological_order(self) -> list[str]:
        indeg = {n: 0 for n in self.names}
        for e in self.edges:
            indeg[e.target] += 1
        queue = deque(n for n in self.names if indeg[n] == 0)
        order = []
        while queue:
            n = queue.popleft()
            order.append(n)
            for c in self.children(n):
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        if len(order) != len(indeg):
            raise StructureError("graph contains a cycle")
        return order

    def to_text(self) -> str:
        lines = []
        for n in self.nodes:
            parts = ["node", n.name, f"role={n.role}"]
            if n.latent:
                parts.append("latent")
            if n.conditioned:
                parts.append("conditioned")
            if n.variance is not None:
                parts.append(f"var={n.variance!r}")
            lines.append(" ".join(parts))
        for e in self.edges:
            parts = ["edge", e.source, "->", e.target]
            if e.coefficient is not None:
                parts.append(f"coef={e.coefficient!r}")
            lines.append(" ".join(parts))
        return "\n".join(lines) + "\n"


def _reach(start: str, step) -> set[str]:
    seen: set[str] = set()
    stack = list(step(start))
    while stack:
        n = stack.pop()
        if n not in seen:
            seen.add(n)
            stack.extend(step(n))
    return seen


# -- validation --------------------------------------------------------------


def validate(graph: CausalGraph) -> list[str]:
    """Return a list of violations; an empty list means the graph is valid."""
    problems = []
    seen = set()
    for n in graph.nodes:
        if n.name in seen:
            problems.append(f"duplicate node: {n.name}")
        seen.add(n.name)
        if n.role not in ROLES:
            problems.append(f"invalid role for {n.name}: {n.role}")
        if n.variance is not None and not n.variance > 0:
            problems.append(f"non-positive variance for {n.name}: {n.variance}")
    for e in graph.edges:
        for end in (e.source, e.target):
            if end not in seen:
                problems.append(f"dangling edge: {e.source} -> {e.target} references undeclared node {end}")
    outcomes = graph.with_role("outcome")
    if len(outcomes) > 1:
        problems.append(f"multiple outcome nodes: {', '.join(outcomes)}")
    annotated = [e.coefficient is not None for e in graph.edges]
    if any(annotated) and not all(annotated):
        problems.append("mixed coefficient annotation: some edges carry coefficients and some do not")
    if not any(p.startswith("dangling") for p in problems):
        cycle = _find_cycle(graph)
        if cycle:
            problems.append("cycle: " + " -> ".join(cycle))
    return problems


def _find_cycle(graph: CausalGraph) -> list[str] | None:
    color = {n: 0 for n in graph.names}
    stack: list[str] = []

    def visit(n):
        color[n] = 1
        stack.append(n)
        for c in graph.children(n):
            if color.get(c) == 1:
                return stack[stack.index(c):] + [c]
            if color.get(c) == 0:
                found = visit(c)
                if found:
                    return found
        stack.pop()
        color[n] = 2
        return None

    for n in graph.names:
        if color[n] == 0:
            found = visit(n)
            if found:
                return found
    return None


def _check_names(graph: CausalGraph, *names: str) -> None:
    for n in names:
        graph.node(n)


# -- d-separation ------------------------------------------------------------


def d_separated(graph: CausalGraph, x: str, y: str, given: Iterable[str] = ()) -> bool:
    """True iff every path between ``x`` and ``y`` is blocked by ``given``.

    Reachability ("Bayes-ball") formulation: a collider passes the ball when it
    or one of its descendants is conditioned on.
    """
    given = set(given)
    _check_names(graph, x, y, *given)
    if x == y:
        raise ValueError("x and y must differ")
    if x in given or y in given:
        raise ValueError("x and y must not be in the conditioning set")

    # Nodes that are in `given` or have a descendant in it.
    opened = set(given)
    for g in given:
        opened |= graph.ancestors(g)

    visited = set()
    queue = deque([(x, "up")])
    while queue:
        node, direction = queue.popleft()
        if (node, direction) in visited:
            continue
        visited.add((node, direction))
        if node == y:
            return False
        if direction == "up":
            if node in given:
                continue
            queue.extend((p, "up") for p in graph.parents(node))
            queue.extend((c, "down") for c in graph.children(node))
        else:
            if node not in given:
                queue.extend((c, "down") for c in graph.children(node))
            if node in opened:
                queue.extend((p, "up") for p in graph.parents(node))
    return True


# -- Wright's path rule ------------------------------------------------------


def _require_linear(graph: CausalGraph) -> None:
    if not graph.is_linear:
        raise StructureError("Wright's rule needs a coefficient on every edge")
    if len(graph.nodes) > MAX_PATH_NODES:
        raise StructureError(f"path enumeration is limited to {MAX_PATH_NODES} nodes")


def open_paths(graph: CausalGraph, x: str, y: str) -> list[list[str]]:
    """Simple paths between ``x`` and ``y`` that contain no collider."""
    adjacency: dict[str, list[tuple[str, bool]]] = {n: [] for n in graph.names}
    for e in graph.edges:
        adjacency[e.source].append((e.target, True))  # forward: source -> target
        adjacency[e.target].append((e.source, False))
    paths = []

    def extend(path, arrows):
        node = path[-1]
        if node == y:
            paths.append(list(path))
            return
        for nxt, forward in adjacency[node]:
            if nxt in path:
                continue
            # Arrow into `node` followed by arrow out of `node` back into it
            # makes `node` a collider: prev -> node <- nxt.
            if arrows and arrows[-1] and not forward:
                continue
            path.append(nxt)
            arrows.append(forward)
            extend(path, arrows)
            path.pop()
            arrows.pop()

    extend([x], [])
    return paths


def _path_root(graph: CausalGraph, path: list[str]) -> str:
    for i, n in enumerate(path):
        incoming_left = i > 0 and path[i - 1] in graph.parents(n)
        incoming_right = i < len(path) - 1 and path[i + 1] in graph.parents(n)
        if not incoming_left and not incoming_right:
            return n
    raise AssertionError("collider-free path without a root")


@lru_cache(maxsize=4096)
def wright_variance(graph: CausalGraph, node: str) -> float:
    """Total variance of ``node`` implied by the linear model."""
    _require_linear(graph)
    own = graph.node(node).variance
    total = 1.0 if own is None else own
    parents = graph.parents(node)
    for p in parents:
        for q in parents:
            bp, bq = graph.coefficient(p, node), graph.coefficient(q, node)
            cov = wright_variance(graph, p) if p == q else wright_covariance(graph, p, q)
            total += bp * bq * cov
    return total


@lru_cache(maxsize=4096)
def wright_covariance(graph: CausalGraph, x: str, y: str) -> float:
    """Model-implied covariance of ``x`` and ``y``.

    Sum over collider-free paths of the product of edge coefficients, each
    weighted by the total variance of the path's root variable.
    """
    _check_names(graph, x, y)
    if x == y:
        raise ValueError("x and y must differ; use wright_variance")
    _require_linear(graph)
    total = 0.0
    for path in open_paths(graph, x, y):
        prod = 1.0
        for u, v in zip(path, path[1:]):
            coef = graph.coefficient(u, v) if v in graph.children(u) else graph.coefficient(v, u)
            prod *= coef
        total += prod * wright_variance(graph, _path_root(graph, path))
    return total


def wright_cov_matrix(graph: CausalGraph, names: Iterable[str] | None = None):
    """Covariance matrix over ``names`` (all nodes by default) via Wright's rule."""
    import numpy as np

    names = list(graph.names if names is None else names)
    k = len(names)
    out = np.empty((k, k))
    for i, u in enumerate(names):
        out[i, i] = wright_variance(graph, u)
        for j in range(i + 1, k):
            out[i, j] = out[j, i] = wright_covariance(graph, u, names[j])
    return names, out


# -- structure classification ------------------------------------------------


def classify_structure(graph: CausalGraph, a: str, y: str) -> StructureTags:
    """Tag confounders, selection colliders, proxies and second sensitive variables."""
    _check_names(graph, a, y)
    if graph.node(a).role != "sensitive":
        raise StructureError(f"{a} does not have role 'sensitive'")
    if graph.node(y).role != "outcome":
        raise StructureError(f"{y} does not have role 'outcome'")

    anc_a = graph.ancestors(a)
    no_a = CausalGraph(graph.nodes, tuple(e for e in graph.edges if a not in (e.source, e.target)))
    confounders, latent = [], []
    for n in graph.names:
        if n in (a, y) or n not in anc_a:
            continue
        if y in no_a.descendants(n):
            (latent if graph.node(n).latent else confounders).append(n)

    desc_both = graph.descendants(a) & graph.descendants(y)
    colliders = [n for n in graph.names if n in desc_both and graph.node(n).conditioned]

    latent_set = set(latent)
    proxies = [
        n.name
        for n in graph.nodes
        if n.role == "proxy" and latent_set.intersection(graph.parents(n.name))
    ]
    second = [n for n in graph.with_role("sensitive") if n != a]
    return StructureTags(tuple(confounders), tuple(latent), tuple(colliders), tuple(proxies), tuple(second))


# -- text format -------------------------------------------------------------

_NAME = r"[A-Za-z_][A-Za-z0-9_.\-]*"
_NODE_RE = re.compile(rf"^node\s+({_NAME})((?:\s+\S+)*)$")
_EDGE_RE = re.compile(rf"^edge\s+({_NAME})\s*->\s*({_NAME})((?:\s+\S+)*)$")


def _float(value: str, what: str, lineno: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise GraphParseError(f"invalid {what} value {value!r}", lineno) from None


def parse_graph(text: str) -> CausalGraph:
    """Parse the line-based graph format.

    ::

        node <name> role=<sensitive|outcome|covariate|proxy> [latent] [conditioned] [var=<float>]
        edge <from> -> <to> [coef=<float>]

    ``#`` starts a comment. Syntax errors raise :class:`GraphParseError` with
    the offending line number; structural problems are left to :func:`validate`.
    """
    nodes, edges = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _NODE_RE.match(line)
        if m:
            name, opts = m.group(1), m.group(2).split()
            role, latent, conditioned, var = None, False, False, None
            for opt in opts:
                if opt.startswith("role="):
                    role = opt[5:]
                    if role not in ROLES:
                        raise GraphParseError(f"unknown role {role!r}", lineno)
                elif opt == "latent":
                    latent = True
                elif opt == "conditioned":
                    conditioned = True
                elif opt.startswith("var="):
                    var = _float(opt[4:], "var", lineno)
                else:
                    raise GraphParseError(f"unknown node option {opt!r}", lineno)
            if role is None:
                raise GraphParseError(f"node {name} is missing role=", lineno)
            nodes.append(Node(name, role, latent, conditioned, var))
            continue
        m = _EDGE_RE.match(line)
        if m:
            src, dst, opts = m.group(1), m.group(2), m.group(3).split()
            coef = None
            for opt in opts:
                if opt.startswith("coef="):
                    coef = _float(opt[5:], "coef", lineno)
                else:
                    raise GraphParseError(f"unknown edge option {opt!r}", lineno)
            edges.append(Edge(src, dst, coef))
            continue
        raise GraphParseError(f"cannot parse {raw.strip()!r}", lineno)
    return CausalGraph(tuple(nodes), tuple(edges))


def load_graph(path: str | Path) -> CausalGraph:
    """Parse a graph file and reject it unless :func:`validate` finds nothing."""
    graph = parse_graph(Path(path).read_text(encoding="utf-8"))
    problems = validate(graph)
    if problems:
        raise GraphParseError("invalid graph: " + "; ".join(problems))
    return graph

"""Separation in AMP chain graphs, with optional deterministic nodes.

A path is checked node by node while it is being grown, so closed prefixes
are pruned early; the search is still an enumeration of simple paths and is
bounded by ``budget`` extensions.
"""
from __future__ import annotations

from typing import Callable

from .graph import ChainGraph, GraphError

DEFAULT_BUDGET = 2_000_000

IDENTITY = "identity"
EAMP = "eamp"


class SeparationBudgetExceeded(RuntimeError):
    pass


def _identity_rule(graph: ChainGraph, Z: set[str]) -> set[str]:
    return set(Z)


def _eamp_rule(graph: ChainGraph, Z: set[str]) -> set[str]:
    # An error node E_X is determined iff X and its non-error parents are in Z.
    if not graph.roles:
        raise GraphError("the eamp rule needs a graph with tagged error nodes")
    D = set(Z)
    for err, x in graph.roles.items():
        source_parents = set(graph.parents(x)) - {err}
        if x in Z and source_parents <= Z:
            D.add(err)
    return D


RULES: dict[str, Callable[[ChainGraph, set[str]], set[str]]] = {
    IDENTITY: _identity_rule,
    EAMP: _eamp_rule,
}


def _rule(rule) -> Callable:
    if callable(rule):
        return rule
    try:
        return RULES[rule]
    except KeyError:
        raise ValueError(f"unknown determination rule {rule!r}") from None


def determined_set(graph: ChainGraph, Z, rule=IDENTITY) -> tuple[str, ...]:
    """Nodes determined by ``Z`` under ``rule`` (always a superset of Z)."""
    return graph.sort(_rule(rule)(graph, graph.nodeset(Z)))


def _is_triplex(into: str | None, out: str | None) -> bool:
    # ``into`` is the edge (prev, B) seen from prev, ``out`` the edge (B, next) seen from B.
    return ((into == "->" and out == "<-")
            or (into == "->" and out == "-")
            or (into == "-" and out == "<-"))


def is_triplex(graph: ChainGraph, path, position: int) -> bool:
    """True iff ``path[position]`` is a triplex node of ``path``."""
    if position <= 0 or position >= len(path) - 1:
        raise ValueError("triplex status is defined for interior path nodes only")
    a, b, c = path[position - 1], path[position], path[position + 1]
    return _is_triplex(graph.edge(a, b), graph.edge(b, c))


class _Openness:
    """Precomputed per-query data for the two openness clauses."""

    def __init__(self, graph: ChainGraph, Z, rule):
        self.graph = graph
        self.D = _rule(rule)(graph, graph.nodeset(Z))
        self.active_triplex = self.D | set(graph.strict_ascendants(self.D))
        self.parent_escape = {v for v in graph.variables if set(graph.parents(v)) - self.D}

    def node_open(self, a: str, b: str, c: str) -> bool:
        into, out = self.graph.edge(a, b), self.graph.edge(b, c)
        if _is_triplex(into, out):
            return b in self.active_triplex
        if b not in self.D:
            return True
        return into == "-" and out == "-" and b in self.parent_escape


def is_z_open(graph: ChainGraph, path, Z=(), rule=IDENTITY) -> bool:
    path = list(path)
    for a, b in zip(path, path[1:]):
        if graph.edge(a, b) is None:
            raise GraphError(f"{a} and {b} are not adjacent")
    if len(set(path)) != len(path):
        raise GraphError("a path may not repeat nodes")
    check = _Openness(graph, Z, rule)
    return all(check.node_open(*path[i - 1:i + 2]) for i in range(1, len(path) - 1))


def find_open_path(graph: ChainGraph, X, Y, Z=(), rule=IDENTITY,
                   budget: int = DEFAULT_BUDGET) -> tuple[str, ...] | None:
    """Return one Z-open path between X and Y, or None if X and Y are separated.

    Paths are only grown through nodes outside X and Y: any open path that
    visits another X or Y node has an open sub-path between those nodes.
    """
    X, Y, Z = graph.nodeset(X), graph.nodeset(Y), graph.nodeset(Z)
    if X & Y or X & Z or Y & Z:
        raise ValueError("X, Y and Z must be pairwise disjoint")
    if not X or not Y:
        return None
    check = _Openness(graph, Z, rule)
    adj = {v: graph.sort(graph.adjacents(v)) for v in graph.variables}
    blocked = X | Y
    steps = 0

    def grow(path, on_path):
        nonlocal steps
        last = path[-1]
        for nxt in adj[last]:
            if nxt in on_path:
                continue
            steps += 1
            if steps > budget:
                raise SeparationBudgetExceeded(f"more than {budget} path extensions")
            if len(path) >= 2 and not check.node_open(path[-2], last, nxt):
                continue
            if nxt in Y:
                return path + [nxt]
            if nxt in blocked:
                continue
            on_path.add(nxt)
            found = grow(path + [nxt], on_path)
            on_path.discard(nxt)
            if found:
                return found
        return None

    for x in graph.sort(X):
        found = grow([x], {x})
        if found:
            return tuple(found)
    return None


def separated(graph: ChainGraph, X, Y, Z=(), rule=IDENTITY, budget: int = DEFAULT_BUDGET) -> bool:
    """X is separated from Y given Z iff no simple path between them is open."""
    return find_open_path(graph, X, Y, Z, rule, budget) is None

"""Brute-force reference implementations.

Only the raw data held by :class:`ChainGraph` and :class:`Factor` is used
here (node lists, edge sets, scopes and value arrays); every algorithm is
recoded from scratch so agreement with the main modules is real evidence.
"""
from __future__ import annotations

import itertools

import numpy as np

from .factor import Factor
from .graph import ChainGraph

MAX_CELLS = 2 ** 22
MAX_MARKOV_NODES = 6


class OracleError(ValueError):
    pass


# -- tables -------------------------------------------------------------------------

def _expand(values: np.ndarray, scope, order) -> np.ndarray:
    """``values`` over ``scope`` broadcast against the axis list ``order``."""
    scope = list(scope)
    perm = [scope.index(v) for v in order if v in scope]
    arr = np.transpose(values, perm)
    shape = []
    it = iter(arr.shape)
    for v in order:
        shape.append(next(it) if v in scope else 1)
    return arr.reshape(shape)


def full_joint(source, variables=None) -> tuple[list[str], np.ndarray]:
    """Normalized joint array from a joint factor or anything with ``factor_list()``."""
    if isinstance(source, Factor):
        factors = [source]
    elif hasattr(source, "factor_list"):
        factors = source.factor_list()
    else:
        factors = list(source)
    cards = {}
    for f in factors:
        cards.update(zip(f.scope, f.cards))
    if variables is None and hasattr(source, "graph"):
        variables = list(source.graph.variables)
        cards.update(source.graph.cards)
    variables = list(variables or cards)
    size = int(np.prod([cards[v] for v in variables], dtype=np.int64))
    if size > MAX_CELLS:
        raise OracleError(f"joint has {size} cells, more than {MAX_CELLS}")
    joint = np.ones([cards[v] for v in variables])
    for f in factors:
        joint = joint * _expand(np.asarray(f.values, dtype=float), f.scope, variables)
    total = joint.sum()
    if total <= 0:
        raise OracleError("the joint has no mass")
    return variables, joint / total


def enum_infer(source, targets, evidence=None) -> Factor:
    """``p(targets | evidence)`` by summing the explicit joint table."""
    variables, joint = full_joint(source)
    evidence = dict(evidence or {})
    index = []
    for v in variables:
        index.append(evidence[v] if v in evidence else slice(None))
    mask = np.zeros(joint.shape, dtype=bool)
    mask[tuple(index)] = True
    reduced = np.where(mask, joint, 0.0)
    targets = list(targets)
    keep = [variables.index(v) for v in targets]
    drop = tuple(i for i in range(len(variables)) if i not in keep)
    table = reduced.sum(axis=drop)
    kept_order = sorted(keep)
    table = np.transpose(table, [kept_order.index(i) for i in keep])
    total = table.sum()
    if total <= 0:
        raise OracleError("impossible evidence")
    return Factor(targets, table.shape, table / total)


# -- separation ---------------------------------------------------------------------

class _Graph:
    def __init__(self, graph: ChainGraph):
        self.nodes = list(graph.variables)
        self.arrows = {(a, b) for a, b in graph.directed}
        self.lines = {frozenset(e) for e in graph.undirected}
        self.roles = dict(graph.roles or {})

    def edge(self, a, b):
        if (a, b) in self.arrows:
            return "->"
        if (b, a) in self.arrows:
            return "<-"
        if frozenset((a, b)) in self.lines:
            return "-"
        return None

    def adjacent(self, a):
        return [b for b in self.nodes if b != a and self.edge(a, b)]

    def parents(self, b):
        return {a for a in self.nodes if (a, b) in self.arrows}

    def strict_ascendants(self, S):
        out, stack = set(), list(S)
        while stack:
            b = stack.pop()
            for a in self.parents(b):
                if a not in out:
                    out.add(a)
                    stack.append(a)
        return out - set(S)

    def determined(self, Z, rule):
        Z = set(Z)
        if callable(rule):
            return set(rule(None, Z)) if rule.__code__.co_argcount == 2 else set(rule(Z))
        if rule == "identity":
            return Z
        if rule == "eamp":
            D = set(Z)
            for e, x in self.roles.items():
                if x in Z and (self.parents(x) - {e}) <= Z:
                    D.add(e)
            return D
        raise OracleError(f"unknown rule {rule!r}")


def _path_open(g: _Graph, path, D, act) -> bool:
    for i in range(1, len(path) - 1):
        a, b, c = path[i - 1], path[i], path[i + 1]
        left, right = g.edge(a, b), g.edge(b, c)
        triplex = (left, right) in {("->", "<-"), ("->", "-"), ("-", "<-")}
        if triplex:
            if b not in act:
                return False
        elif b in D:
            if not (left == "-" and right == "-" and g.parents(b) - D):
                return False
    return True


def path_oracle(graph: ChainGraph, X, Y, Z=(), rule="identity") -> bool:
    """True iff X and Y are separated given Z: every simple path between a
    node of X and a node of Y is checked in full."""
    g = _Graph(graph)
    X, Y, Z = set(X), set(Y), set(Z)
    D = g.determined(Z, rule)
    act = D | g.strict_ascendants(D)

    def walk(path):
        last = path[-1]
        if len(path) > 1 and last in Y:
            if _path_open(g, path, D, act):
                return True
        for nxt in g.adjacent(last):
            if nxt not in path and walk(path + [nxt]):
                return True
        return False

    return not any(walk([x]) for x in sorted(X))


# -- independence ---------------------------------------------------------------------

def independence_gap(p: Factor, X, Y, Z=()) -> float:
    """max |p(x,y,z) p(z) - p(x,z) p(y,z)| normalized by p(z), over positive z."""
    variables = list(p.scope)
    arr = np.asarray(p.values, dtype=float)
    X, Y, Z = list(X), list(Y), list(Z)
    keep = Z + X + Y
    drop = tuple(i for i, v in enumerate(variables) if v not in keep)
    m = arr.sum(axis=drop)
    rest = [v for v in variables if v in keep]
    m = np.transpose(m, [rest.index(v) for v in keep])
    cards = dict(zip(p.scope, p.cards))
    nz = int(np.prod([cards[v] for v in Z], dtype=np.int64))
    nx = int(np.prod([cards[v] for v in X], dtype=np.int64))
    ny = int(np.prod([cards[v] for v in Y], dtype=np.int64))
    t = m.reshape(nz, nx, ny)
    worst = 0.0
    for k in range(nz):
        s = t[k].sum()
        if s <= 0:
            continue
        c = t[k] / s
        worst = max(worst, float(np.max(np.abs(c - np.outer(c.sum(axis=1), c.sum(axis=0))))))
    return worst


def is_markovian(p: Factor, graph: ChainGraph, tol: float = 1e-9, rule="identity",
                 max_nodes: int = MAX_MARKOV_NODES):
    """``(ok, violations)``: every separation over all disjoint triples must
    hold numerically in ``p``.  Violations are ``(X, Y, Z, gap)``."""
    nodes = [v for v in graph.variables if v in p.scope]
    if len(nodes) > max_nodes:
        raise OracleError(f"{len(nodes)} nodes exceed the limit {max_nodes}")
    violations = []
    for labels in itertools.product(range(4), repeat=len(nodes)):
        X = [v for v, l in zip(nodes, labels) if l == 1]
        Y = [v for v, l in zip(nodes, labels) if l == 2]
        Z = [v for v, l in zip(nodes, labels) if l == 3]
        if not X or not Y or X[0] > Y[0]:
            continue
        if path_oracle(graph, X, Y, Z, rule):
            gap = independence_gap(p, X, Y, Z)
            if gap > tol:
                violations.append((tuple(X), tuple(Y), tuple(Z), gap))
    return not violations, violations


# -- classical IPF -----------------------------------------------------------------------

def classical_ipf(margins, tol: float = 1e-10, max_iter: int = 10_000) -> Factor:
    """Cyclic margin matching on the full joint table, from the uniform table."""
    margins = list(margins)
    cards = {}
    for m in margins:
        for v, c in zip(m.scope, m.cards):
            if cards.setdefault(v, c) != c:
                raise OracleError(f"cardinality clash on {v!r}")
    variables = list(cards)
    targets = [np.asarray(m.values, float) / np.asarray(m.values, float).sum() for m in margins]
    for (m1, t1), (m2, t2) in itertools.combinations(zip(margins, targets), 2):
        shared = [v for v in m1.scope if v in m2.scope]
        a = _margin(t1, list(m1.scope), shared)
        b = _margin(t2, list(m2.scope), shared)
        if np.max(np.abs(a - b)) > 1e-9:
            raise OracleError("inconsistent margins")
    joint = np.full([cards[v] for v in variables], 1.0 / np.prod(list(cards.values())))
    for _ in range(max_iter):
        worst = 0.0
        for m, t in zip(margins, targets):
            cur = _margin(joint, variables, list(m.scope))
            worst = max(worst, float(np.max(np.abs(cur - t))))
            ratio = np.divide(t, cur, out=np.zeros_like(t), where=cur > 0)
            joint = joint * _expand(ratio, m.scope, variables)
        if worst <= tol:
            break
    return Factor(variables, joint.shape, joint)


def _margin(arr, scope, keep):
    drop = tuple(i for i, v in enumerate(scope) if v not in keep)
    m = arr.sum(axis=drop)
    rest = [v for v in scope if v in keep]
    return np.transpose(m, [rest.index(v) for v in keep])

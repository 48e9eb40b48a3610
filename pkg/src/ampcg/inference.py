"""Exact inference by moralization, triangulation and clique-tree propagation."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np

from .factor import Factor, FactorError, assignments
from .factorization import FactorizedModel
from .graph import ChainGraph, cliques, require_valid

MAX_TARGET_ASSIGNMENTS = 2 ** 20


class InferenceError(RuntimeError):
    pass


class ImpossibleEvidence(InferenceError):
    pass


# -- moral graph -----------------------------------------------------------------

def moralize(graph: ChainGraph) -> ChainGraph:
    """Undirected moral graph.

    For every component ``C`` and clique ``K`` of ``G_C`` the set
    ``K + Pa(K)`` is made complete; then all directions are dropped.
    """
    require_valid(graph)
    edges = {frozenset(e) for e in graph.directed} | set(graph.undirected)
    for C in graph.components():
        for K in cliques(graph.induced(C)):
            pa = graph.parents(K)
            edges.update(frozenset((x, y)) for x in pa for y in K)
            edges.update(frozenset(e) for e in itertools.combinations(pa, 2))
    return ChainGraph(graph.variables, (), [tuple(graph.sort(e)) for e in edges], graph.cards)


def moral_containment(graph: ChainGraph, moral: ChainGraph) -> bool:
    """True iff every ``K + Pa(K)`` (``K`` a clique of some ``G_C``) is complete in ``moral``."""
    for C in graph.components():
        for K in cliques(graph.induced(C)):
            scope = K + graph.parents(K)
            if any(moral.edge(a, b) is None for a, b in itertools.combinations(scope, 2)):
                return False
    return True


# -- triangulation -------------------------------------------------------------

@dataclass
class JunctionTree:
    """Ordered cliques with separators, residuals and (optional) potentials.

    ``parent[j]`` is the lowest-index earlier clique containing ``S_j``; it
    receives the message of clique ``j``.  ``mass`` is the total unnormalized
    mass seen by the last propagation.
    """
    variables: tuple[str, ...]
    cards: dict[str, int]
    cliques: list[tuple[str, ...]]
    separators: list[tuple[str, ...]]
    residuals: list[tuple[str, ...]]
    parent: list[int | None]
    fill_ins: list[tuple[str, str]] = field(default_factory=list)
    passes: int = 1
    potentials: list[Factor] | None = None
    conditionals: list[Factor] | None = None
    marginals: list[Factor] | None = None
    mass: float | None = None
    evidence: dict[str, int] = field(default_factory=dict)

    @property
    def calibrated(self) -> bool:
        return self.marginals is not None

    def __len__(self):
        return len(self.cliques)

    def home(self, scope) -> int | None:
        """Lowest-index clique containing ``scope``."""
        s = set(scope)
        return next((i for i, Q in enumerate(self.cliques) if s <= set(Q)), None)

    def marginal(self, scope) -> Factor:
        if not self.calibrated:
            raise InferenceError("the tree is not calibrated")
        i = self.home(scope)
        if i is None:
            raise InferenceError(f"no clique contains {tuple(scope)}")
        return self.marginals[i].marginalize(list(scope))

    def clique_masses(self) -> list[float]:
        """Unnormalized mass of every calibrated clique (all equal for a consistent tree)."""
        return [self.mass * m.total() for m in self.marginals]

    def describe(self) -> dict:
        return {
            "cliques": [list(Q) for Q in self.cliques],
            "separators": [list(S) for S in self.separators],
            "residuals": [list(R) for R in self.residuals],
            "parent": self.parent,
            "fill_ins": [list(e) for e in self.fill_ins],
        }


def _marking_pass(order, adj):
    """One run of the marking procedure; mutates ``adj`` with fill-ins."""
    rank = {v: i for i, v in enumerate(order)}
    marked: dict[str, int] = {}
    candidates, fill = [], []
    for it in range(1, len(order) + 1):
        best = min((v for v in order if v not in marked),
                   key=lambda v: (-len(adj[v].keys() & marked.keys()), rank[v]))
        nbrs = sorted(adj[best].keys() & marked.keys(), key=rank.get)
        for a, b in itertools.combinations(nbrs, 2):
            if b not in adj[a]:
                adj[a][b] = adj[b][a] = True
                fill.append((a, b))
        marked[best] = it
        candidates.append(tuple(sorted([best, *nbrs], key=rank.get)))
    return candidates, marked, fill


def is_triangulated(ug: ChainGraph) -> bool:
    """Chordality by repeated removal of simplicial nodes."""
    adj = {v: set(ug.neighbours(v)) for v in ug.variables}
    while adj:
        simp = next((v for v, nb in adj.items()
                     if all(b in adj[a] for a, b in itertools.combinations(nb, 2))), None)
        if simp is None:
            return False
        for u in adj.pop(simp):
            adj[u].discard(simp)
    return True


def has_rip(cliques_: list[tuple[str, ...]]) -> bool:
    seen: set[str] = set()
    for j, Q in enumerate(cliques_):
        S = set(Q) & seen
        if j > 0 and not any(S <= set(P) for P in cliques_[:j]):
            return False
        seen |= set(Q)
    return True


def triangulate_and_order(moral: ChainGraph) -> JunctionTree:
    """Triangulate ``moral`` with the marking procedure and order its cliques.

    Ties among candidate nodes go to the lowest declaration index.  The
    marking pass is repeated on the filled graph until it adds no edge: a
    pass that adds fill-in can save candidates that are not cliques of the
    final graph (a 4-cycle already shows this).
    """
    order = moral.variables
    adj = {v: dict.fromkeys(moral.neighbours(v), True) for v in order}
    fill_all = []
    passes = 0
    while True:
        passes += 1
        candidates, marked, fill = _marking_pass(order, adj)
        fill_all.extend(fill)
        if not fill:
            break
    sets = [set(c) for c in candidates]
    kept = [c for i, c in enumerate(candidates)
            if not any(sets[i] < sets[j] or (sets[i] == sets[j] and j < i)
                       for j in range(len(candidates)) if j != i)]
    labels = [max(marked[v] for v in c) for c in kept]
    ordered = [c for _, c in sorted(zip(labels, kept), key=lambda t: t[0])]

    filled = ChainGraph(order, (), [e for v in order for e in ((v, u) for u in adj[v]) if e[0] < e[1]])
    if not is_triangulated(filled):
        raise InferenceError("marking procedure left an untriangulated graph")
    if not has_rip(ordered):
        raise InferenceError("clique ordering violates the running intersection property")
    if {frozenset(Q) for Q in ordered} != {frozenset(Q) for Q in cliques(filled)}:
        raise InferenceError("candidate cliques differ from the cliques of the filled graph")

    seps, res, parent = [], [], []
    seen: set[str] = set()
    for j, Q in enumerate(ordered):
        S = tuple(v for v in Q if v in seen)
        seps.append(S)
        res.append(tuple(v for v in Q if v not in seen))
        parent.append(None if j == 0 else next(i for i in range(j) if set(S) <= set(ordered[i])))
        seen |= set(Q)
    return JunctionTree(order, dict(moral.cards), ordered, seps, res, parent,
                        fill_ins=fill_all, passes=passes)


def build_tree(graph: ChainGraph) -> JunctionTree:
    return triangulate_and_order(moralize(graph))


def tree_for_factors(graph: ChainGraph, factors) -> JunctionTree:
    """Tree for an arbitrary factor list: the moral graph with every factor
    scope made complete as well."""
    moral = moralize(graph)
    edges = set(moral.sorted_undirected())
    for f in _factors_of(factors):
        edges.update(tuple(graph.sort(e)) for e in itertools.combinations(f.scope, 2))
    return triangulate_and_order(ChainGraph(graph.variables, (), sorted(edges), graph.cards))


# -- potentials and propagation ----------------------------------------------------

def _factors_of(model) -> list[Factor]:
    if model is None:
        return []
    if isinstance(model, FactorizedModel):
        return model.factor_list()
    return list(model)


def assign_factors(tree: JunctionTree, model) -> JunctionTree:
    """Multiply each factor into the first clique containing its scope.

    ``model`` is a :class:`FactorizedModel` or any iterable of factors.
    """
    pots = [Factor.unit(Q, [tree.cards[v] for v in Q]) for Q in tree.cliques]
    for f in _factors_of(model):
        i = tree.home(f.scope)
        if i is None:
            raise InferenceError(f"no clique contains factor scope {f.scope}")
        pots[i] = pots[i].product(f)
    pots = [p.reorder(Q) for p, Q in zip(pots, tree.cliques)]
    return replace(tree, potentials=pots, conditionals=None, marginals=None, mass=None, evidence={})


def _check_evidence(tree: JunctionTree, evidence: Mapping[str, int]) -> dict[str, int]:
    ev = {}
    for v, s in (evidence or {}).items():
        if v not in tree.cards:
            raise InferenceError(f"unknown evidence variable {v!r}")
        s = int(s)
        if not 0 <= s < tree.cards[v]:
            raise InferenceError(f"state {s} out of range for {v!r}")
        ev[v] = s
    return ev


def propagate(tree: JunctionTree, evidence: Mapping[str, int] | None = None) -> JunctionTree:
    """Backward then forward pass; returns a calibrated copy of ``tree``.

    Evidence zeroes inconsistent entries of the potentials.  The marginals of
    the result are conditional on the evidence; ``mass`` is the unnormalized
    total, so ratios of masses give evidence probabilities.
    """
    if tree.potentials is None:
        raise InferenceError("assign factors before propagating")
    ev = _check_evidence(tree, evidence)
    phi = [p.reduce(ev) if ev else p for p in tree.potentials]
    n = len(tree.cliques)
    cond: list[Factor | None] = [None] * n
    for i in range(n - 1, 0, -1):
        msg = phi[i].marginalize(tree.separators[i])
        if not ev and np.any(msg.values == 0):
            raise InferenceError("zero message without evidence: the model is not positive")
        try:
            cond[i] = phi[i].divide(msg)
        except FactorError as exc:
            raise InferenceError(str(exc)) from None
        j = tree.parent[i]
        phi[j] = phi[j].product(msg).reorder(tree.cliques[j])
    mass = phi[0].total()
    if mass <= 0:
        raise ImpossibleEvidence("impossible evidence: probability zero")
    marg: list[Factor] = [phi[0].normalize()]
    cond[0] = marg[0]
    for i in range(1, n):
        p_sep = marg[tree.parent[i]].marginalize(tree.separators[i])
        marg.append(cond[i].product(p_sep).reorder(tree.cliques[i]))
    return replace(tree, conditionals=cond, marginals=marg, mass=mass, evidence=ev)


def _compiled(tree: JunctionTree | None, model) -> JunctionTree:
    if tree is None:
        if not isinstance(model, FactorizedModel):
            raise InferenceError("a tree is needed when the model is a plain factor list")
        tree = build_tree(model.graph)
    if model is not None:
        tree = assign_factors(tree, model)
    elif tree.potentials is None:
        raise InferenceError("no potentials: pass a model")
    return tree


def query(tree: JunctionTree | None, model, targets: Iterable[str],
          evidence: Mapping[str, int] | None = None) -> Factor:
    """``p(targets | evidence)`` as a normalized factor over ``targets``.

    Targets inside one clique are read off the calibrated tree; otherwise
    every target assignment is added to the evidence and the resulting
    masses are normalized.
    """
    tree = _compiled(tree, model)
    targets = list(dict.fromkeys(targets))
    for v in targets:
        if v not in tree.cards:
            raise InferenceError(f"unknown target {v!r}")
    base = propagate(tree, evidence)
    if tree.home(targets) is not None:
        return base.marginal(targets).normalize()
    cards = [tree.cards[v] for v in targets]
    n = int(np.prod(cards, dtype=np.int64))
    if n > MAX_TARGET_ASSIGNMENTS:
        raise InferenceError(f"{n} target assignments exceed the limit {MAX_TARGET_ASSIGNMENTS}")
    ev = dict(base.evidence)
    values = np.zeros(n)
    for k, states in enumerate(assignments(targets, cards)):
        if any(ev.get(v, s) != s for v, s in states.items()):
            continue
        joint_ev = {**ev, **states}
        try:
            values[k] = propagate(tree, joint_ev).mass
        except ImpossibleEvidence:
            values[k] = 0.0
    return Factor(targets, cards, values / values.sum())


def probability_of_evidence(tree: JunctionTree | None, model,
                            evidence: Mapping[str, int] | None = None) -> float:
    """``p(o)``: mass with evidence over mass without."""
    tree = _compiled(tree, model)
    free = propagate(tree).mass
    if not evidence:
        return 1.0
    try:
        return propagate(tree, evidence).mass / free
    except ImpossibleEvidence:
        return 0.0


def clique_marginals(model: FactorizedModel, evidence=None) -> JunctionTree:
    """Convenience: build, assign and propagate in one call."""
    return propagate(assign_factors(build_tree(model.graph), model), evidence)

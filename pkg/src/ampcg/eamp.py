"""Error AMP chain graphs.

Every node ``X`` gets a binary error node ``E_X`` with ``E_X -> X``; the
undirected edges of the source graph move to the error nodes.  When
``E_X = 0`` the parents of ``X`` force the distinguished state, otherwise
``X`` follows a fallback conditional that avoids it.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .factor import Factor, FactorError, conditional, product
from .factorization import FactorizedModel, clique_factors, factorize, generate_markovian
from .graph import ChainGraph, GraphError, cliques, require_valid
from .separation import EAMP, IDENTITY, DEFAULT_BUDGET, separated

ERROR_PREFIX = "E_"


# -- graph transformation ------------------------------------------------------

def to_eamp(graph: ChainGraph) -> ChainGraph:
    """The error graph ``H`` over ``V`` followed by the error nodes.

    Directed edges among ``V`` are kept, ``E_X -> X`` is added for every
    ``X`` and each ``X - Y`` becomes ``E_X - E_Y``.  ``roles`` maps every
    error node to its source node.
    """
    require_valid(graph)
    taken = set(graph.variables)
    err = {}
    for x in graph.variables:
        name, k = ERROR_PREFIX + x, 1
        while name in taken:
            name, k = f"{ERROR_PREFIX}{x}_{k}", k + 1
        taken.add(name)
        err[x] = name
    directed = list(graph.sorted_directed()) + [(err[x], x) for x in graph.variables]
    undirected = [(err[a], err[b]) for a, b in graph.sorted_undirected()]
    cards = dict(graph.cards)
    cards.update({err[x]: 2 for x in graph.variables})
    return ChainGraph(list(graph.variables) + [err[x] for x in graph.variables],
                      directed, undirected, cards, roles={e: x for x, e in err.items()})


def error_nodes(H: ChainGraph) -> dict[str, str]:
    """Source node -> error node."""
    if not H.roles:
        raise GraphError("not an error graph: no error roles")
    return {x: e for e, x in H.roles.items()}


def source_graph(H: ChainGraph) -> ChainGraph:
    """Recover the source graph from its error graph."""
    err = error_nodes(H)
    names = [v for v in H.variables if v not in H.roles]
    directed = [(a, b) for a, b in H.sorted_directed() if a not in H.roles]
    undirected = [(H.roles[a], H.roles[b]) for a, b in H.sorted_undirected()]
    cards = {v: H.cards[v] for v in names if v in H.cards}
    g = ChainGraph(names, directed, undirected, cards or None)
    assert set(err) == set(names)
    return g


def error_subgraph(H: ChainGraph) -> ChainGraph:
    """``H_E``: the undirected graph induced by the error nodes."""
    return H.induced(error_nodes(H).values())


# -- mechanisms and error distributions ----------------------------------------------

@dataclass
class Mechanism:
    """Distinguished state per parent assignment and a fallback conditional.

    ``distinguished`` has the parent cardinalities as shape; ``q`` has shape
    ``(card(X),) + parent cards`` and sums to one over its first axis.
    """
    node: str
    parents: tuple[str, ...]
    distinguished: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        self.parents = tuple(self.parents)
        self.distinguished = np.asarray(self.distinguished, dtype=int)
        self.q = np.asarray(self.q, dtype=float)
        if self.q.shape[1:] != self.distinguished.shape:
            raise FactorError(f"{self.node}: q and distinguished states disagree in shape")
        k = self.q.shape[0]
        if np.any(self.distinguished < 0) or np.any(self.distinguished >= k):
            raise FactorError(f"{self.node}: distinguished state out of range")
        if not np.allclose(self.q.sum(axis=0), 1.0, atol=1e-12):
            raise FactorError(f"{self.node}: q slices must sum to one")
        at_star = np.take_along_axis(self.q, self.distinguished[None], axis=0)
        if np.any(at_star != 0):
            raise FactorError(f"{self.node}: q must vanish at the distinguished state")
        mask = np.ones(self.q.shape, dtype=bool)
        np.put_along_axis(mask, self.distinguished[None], False, axis=0)
        if np.any(self.q[mask] <= 0):
            raise FactorError(f"{self.node}: q must be positive off the distinguished state")

    def table(self, error: str) -> Factor:
        """``p(X | pa(X), E_X)`` over ``(X, *parents, E_X)``."""
        k = self.q.shape[0]
        point = (np.arange(k).reshape((k,) + (1,) * self.distinguished.ndim)
                 == self.distinguished[None]).astype(float)
        values = np.stack([point, self.q], axis=-1)
        return Factor((self.node,) + self.parents + (error,), values.shape, values)

    def indicator(self, error: str) -> Factor:
        """One where ``E_X`` agrees with ``X`` and its parents, zero elsewhere."""
        return self.table(error).map(lambda v: (v > 0).astype(float))


def random_mechanisms(graph: ChainGraph, rng: np.random.Generator,
                      randomize: bool = False) -> dict[str, Mechanism]:
    """Distinguished state 0 (or random with ``randomize``) and ``q`` uniform
    on the open simplex of the other states."""
    graph.require_cards()
    out = {}
    for x in graph.variables:
        k = graph.card(x)
        if k < 2:
            raise FactorError(f"{x}: error mechanisms need at least two states")
        pa = graph.parents(x)
        shape = tuple(graph.card(v) for v in pa)
        star = rng.integers(0, k, size=shape) if randomize else np.zeros(shape, dtype=int)
        q = rng.dirichlet(np.ones(k - 1), size=shape if shape else None)
        q = np.asarray(q).reshape(shape + (k - 1,))
        full = np.zeros(shape + (k,))
        for idx in itertools.product(*(range(c) for c in shape)):
            others = [s for s in range(k) if s != star[idx]]
            full[idx + (others,)] = q[idx]
        out[x] = Mechanism(x, pa, star, np.moveaxis(full, -1, 0))
    return out


def random_error_distribution(H: ChainGraph, rng: np.random.Generator) -> Factor:
    """A strictly positive ``p(E)`` that is Markovian wrt ``H_E``."""
    return generate_markovian(error_subgraph(H), int(rng.integers(2 ** 32)))


def build_eamp_distribution(H: ChainGraph, mechanisms: dict[str, Mechanism], pe: Factor) -> Factor:
    """``p(V, E) = prod_X p(X | pa(X), E_X) * p(E)`` over ``H.variables``."""
    require_valid(H)
    err = error_nodes(H)
    if set(pe.scope) != set(err.values()):
        raise FactorError("p(E) must be a table over exactly the error nodes")
    if np.any(pe.values <= 0):
        raise FactorError("p(E) must be strictly positive")
    if abs(pe.total() - 1.0) > 1e-9:
        raise FactorError("p(E) must sum to one")
    tables = []
    for x, e in err.items():
        mech = mechanisms[x]
        expected = tuple(v for v in H.parents(x) if v != e)
        if set(mech.parents) != set(expected):
            raise FactorError(f"{x}: mechanism parents {mech.parents} differ from {expected}")
        tables.append(mech.table(e))
    return product(pe, *tables).reorder(H.variables)


def random_eamp_instance(graph: ChainGraph, seed=None, randomize: bool = False):
    """``(H, mechanisms, p(E), p(V, E))`` for a random instance over ``graph``."""
    rng = np.random.default_rng(seed)
    H = to_eamp(graph)
    mechs = random_mechanisms(graph, rng, randomize)
    pe = random_error_distribution(H, rng)
    return H, mechs, pe, build_eamp_distribution(H, mechs, pe)


def marginalize_errors(p_ve: Factor, H: ChainGraph) -> Factor:
    err = set(error_nodes(H).values())
    return p_ve.marginalize([v for v in H.variables if v not in err])


def is_function_of(p: Factor, target, given, tol: float = 0.0) -> bool:
    """True iff ``target`` takes a single value on every positive slice of ``given``."""
    target = [target] if isinstance(target, str) else list(target)
    given = list(given)
    target = [v for v in target if v not in given]
    if not target:
        return True
    joint = p.marginalize(given + target)
    cm = joint.card_map()
    ng = int(np.prod([cm[v] for v in given], dtype=np.int64))
    t = joint.values.reshape(ng, -1)
    return bool(np.all(np.sum(t > tol, axis=1) <= 1))


# -- potentials ---------------------------------------------------------------------

def default_assignment(graph: ChainGraph) -> dict[str, tuple[str, ...]]:
    """Each node goes to the first clique of its component that contains it."""
    out = {}
    for C in graph.components():
        cls = cliques(graph.induced(C))
        for x in C:
            out[x] = next(K for K in cls if x in K)
    return out


def recover_mechanisms(p_ve: Factor, H: ChainGraph) -> dict[str, Factor]:
    """``p(X | Pa_G(X), E_X)`` read off the joint, over ``(X, *parents, E_X)``."""
    out = {}
    for x, e in error_nodes(H).items():
        pa = tuple(v for v in H.parents(x) if v != e)
        out[x] = conditional(p_ve, [x], list(pa) + [e]).reorder((x,) + pa + (e,))
    return out


def assign_potentials(H: ChainGraph, p_ve: Factor, assignment=None) -> FactorizedModel:
    """Clique potentials over the source graph.

    ``psi(K, Pa(K)) = [prod of the mechanisms assigned to K] * phi(E_K)``
    with ``E_K`` substituted by its value as a function of ``K`` and its
    parents; ``phi`` comes from factorizing ``p(E)`` over ``H_E``.
    ``assignment`` maps nodes to cliques and defaults to the first clique.
    """
    G = source_graph(H)
    err = error_nodes(H)
    assignment = default_assignment(G) if assignment is None else {
        x: tuple(K) for x, K in assignment.items()}
    mechs = recover_mechanisms(p_ve, H)
    indicators = {x: mechs[x].map(lambda v: (v > 0).astype(float)) for x in G.variables}

    HE = error_subgraph(H)
    pe = p_ve.marginalize(list(HE.variables))
    phi = clique_factors(factorize(pe, HE))
    phi_by_nodes = {frozenset(H.roles[e] for e in K): f for (_, K), f in phi.items()}

    factors: dict = {}
    for C in G.components():
        comp = {}
        for K in cliques(G.induced(C)):
            scope = K + G.parents(K)
            terms = [phi_by_nodes[frozenset(K)]]
            terms += [indicators[x] for x in K]
            terms += [mechs[x] for x in G.variables if set(assignment[x]) == set(K)]
            f = product(*terms).sum_out([err[x] for x in K])
            comp[K] = f.reorder(scope)
        factors[C] = comp
    for x, K in assignment.items():
        if x not in K or G.sort(K) not in factors[G.component_of(x)]:
            raise GraphError(f"{x} is assigned to {K}, which is not a clique containing it")
    return FactorizedModel(G, factors, positive=True)


# -- separation equivalence ----------------------------------------------------------

@dataclass
class EquivalenceReport:
    pairs_checked: int = 0
    triples_checked: int = 0
    mismatches: list[tuple] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches


def _disjoint_triples(nodes):
    """Every (X, Y, Z) of pairwise disjoint subsets with X, Y non-empty."""
    for labels in itertools.product(range(4), repeat=len(nodes)):
        X = tuple(v for v, l in zip(nodes, labels) if l == 1)
        Y = tuple(v for v, l in zip(nodes, labels) if l == 2)
        Z = tuple(v for v, l in zip(nodes, labels) if l == 3)
        if X and Y:
            yield X, Y, Z


def check_separation_equivalence(graph: ChainGraph, budget: int = DEFAULT_BUDGET,
                                 direct_sets: bool = False) -> EquivalenceReport:
    """Compare separation in ``graph`` with separation in its error graph
    under the determination rule, for all disjoint triples over ``V``.

    Set separation holds iff it holds for every pair of endpoints, so pairs
    are computed once per ``Z`` and reused; ``direct_sets`` queries every
    set triple directly instead.
    """
    H = to_eamp(graph)
    V = graph.variables
    report = EquivalenceReport()
    cache: dict = {}

    def pair(x, y, Z):
        key = (min(x, y), max(x, y), Z)
        if key not in cache:
            a = separated(graph, [x], [y], Z, IDENTITY, budget)
            b = separated(H, [x], [y], Z, EAMP, budget)
            cache[key] = (a, b)
            report.pairs_checked += 1
            if a != b:
                report.mismatches.append(((x,), (y,), Z, a, b))
        return cache[key]

    for X, Y, Z in _disjoint_triples(V):
        report.triples_checked += 1
        if direct_sets:
            a = separated(graph, X, Y, Z, IDENTITY, budget)
            b = separated(H, X, Y, Z, EAMP, budget)
        else:
            results = [pair(x, y, Z) for x in X for y in Y]
            a = all(r[0] for r in results)
            b = all(r[1] for r in results)
        if a != b and (X, Y, Z, a, b) not in report.mismatches:
            report.mismatches.append((X, Y, Z, a, b))
    return report


# -- non-universality -----------------------------------------------------------------

def _ratio_variation(p: Factor, star0: int, star1: int) -> tuple[np.ndarray, float]:
    """``p(a0, b*^{a0}, c) / p(a1, b*^{a1}, c)`` for every ``c``, and its spread."""
    t = p.reorder(("A", "B", "C")).values
    ratio = t[0, star0, :] / t[1, star1, :]
    return ratio, float(ratio.max() - ratio.min())


def counterexample_distribution() -> Factor:
    """A distribution Markovian wrt ``A -> B - C`` whose ratio is 1 at ``c0``
    and 2 at ``c1`` when ``b*^{a0} = 0`` and ``b*^{a1} = 1``."""
    given_a0 = np.array([[0.2, 0.3], [0.3, 0.2]])
    given_a1 = np.array([[0.3, 0.35], [0.2, 0.15]])
    values = 0.5 * np.stack([given_a0, given_a1])
    return Factor(("A", "B", "C"), (2, 2, 2), values)


@dataclass
class NonUniversalityReport:
    instances: int
    max_eamp_variation: float
    counterexample_ratio: list[float]
    counterexample_variation: float
    min_variation_over_states: float
    counterexample_markovian: bool
    factorization_error: float

    @property
    def ok(self) -> bool:
        return (self.max_eamp_variation <= 1e-10 and self.counterexample_variation >= 0.5
                and self.min_variation_over_states > 1e-10 and self.counterexample_markovian)

    def to_json(self) -> dict:
        return dict(self.__dict__, ok=self.ok)


def demonstrate_nonuniversality(instances: int = 100, seed=0, tol: float = 1e-10) -> NonUniversalityReport:
    """Show that ``A -> B - C`` admits factorized distributions that are not
    marginals of any error-graph distribution.

    For error-graph marginals the ratio ``p(a0, b*^{a0}, c) / p(a1, b*^{a1}, c)``
    is constant in ``c``; the counterexample's ratio varies for every choice
    of the two distinguished states.
    """
    from .factorization import build_joint, check_markov_conditions
    from .factor import max_abs_diff

    G = ChainGraph("ABC", [("A", "B")], [("B", "C")], dict.fromkeys("ABC", 2))
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        H, mechs, pe, p_ve = random_eamp_instance(G, int(rng.integers(2 ** 32)), randomize=True)
        star = mechs["B"].distinguished
        _, spread = _ratio_variation(marginalize_errors(p_ve, H), int(star[0]), int(star[1]))
        worst = max(worst, spread)

    p_cx = counterexample_distribution()
    ratio, spread = _ratio_variation(p_cx, 0, 1)
    least = min(_ratio_variation(p_cx, s0, s1)[1] for s0 in range(2) for s1 in range(2))
    markov = check_markov_conditions(p_cx, G, tol)
    err = max_abs_diff(build_joint(factorize(p_cx, G)), p_cx)
    return NonUniversalityReport(instances, worst, ratio.tolist(), spread, least,
                                 bool(markov["C1*"] and markov["C2*"]), err)


# -- determination properties -----------------------------------------------------------

def _witness_error_free(graph: ChainGraph, H: ChainGraph, x: str) -> Factor:
    """Only ``E_X -> X`` is active: ``X`` follows its mechanism with no parents
    and every other node is uniform and independent."""
    err = error_nodes(H)
    k = graph.card(x)
    q = np.r_[0.0, np.full(k - 1, 1.0 / (k - 1))]
    mech = Mechanism(x, (), np.array(0), q)
    pe = Factor((err[x],), (2,), [0.5, 0.5])
    rest = [Factor((v,), (H.card(v),), np.full(H.card(v), 1.0 / H.card(v)))
            for v in H.variables if v not in (x, err[x])]
    return product(mech.table(err[x]), pe, *rest).reorder(H.variables)


def _witness_parent(graph: ChainGraph, H: ChainGraph, x: str, y: str) -> Factor:
    """Active edges ``E_X -> X <- Y <- E_Y`` with ``x*^{y0} != x*^{y1}``."""
    err = error_nodes(H)
    kx, ky = graph.card(x), graph.card(y)
    star = np.arange(ky) % kx
    q = np.zeros((kx, ky))
    for s in range(ky):
        q[:, s] = [0.0 if i == star[s] else 1.0 / (kx - 1) for i in range(kx)]
    mech_x = Mechanism(x, (y,), star, q)
    qy = np.r_[0.0, np.full(ky - 1, 1.0 / (ky - 1))]
    mech_y = Mechanism(y, (), np.array(0), qy)
    pe_x = Factor((err[x],), (2,), [0.5, 0.5])
    pe_y = Factor((err[y],), (2,), [0.5, 0.5])
    rest = [Factor((v,), (H.card(v),), np.full(H.card(v), 1.0 / H.card(v)))
            for v in H.variables if v not in (x, y, err[x], err[y])]
    return product(mech_x.table(err[x]), mech_y.table(err[y]), pe_x, pe_y, *rest).reorder(H.variables)


def determination_check(graph: ChainGraph, seed=0) -> list[dict]:
    """Check both determination properties for every ``X`` and ``Z``.

    ``E_X`` is a function of ``Z`` iff ``Pa(X) + X <= Z``; ``X`` is a
    function of ``Z`` iff ``X`` is in ``Z``.  Positive cases are checked on
    a random error-graph distribution and negative ones on the witness that
    keeps only the relevant mechanism edges.
    """
    H, _, _, p_ve = random_eamp_instance(graph, seed, randomize=True)
    err = error_nodes(H)
    rows = []
    V = graph.variables
    for x in V:
        need = set(graph.parents(x)) | {x}
        for r in range(len(V) + 1):
            for Z in itertools.combinations(V, r):
                expected = need <= set(Z)
                if expected:
                    observed = is_function_of(p_ve, err[x], Z)
                elif x not in Z:
                    observed = is_function_of(_witness_error_free(graph, H, x), err[x], Z)
                else:
                    y = next(v for v in graph.parents(x) if v not in Z)
                    observed = is_function_of(_witness_parent(graph, H, x, y), err[x], Z)
                node_expected = x in Z
                witness = p_ve if node_expected else _witness_error_free(graph, H, x)
                node_observed = is_function_of(witness, x, Z)
                rows.append({"node": x, "Z": Z, "error_determined": observed,
                             "error_expected": expected, "node_determined": node_observed,
                             "node_expected": node_expected})
    return rows

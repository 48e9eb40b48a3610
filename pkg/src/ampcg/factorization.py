"""Factorization of strictly positive distributions that are Markovian with
respect to an AMP chain graph.

Every component conditional ``p(C | Pa(C))`` is written as a product of
factors ``psi_C(K, Pa(K))`` over the complete sets ``K`` of ``G_C``; the
factors come from the Moebius (canonical) expansion of ``log p(C | Pa(C))``
around fixed anchor states, so no normalization constant is needed.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from .factor import Factor, FactorError, conditional, independence_test, product
from .graph import ChainGraph, cliques, complete_sets, marginal_graph, require_valid

VANISH_TOL = 1e-9
NORMALIZATION_TOL = 1e-9


class MarkovViolationWarning(UserWarning):
    """A canonical term that should vanish for a Markovian distribution does not."""


class NormalizationWarning(UserWarning):
    pass


def _subsets(nodes):
    nodes = tuple(nodes)
    for r in range(len(nodes) + 1):
        yield from itertools.combinations(nodes, r)


def _anchor(graph: ChainGraph, anchor) -> dict[str, int]:
    out = {v: 0 for v in graph.variables}
    out.update(anchor or {})
    return out


# -- canonical parameterization ------------------------------------------------

@dataclass
class CanonicalParams:
    """Canonical factors of ``log p(D | Pa(D))`` for ``D`` inside component ``C``.

    ``terms[W]`` is the Moebius interaction of the variables ``W`` taken from
    ``D + Pa(D)``, all other variables held at the anchor.  Terms are grouped
    into ``phi[K]`` over ``K + Pa(K)`` for the sets ``K`` in ``kept`` (the
    complete sets of ``G_C^D``, empty set included).  ``violations`` holds
    ``(W, max |term|)`` for terms that fit no kept scope but do not vanish.
    """
    component: tuple[str, ...]
    subset: tuple[str, ...]
    anchor: dict[str, int]
    phi: dict[tuple[str, ...], tuple[tuple[str, ...], np.ndarray]]
    kept: list[tuple[str, ...]]
    violations: list[tuple[tuple[str, ...], float]] = field(default_factory=list)
    terms: dict[tuple[str, ...], tuple[tuple[str, ...], np.ndarray]] = field(default_factory=dict)

    def factor(self, K) -> Factor:
        scope, logv = self.phi[tuple(K)]
        return Factor(scope, logv.shape, np.exp(logv))

    def log_conditional(self, graph: ChainGraph) -> tuple[tuple[str, ...], np.ndarray]:
        """Sum of all kept factors, over ``D + Pa(D)``."""
        scope = self.subset + graph.parents(self.subset)
        total = np.zeros([graph.card(v) for v in scope])
        for K in self.kept:
            total = total + _broadcast(self.phi[K], scope)
        return scope, total

    def node_term(self, K, graph: ChainGraph) -> tuple[tuple[str, ...], np.ndarray]:
        """All terms whose ``D`` part is exactly ``K``, over ``K + Pa(D)``.

        This is the canonical term of ``K`` for ``log p(D | pa(D))`` at fixed
        parent values; it vanishes unless ``K`` is complete in ``G_C^D``.
        """
        K = tuple(K)
        scope = K + graph.parents(self.subset)
        total = np.zeros([graph.card(v) for v in scope])
        for W, term in self.terms.items():
            if tuple(v for v in W if v in self.subset) == K:
                total = total + _broadcast(term, scope)
        return scope, total


def _broadcast(term, scope) -> np.ndarray:
    sub_scope, arr = term
    present = [v for v in scope if v in sub_scope]
    arr = np.transpose(arr, [sub_scope.index(v) for v in present])
    return arr.reshape([arr.shape[present.index(v)] if v in sub_scope else 1 for v in scope])


def _interaction(logc: np.ndarray, axes: list[int], anchor_idx: list[int]) -> np.ndarray:
    """Moebius interaction on ``axes``: clamp the other axes, difference the rest."""
    index = tuple(slice(None) if a in axes else anchor_idx[a] for a in range(logc.ndim))
    arr = logc[index]
    for pos, a in enumerate(axes):
        ref = np.take(arr, [anchor_idx[a]], axis=pos)
        arr = arr - ref
    return arr


def canonical_parameterize(p: Factor, graph: ChainGraph, C, D, anchor=None,
                           tol: float = VANISH_TOL, strict: bool = False,
                           check: bool = True) -> CanonicalParams:
    """Canonical expansion of ``log p(D | Pa(D))`` for ``D`` inside component ``C``.

    The expansion runs over every subset ``W`` of ``D + Pa(D)`` with all
    variables outside ``W`` at the anchor, so the terms sum to the log
    conditional exactly.  A term is filed under the first kept ``K`` with
    ``W & D <= K`` and ``W - D <= Pa(K)``.  With ``check`` off, terms that
    fit no kept scope are not computed.
    """
    C = graph.sort(C)
    D = graph.sort(D)
    gd = marginal_graph(graph, C, D)
    anchor = _anchor(graph, anchor)
    pa_D = graph.parents(D)
    if np.any(p.values <= 0):
        raise FactorError("canonical parameterization needs a strictly positive distribution")
    scope = D + pa_D
    logc = np.log(conditional(p, list(D), list(pa_D)).reorder(scope).values)
    anchor_idx = [anchor[v] for v in scope]

    kept = list(complete_sets(gd))
    pa_of = {K: set(graph.parents(K)) if K else set() for K in kept}
    phi = {K: (K + graph.parents(K), np.zeros([graph.card(v) for v in K + graph.parents(K)]))
           for K in kept}
    params = CanonicalParams(C, D, anchor, phi, kept)
    for nodes in _subsets(D):
        node_set = set(nodes)
        homes = [K for K in kept if node_set <= set(K)]
        reach = set().union(*(pa_of[K] for K in homes)) if homes else set()
        pool = pa_D if check else tuple(v for v in pa_D if v in reach)
        for pars in _subsets(pool):
            W = nodes + pars
            axes = [scope.index(v) for v in W]
            term = _interaction(logc, axes, anchor_idx)
            target = next((K for K in homes if set(pars) <= pa_of[K]), None)
            params.terms[W] = (W, term)
            if target is None:
                worst = float(np.max(np.abs(term))) if term.size else 0.0
                if worst > tol:
                    params.violations.append((W, worst))
                continue
            t_scope, acc = phi[target]
            phi[target] = (t_scope, acc + _broadcast((W, term), t_scope))
    if params.violations:
        msg = ", ".join(f"{'/'.join(W)}: {w:.3g}" for W, w in params.violations[:8])
        if strict:
            raise FactorError(f"distribution is not Markovian: non-vanishing terms {msg}")
        warnings.warn(f"non-vanishing canonical terms ({msg})", MarkovViolationWarning, stacklevel=2)
    return params


# -- factorized models -----------------------------------------------------------

@dataclass
class FactorizedModel:
    """A chain graph plus one factor per (component, complete set).

    ``factors[C][K]`` is a factor over ``K + Pa(K)``; missing complete sets
    are treated as constant one.
    """
    graph: ChainGraph
    factors: dict[tuple[str, ...], dict[tuple[str, ...], Factor]]
    positive: bool = True

    def factor_list(self) -> list[Factor]:
        return [f for comp in self.factors.values() for f in comp.values()]

    def tagged(self):
        for C, fs in self.factors.items():
            for K, f in fs.items():
                yield C, K, f

    def component_conditional(self, C) -> Factor:
        """Unnormalized product of the factors of ``C`` over ``C + Pa(C)``."""
        C = self.graph.sort(C)
        scope = C + self.graph.parents(C)
        base = Factor.unit(scope, [self.graph.card(v) for v in scope])
        return product(base, *self.factors.get(C, {}).values()).reorder(scope)

    def normalizer(self, C) -> Factor:
        """``Z_C(pa(C))``: the component product summed over ``C``."""
        C = self.graph.sort(C)
        return self.component_conditional(C).marginalize(self.graph.parents(C))

    def max_normalizer_drift(self) -> float:
        return max((float(np.max(np.abs(self.normalizer(C).values - 1.0)))
                    for C in self.graph.components()), default=0.0)

    def copy(self) -> "FactorizedModel":
        return FactorizedModel(self.graph, {C: dict(fs) for C, fs in self.factors.items()},
                               self.positive)

    def to_json(self) -> dict:
        g = self.graph
        return {
            "schema": 1,
            "variables": [{"name": v, "card": g.card(v)} for v in g.variables],
            "graph": {
                "directed": [list(e) for e in g.sorted_directed()],
                "undirected": [list(e) for e in g.sorted_undirected()],
            },
            "factors": [
                {"component": list(C), "K": list(K), "pa": list(f.scope[len(K):]),
                 "scope": list(f.scope), "values": f.values.ravel().tolist()}
                for C, K, f in self.tagged()
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FactorizedModel":
        names = [d["name"] for d in obj["variables"]]
        cards = {d["name"]: int(d["card"]) for d in obj["variables"]}
        g = obj.get("graph", {})
        graph = ChainGraph(names, g.get("directed", []), g.get("undirected", []), cards)
        factors: dict = {}
        for d in obj["factors"]:
            scope = d["scope"]
            f = Factor(scope, [cards[v] for v in scope], np.array(d["values"], dtype=float))
            if "component" in d:
                C, K = graph.sort(d["component"]), tuple(d["K"])
            else:
                # untagged factor: file it under the component of its first variable
                C = graph.component_of(scope[0]) if scope else graph.components()[0]
                K = tuple(v for v in scope if v in C)
            comp = factors.setdefault(C, {})
            comp[K] = comp[K].product(f) if K in comp else f
        positive = all(np.all(f.values > 0) for fs in factors.values() for f in fs.values())
        return cls(graph, factors, positive)


def factorize(p: Factor, graph: ChainGraph, anchor=None, tol: float = VANISH_TOL,
              strict: bool = False) -> FactorizedModel:
    """Factors ``psi_C(K, Pa(K)) = exp phi_C(K)`` for every component and complete set."""
    require_valid(graph)
    graph.require_cards()
    factors = {}
    for C in graph.components():
        params = canonical_parameterize(p, graph, C, C, anchor, tol, strict)
        factors[C] = {K: params.factor(K) for K in params.kept}
    return FactorizedModel(graph, factors, positive=True)


def factorize_subset(p: Factor, graph: ChainGraph, C, D, anchor=None,
                     tol: float = VANISH_TOL, strict: bool = False) -> dict[tuple[str, ...], Factor]:
    """Factors over the complete sets of the marginal graph ``G_C^D``."""
    params = canonical_parameterize(p, graph, C, D, anchor, tol, strict)
    return {K: params.factor(K) for K in params.kept}


def build_joint(model: FactorizedModel, tol: float = NORMALIZATION_TOL) -> Factor:
    """Product of all factors over ``V``.

    When some component normalizer differs from one by more than ``tol`` the
    product is normalized globally and a :class:`NormalizationWarning` is issued.
    """
    g = model.graph
    base = Factor.unit(g.variables, [g.card(v) for v in g.variables])
    joint = product(base, *model.factor_list()).reorder(g.variables)
    drift = model.max_normalizer_drift()
    if drift > tol:
        warnings.warn(f"component normalizers deviate from one by {drift:.3g}; "
                      "normalizing globally", NormalizationWarning, stacklevel=2)
    total = joint.total()
    if total <= 0:
        raise FactorError("the model assigns zero mass everywhere")
    return joint.normalize()


def clique_factors(model: FactorizedModel) -> dict[tuple[tuple[str, ...], tuple[str, ...]], Factor]:
    """Collapse complete-set factors onto the cliques of each ``G_C``.

    Each factor goes to the first clique (in declaration order) containing its
    complete set; the result maps ``(C, K)`` with ``K`` a clique to a factor
    over ``K + Pa(K)``.
    """
    g = model.graph
    out = {}
    for C in g.components():
        cls = cliques(g.induced(C))
        acc = {}
        for K in cls:
            scope = K + g.parents(K)
            acc[K] = Factor.unit(scope, [g.card(v) for v in scope])
        for K, f in model.factors.get(C, {}).items():
            target = next(Q for Q in cls if set(K) <= set(Q))
            acc[target] = acc[target].product(f)
        for K in cls:
            out[(C, K)] = acc[K].reorder(K + g.parents(K))
    return out


# -- random Markovian distributions --------------------------------------------------

def generate_markovian(graph: ChainGraph, seed=None, spread: float = 1.0) -> Factor:
    """A random strictly positive distribution that is Markovian wrt ``graph``.

    Each component conditional is built from a latent vector ``U_C`` that is
    Markovian wrt ``G_C`` (random positive clique potentials, normalized) and,
    per node, a relabelling ``U_X = h(X, pa(X))`` with positive within-class
    weights.  Then ``p(c | pa(C)) = r(h(c)) * prod_X w_X(x | pa(X), h(x))``,
    which factorizes over the complete sets of ``G_C`` and whose marginal on
    any ``D`` in ``C`` depends on ``Pa(D)`` only.
    """
    require_valid(graph)
    graph.require_cards()
    rng = np.random.default_rng(seed)
    joint = Factor.scalar(1.0)
    for C in graph.components():
        ucard = {}
        for x in C:
            if not graph.neighbours(x):
                ucard[x] = 1
            elif graph.card(x) == 2:
                ucard[x] = 2
            else:
                ucard[x] = int(rng.integers(2, graph.card(x) + 1))
        uname = {x: f"\0U:{x}" for x in C}

        latent = Factor.scalar(1.0)
        for K in complete_sets(graph.induced(C)):
            if not K:
                continue
            shape = [ucard[x] for x in K]
            latent = latent.product(Factor([uname[x] for x in K], shape,
                                           np.exp(spread * rng.normal(size=shape))))
        latent = latent.normalize()

        cond = latent
        for x in C:
            pa = graph.parents(x)
            pa_cards = [graph.card(v) for v in pa]
            kx, ku = graph.card(x), ucard[x]
            table = np.zeros([kx] + pa_cards + [ku])
            for pa_state in itertools.product(*(range(c) for c in pa_cards)):
                order = rng.permutation(kx)
                label = np.empty(kx, dtype=int)
                label[order[:ku]] = np.arange(ku)
                label[order[ku:]] = rng.integers(0, ku, size=kx - ku)
                weights = rng.uniform(0.2, 1.0, size=kx)
                for u in range(ku):
                    members = label == u
                    weights[members] /= weights[members].sum()
                for xs in range(kx):
                    table[(xs,) + pa_state + (label[xs],)] = weights[xs]
            cond = cond.product(Factor((x,) + pa + (uname[x],), table.shape, table))
        cond = cond.sum_out(uname.values())
        joint = joint.product(cond)
    return joint.reorder(graph.variables).normalize()


# -- Markov conditions ---------------------------------------------------------------

def _pairwise_markov(p: Factor, ug: ChainGraph, C, given, tol) -> bool:
    C = list(C)
    for s, t in itertools.combinations(C, 2):
        if ug.edge(s, t) is not None:
            continue
        rest = [v for v in C if v not in (s, t)] + [v for v in given if v not in C]
        if not independence_test(p, [s], [t], rest, tol):
            return False
    return True


def check_markov_conditions(p: Factor, graph: ChainGraph, tol: float = 1e-9,
                            max_nodes: int = 10) -> dict:
    """Evaluate C1, C2, C3*, C1* and C2* for every component.

    Markov properties of a conditional wrt ``G_C`` are checked pairwise,
    which is equivalent to the global property for positive distributions.
    """
    require_valid(graph)
    if len(graph) > max_nodes:
        raise ValueError(f"graph too large for exhaustive checks ({len(graph)} > {max_nodes})")
    report = {"components": {}}
    for C in graph.components():
        gc = graph.induced(C)
        pa_C = graph.parents(C)
        cc_pa = graph.component_closure(pa_C)
        nd = graph.non_descendants(C)
        proper = [D for D in _subsets(C) if D]

        c1 = independence_test(p, list(C), [v for v in nd if v not in cc_pa], list(cc_pa), tol)
        c2 = _pairwise_markov(p, gc, C, cc_pa, tol)
        c3 = all(independence_test(p, list(D),
                                   [v for v in cc_pa if v not in graph.parents(D)],
                                   list(graph.parents(D)), tol) for D in proper)
        c1s = all(independence_test(p, list(D),
                                    [v for v in graph.non_descendants(D) if v not in graph.parents(D)],
                                    list(graph.parents(D)), tol) for D in proper)
        c2s = _pairwise_markov(p, gc, C, pa_C, tol)
        report["components"][C] = {"C1": c1, "C2": c2, "C3*": c3, "C1*": c1s, "C2*": c2s,
                                   "equivalence": (c1 and c2 and c3) == (c1s and c2s)}
    comps = report["components"].values()
    for key in ("C1", "C2", "C3*", "C1*", "C2*", "equivalence"):
        report[key] = all(r[key] for r in comps)
    return report

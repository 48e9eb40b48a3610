"""Maximum-likelihood estimation of the complete-set factors.

Three estimators are provided: per-component proportional fitting of the
conditional factors (:func:`ipfp_fit`), classical proportional fitting of
the merged clique domains (:func:`merged_domain_ipfp`) and a closed-form
estimator built from Markov-blanket conditionals (:func:`closed_form_fit`).
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .factor import Dataset, Factor, FactorError, product
from .factorization import FactorizedModel, canonical_parameterize
from .graph import ChainGraph, GraphError, cliques, complete_sets, is_complete, require_valid
from .inference import assign_factors, moralize, propagate, triangulate_and_order
from .separation import separated

DEFAULT_TOL = 1e-8
DEFAULT_SWEEPS = 500
MIN_SUPPORT = 5


class LearningError(ValueError):
    pass


class SupportWarning(UserWarning):
    """A conditioning slice of the closed-form estimator has few instances."""


# -- sufficient statistics --------------------------------------------------------

class SufficientStats:
    """Counts of a complete dataset, or the scaled margins of a known joint.

    ``smoothing`` adds that many pseudo-counts to every cell of the full
    joint table, so all margins stay mutually consistent.
    """

    def __init__(self, cards: Mapping[str, int], data: Dataset | None = None,
                 joint: Factor | None = None, smoothing: float = 0.0, n: float | None = None):
        if (data is None) == (joint is None):
            raise LearningError("give exactly one of data or joint")
        if smoothing < 0:
            raise LearningError("smoothing must be non-negative")
        self.cards = dict(cards)
        self.smoothing = float(smoothing)
        self._data = data
        self._joint = joint
        if data is not None:
            data.check_cards(self.cards)
            missing = set(self.cards) - set(data.header)
            if missing:
                raise LearningError(f"data lacks columns {sorted(missing)}")
            raw = float(len(data))
        else:
            if set(joint.scope) != set(self.cards):
                raise LearningError("the joint must cover every variable")
            raw = 1.0 if n is None else float(n)
        cells = float(np.prod(list(self.cards.values()), dtype=np.float64))
        self.n = raw + self.smoothing * cells
        if self.n <= 0:
            raise LearningError("no data")
        self._raw = raw
        self._cache: dict[tuple[str, ...], Factor] = {}
        self.counts: dict[tuple, Factor] = {}
        self.parent_counts: dict[tuple, Factor] = {}

    @classmethod
    def of(cls, graph: ChainGraph, data, smoothing: float = 0.0) -> "SufficientStats":
        """Accept a :class:`Dataset`, a joint :class:`Factor` or existing stats."""
        if isinstance(data, SufficientStats):
            return data
        graph.require_cards()
        if isinstance(data, Dataset):
            stats = cls(graph.cards, data=data, smoothing=smoothing)
        elif isinstance(data, Factor):
            stats = cls(graph.cards, joint=data, smoothing=smoothing)
        else:
            raise LearningError(f"cannot learn from {type(data).__name__}")
        stats.collect(graph)
        return stats

    def collect(self, graph: ChainGraph):
        """Fill ``counts[(C, K)]`` over ``K + Pa(K)`` and ``parent_counts[C]``."""
        for C in graph.components():
            self.parent_counts[C] = self.margin(graph.parents(C))
            for K in complete_sets(graph.induced(C)):
                self.counts[(C, K)] = self.margin(K + graph.parents(K))
        return self

    def margin(self, scope) -> Factor:
        """Counts over ``scope`` (smoothing included)."""
        scope = tuple(scope)
        if scope not in self._cache:
            cards = [self.cards[v] for v in scope]
            if self._data is not None:
                raw = self._data.counts(scope, self.cards)
            else:
                raw = self._joint.marginalize(list(scope)).map(lambda v: v * self._raw)
            if self.smoothing:
                rest = [c for v, c in self.cards.items() if v not in scope]
                extra = self.smoothing * float(np.prod(rest, dtype=np.float64))
                raw = raw.map(lambda v: v + extra)
            self._cache[scope] = Factor(scope, cards, raw.values)
        return self._cache[scope]

    def empirical(self, scope) -> Factor:
        return self.margin(scope).map(lambda v: v / self.n)

    def conditional(self, target, given) -> Factor:
        """``p_e(target | given)``; zero counts anywhere raise :class:`LearningError`."""
        target, given = tuple(target), tuple(given)
        joint = self.margin(target + given)
        if np.any(joint.values <= 0):
            raise LearningError(f"zero empirical margin on {target + given}; use smoothing")
        return joint.divide(joint.marginalize(given))


# -- reports ---------------------------------------------------------------------

@dataclass
class FitReport:
    estimator: str
    sweeps: int = 0
    discrepancy: float = float("inf")
    loglik_trace: list[float] = field(default_factory=list)
    update_trace: list[float] = field(default_factory=list)
    converged: bool = False
    z_drift: dict[tuple[str, ...], float] = field(default_factory=dict)

    @property
    def max_z_drift(self) -> float:
        return max(self.z_drift.values(), default=0.0)

    def monotone(self, slack: float = 1e-9) -> bool:
        trace = self.update_trace or self.loglik_trace
        return all(b >= a - slack for a, b in zip(trace, trace[1:]))

    def to_json(self) -> dict:
        return {
            "estimator": self.estimator,
            "sweeps": self.sweeps,
            "discrepancy": self.discrepancy,
            "converged": self.converged,
            "loglik_trace": self.loglik_trace,
            "z_drift": {",".join(C): d for C, d in self.z_drift.items()},
        }


# -- likelihood ------------------------------------------------------------------

def _log(values: np.ndarray) -> np.ndarray:
    if np.any(values <= 0):
        raise LearningError("the model has a zero factor entry")
    return np.log(values)


def loglik(model: FactorizedModel, data, smoothing: float = 0.0) -> float:
    """Log-likelihood with per-component normalizers ``Z_C(pa(C))``.

    With a joint distribution as ``data`` the value is per instance.
    """
    g = model.graph
    stats = SufficientStats.of(g, data, smoothing)
    total = 0.0
    for C in g.components():
        for K, f in model.factors.get(C, {}).items():
            n_k = stats.margin(f.scope).reorder(f.scope)
            total += float(np.sum(n_k.values * _log(f.values)))
        Z = model.normalizer(C)
        n_pa = stats.margin(Z.scope)
        total -= float(np.sum(n_pa.values * _log(Z.values)))
    return total


def _model_margin(tree, scope) -> Factor:
    return tree.marginal(list(scope))


def loglik_gradient(model: FactorizedModel, data, C, K, smoothing: float = 0.0,
                    exact: bool = False) -> "Gradient":
    """Partials of ``l / n`` with respect to the entries of ``psi_C(K, Pa(K))``.

    The default is the closed form in terms of ``p(q | pa(Q))``, which relies
    on the model conditional of ``K`` depending on ``Pa(K)`` only.  With
    ``exact`` the normalizer term uses ``p(q | pa(C))`` averaged under the
    empirical parent distribution, which is the derivative in general.
    """
    g = model.graph
    C, K = g.sort(C), tuple(K)
    stats = SufficientStats.of(g, data, smoothing)
    psi = model.factors[C][K]
    pa_K = psi.scope[len(K):]
    if np.any(psi.values <= 0):
        raise LearningError("the model has a zero factor entry")
    pe = stats.empirical(psi.scope).reorder(psi.scope)
    if exact:
        cond = model.component_conditional(C)
        cond = cond.divide(cond.marginalize(g.parents(C)))
        q_given_pa = cond.marginalize(list(K) + list(g.parents(C)))
        weighted = q_given_pa.product(stats.empirical(g.parents(C)))
        second = weighted.marginalize(list(psi.scope))
    else:
        tree = _joint_tree(model)
        m = _model_margin(tree, psi.scope)
        p_q = m.divide(m.marginalize(list(pa_K)))
        second = p_q.product(stats.empirical(pa_K))
    grad = (pe.values - second.reorder(psi.scope).values) / psi.values
    return Gradient(psi.scope, grad)


@dataclass
class Gradient:
    """Signed table of partial derivatives over ``scope``."""
    scope: tuple[str, ...]
    values: np.ndarray

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


# -- per-component IPFP ------------------------------------------------------------

def _fit_tree(graph: ChainGraph):
    """Tree over the moral graph with each ``Pa(C)`` completed, so the
    normalizer factors ``1 / Z_C(pa(C))`` fit some clique."""
    moral = moralize(graph)
    edges = set(moral.sorted_undirected())
    for C in graph.components():
        edges.update(itertools.combinations(graph.parents(C), 2))
    ug = ChainGraph(graph.variables, (), sorted(edges), graph.cards)
    return triangulate_and_order(ug)


def _normalized_factors(model: FactorizedModel) -> list[Factor]:
    out = list(model.factor_list())
    for C in model.graph.components():
        Z = model.normalizer(C)
        if Z.scope or abs(float(Z.values) - 1.0) > 0:
            out.append(Z.map(lambda v: 1.0 / v))
    return out


def _joint_tree(model: FactorizedModel, skeleton=None):
    skeleton = skeleton or _fit_tree(model.graph)
    return propagate(assign_factors(skeleton, _normalized_factors(model)))


def _initial_model(graph: ChainGraph) -> FactorizedModel:
    """Canonical factors of the uniform conditional of every component."""
    factors = {}
    for C in graph.components():
        scope = C + graph.parents(C)
        uniform = Factor.uniform(scope, [graph.card(v) for v in scope])
        params = canonical_parameterize(uniform, graph, C, C)
        factors[C] = {K: params.factor(K) for K in params.kept}
    return FactorizedModel(graph, factors, positive=True)


def _update_sets(graph: ChainGraph, C, maximal_only: bool):
    gc = graph.induced(C)
    return list(cliques(gc)) if maximal_only else list(complete_sets(gc))


def _discrepancy(tree, stats: SufficientStats, targets) -> float:
    worst = 0.0
    for K, pa in targets:
        m = _model_margin(tree, K + pa)
        p_model = m.divide(m.marginalize(list(pa)))
        p_emp = stats.conditional(K, pa)
        worst = max(worst, float(np.max(np.abs(p_model.values - p_emp.reorder(p_model.scope).values))))
    return worst


def ipfp_fit(graph: ChainGraph, data, tol: float = DEFAULT_TOL, max_sweeps: int = DEFAULT_SWEEPS,
             smoothing: float = 0.0, maximal_only: bool = False, order=None):
    """Per-component proportional fitting of the factors ``psi_C(K, Pa(K))``.

    Every component starts from the canonical factors of its uniform
    conditional.  One sweep visits each component and each complete set
    ``K`` (sizes ascending, then declaration order) and multiplies
    ``psi_C(K, .)`` by ``p_e(K | Pa(K)) / p(K | Pa(K))``, the model
    conditional being computed by clique-tree propagation.  ``order`` may
    give an explicit list of ``(C, K)`` pairs per sweep.

    Returns ``(model, report)``; ``report.converged`` is False when the
    sweep budget runs out.
    """
    require_valid(graph)
    graph.require_cards()
    stats = SufficientStats.of(graph, data, smoothing)
    model = _initial_model(graph)
    if order is None:
        order = [(C, K) for C in graph.components() for K in _update_sets(graph, C, maximal_only)]
    else:
        order = [(graph.sort(C), tuple(K)) for C, K in order]
    targets = [(K, graph.parents(K) if K else ()) for _, K in order]
    targets = [(K, pa) for K, pa in dict.fromkeys(targets) if K]
    empirical = {K: stats.conditional(K, graph.parents(K) if K else ()) for _, K in order}

    skeleton = _fit_tree(graph)
    report = FitReport("ipfp", z_drift={C: 0.0 for C in graph.components()})
    n = stats.n
    report.loglik_trace.append(loglik(model, stats) / n)
    report.update_trace.append(report.loglik_trace[-1])
    tree = _joint_tree(model, skeleton)
    report.discrepancy = _discrepancy(tree, stats, targets)
    for sweep in range(1, max_sweeps + 1):
        if report.discrepancy <= tol:
            report.converged = True
            break
        for C, K in order:
            pa = graph.parents(K) if K else ()
            if K:
                m = _model_margin(tree, K + pa)
                p_model = m.divide(m.marginalize(list(pa)))
            else:
                p_model = Factor.scalar(1.0)
            ratio = empirical[K].divide(p_model)
            psi = model.factors[C][K]
            model.factors[C][K] = psi.product(ratio).reorder(psi.scope)
            drift = float(np.max(np.abs(model.normalizer(C).values - 1.0)))
            report.z_drift[C] = max(report.z_drift[C], drift)
            tree = _joint_tree(model, skeleton)
            report.update_trace.append(loglik(model, stats) / n)
        report.sweeps = sweep
        report.loglik_trace.append(report.update_trace[-1])
        report.discrepancy = _discrepancy(tree, stats, targets)
    else:
        report.converged = report.discrepancy <= tol
    return model, report


# -- merged-domain IPFP ------------------------------------------------------------

def merged_domains(graph: ChainGraph) -> list[tuple[str, ...]]:
    """Domains ``K + Pa(K)`` for the cliques ``K`` of every ``G_C``, with
    every domain contained in another one dropped."""
    domains = []
    for C in graph.components():
        for K in cliques(graph.induced(C)):
            domains.append(K + graph.parents(K))
    sets = [frozenset(d) for d in domains]
    return [d for i, d in enumerate(domains)
            if not any(sets[i] < sets[j] or (sets[i] == sets[j] and j < i)
                       for j in range(len(domains)) if j != i)]


def merged_domain_ipfp(graph: ChainGraph, data, tol: float = DEFAULT_TOL,
                       max_sweeps: int = DEFAULT_SWEEPS, smoothing: float = 0.0):
    """Classical proportional fitting of one potential per merged domain.

    Potentials start at one and are rescaled by ``p_e(Q) / p(Q)`` in turn,
    ``p`` being the normalized product of all potentials.  Returns
    ``(factors, report)``; the product of the factors is normalized.
    """
    require_valid(graph)
    graph.require_cards()
    stats = SufficientStats.of(graph, data, smoothing)
    domains = merged_domains(graph)
    emp = []
    for Q in domains:
        e = stats.empirical(Q)
        if np.any(e.values <= 0):
            raise LearningError(f"zero empirical margin on {Q}; use smoothing")
        emp.append(e)
    pots = [Factor.unit(Q, [graph.card(v) for v in Q]) for Q in domains]
    skeleton = triangulate_and_order(moralize(graph))
    report = FitReport("merged")

    def run(pots):
        return propagate(assign_factors(skeleton, pots))

    def ll(pots, tree):
        return sum(float(np.sum(e.values * np.log(p.values))) for e, p in zip(emp, pots)) - np.log(tree.mass)

    def gap(tree):
        return max(float(np.max(np.abs(tree.marginal(Q).values - e.values))) for Q, e in zip(domains, emp))

    tree = run(pots)
    report.loglik_trace.append(ll(pots, tree))
    report.update_trace.append(report.loglik_trace[-1])
    report.discrepancy = gap(tree)
    for sweep in range(1, max_sweeps + 1):
        if report.discrepancy <= tol:
            report.converged = True
            break
        for i, Q in enumerate(domains):
            pots[i] = pots[i].product(emp[i].divide(tree.marginal(Q))).reorder(Q)
            tree = run(pots)
            report.update_trace.append(ll(pots, tree))
        report.sweeps = sweep
        report.loglik_trace.append(report.update_trace[-1])
        report.discrepancy = gap(tree)
    else:
        report.converged = report.discrepancy <= tol
    if pots:
        pots[0] = pots[0].map(lambda v: v / tree.mass)
    return pots, report


# -- Markov blanket and closed form ------------------------------------------------

def markov_blanket(graph: ChainGraph, C, K) -> tuple[str, ...]:
    """``Ne(K) + Pa(K) + Pa(Ne(K))`` minus ``K``, within ``C + Pa(C)``."""
    C = graph.sort(C)
    K = graph.sort(K)
    if C not in graph.components():
        raise GraphError(f"{C} is not a connectivity component")
    if not set(K) <= set(C) or not is_complete(graph.induced(C), K):
        raise GraphError(f"{K} is not a complete set of the component")
    ne = set(graph.neighbours(K)) if K else set()
    mb = ne | set(graph.parents(K) if K else ()) | set(graph.parents(ne) if ne else ())
    universe = set(C) | set(graph.parents(C))
    return graph.sort((mb & universe) - set(K))


def blanket_is_minimal(graph: ChainGraph, C, K, blanket=None) -> bool:
    """``K`` is separated from the rest of ``C + Pa(C)`` given the blanket,
    and dropping any blanket node breaks that separation."""
    C, K = graph.sort(C), graph.sort(K)
    mb = set(markov_blanket(graph, C, K) if blanket is None else blanket)
    rest = (set(C) | set(graph.parents(C))) - set(K) - mb
    if K and rest and not separated(graph, K, rest, mb):
        return False
    for m in mb:
        if separated(graph, K, rest | {m}, mb - {m}):
            return False
    return True


def closed_form_fit(graph: ChainGraph, data, smoothing: float = 0.0, anchor=None,
                    min_support: float = MIN_SUPPORT) -> list[Factor]:
    """Closed-form factors from Markov-blanket conditionals.

    Per component ``C`` the factors are ``p(c* | pa(C))`` and, for every
    non-empty complete ``K``,
    ``psi_K = exp sum_B (-1)^|K-B| log p(b, (K-B)* | ne(K)*, pa(K + Ne(K)))``
    with the neighbours held at the anchor and the parents free.  The
    product of all factors is the joint when the input is Markovian.
    """
    require_valid(graph)
    graph.require_cards()
    stats = SufficientStats.of(graph, data, smoothing)
    star = {v: 0 for v in graph.variables}
    star.update(anchor or {})
    check_support = isinstance(data, Dataset)
    out = []
    scarce = []

    def slice_conditional(target, given, fixed):
        """``p(target | given)`` with the variables in ``fixed`` sliced."""
        joint = stats.margin(tuple(target) + tuple(given))
        den = joint.marginalize(list(given))
        if np.any(den.slice(fixed).values <= 0):
            raise LearningError(f"zero conditioning slice on {tuple(given)}; use smoothing")
        if check_support and np.any(den.slice(fixed).values < min_support):
            scarce.append(tuple(given))
        return joint.slice(fixed).divide(den.slice(fixed))

    for C in graph.components():
        pa_C = graph.parents(C)
        base = slice_conditional(C, pa_C, {v: star[v] for v in C})
        out.append(base)
        for K in complete_sets(graph.induced(C)):
            if not K:
                continue
            ne = graph.neighbours(K)
            free_pa = graph.parents(tuple(K) + tuple(ne))
            fixed_ne = {v: star[v] for v in ne}
            cond = slice_conditional(K, tuple(ne) + tuple(free_pa), fixed_ne)
            scope = tuple(K) + tuple(free_pa)
            logc = np.log(cond.reorder(scope).values)
            acc = np.zeros(logc.shape)
            for r in range(len(K) + 1):
                for B in itertools.combinations(K, r):
                    sign = -1.0 if (len(K) - r) % 2 else 1.0
                    index = tuple(slice(None) if (v in B or v not in K) else star[v] for v in scope)
                    term = logc[index]
                    shape = [logc.shape[i] if (v in B or v not in K) else 1 for i, v in enumerate(scope)]
                    acc = acc + sign * term.reshape(shape)
            out.append(Factor(scope, acc.shape, np.exp(acc)))
    if scarce:
        warnings.warn(f"{len(scarce)} conditioning slices have fewer than {min_support} "
                      "instances; closed-form estimates are unreliable", SupportWarning, stacklevel=2)
    return out


def joint_of(factors, graph: ChainGraph) -> Factor:
    """Normalized product of ``factors`` over all variables of ``graph``."""
    base = Factor.unit(graph.variables, [graph.card(v) for v in graph.variables])
    return product(base, *factors).reorder(graph.variables).normalize()

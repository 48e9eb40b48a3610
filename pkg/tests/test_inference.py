import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ampcg.factor import Factor, max_abs_diff
from ampcg.factorization import factorize, generate_markovian
from ampcg.graph import ChainGraph, cliques
from ampcg.inference import (ImpossibleEvidence, InferenceError, assign_factors, build_tree,
                             has_rip, is_triangulated, moral_containment, moralize,
                             probability_of_evidence, propagate, query, tree_for_factors,
                             triangulate_and_order)
from ampcg.oracle import enum_infer
from ampcg.zoo import figure_one, random_chain_graph


def filled(tree, moral):
    edges = set(moral.sorted_undirected()) | {tuple(e) for e in tree.fill_ins}
    return ChainGraph(moral.variables, (), sorted(edges))


def check_tree(graph, tree):
    moral = moralize(graph)
    Q = tree.cliques
    assert has_rip(Q)
    assert tree.separators[0] == ()
    for j in range(1, len(Q)):
        earlier = set().union(*map(set, Q[:j]))
        assert set(tree.separators[j]) == set(Q[j]) & earlier
        assert set(tree.separators[j]) <= set(Q[tree.parent[j]])
        assert tree.parent[j] < j
    for a, b in itertools.permutations(Q, 2):
        assert not set(a) <= set(b)
    assert set().union(*map(set, Q)) == set(graph.variables)
    fg = filled(tree, moral)
    assert is_triangulated(fg)
    assert sorted(map(sorted, cliques(fg))) == sorted(map(sorted, Q))
    assert moral_containment(graph, moral)
    for C in graph.components():
        for K in cliques(ChainGraph(C, (), graph.induced(C).undirected)):
            assert tree.home(K + graph.parents(K)) is not None


def model_for(graph, seed):
    return factorize(generate_markovian(graph, seed=seed), graph)


def test_moral_graph_figure_one(fig1):
    m = moralize(fig1)
    assert m.is_undirected()
    assert m.edge("A", "B") == "-" and m.edge("B", "C") == "-"
    assert moral_containment(fig1, m)


def test_tree_figure_one(fig1):
    tree = build_tree(fig1)
    check_tree(fig1, tree)
    assert [set(Q) for Q in tree.cliques] == [set("ABCDI"), set("ACFI")]


def test_four_cycle_needs_repeated_marking():
    g = ChainGraph("ABCD", [], [("A", "B"), ("B", "C"), ("C", "D"), ("D", "A")])
    tree = triangulate_and_order(g)
    assert has_rip(tree.cliques)
    assert len(tree.cliques) == 2 and len(tree.fill_ins) == 1
    assert is_triangulated(filled(tree, g))


def test_is_triangulated_basic():
    square = ChainGraph("ABCD", [], [("A", "B"), ("B", "C"), ("C", "D"), ("D", "A")])
    assert not is_triangulated(square)
    assert is_triangulated(ChainGraph("ABC", [], [("A", "B"), ("B", "C")]))


def test_has_rip_negative():
    assert not has_rip([("A", "B"), ("C", "D"), ("B", "C", "E"), ("A", "D")])


def test_single_clique_assignment():
    g = ChainGraph("AB", [], [("A", "B")], {"A": 2, "B": 2})
    tree = build_tree(g)
    fs = [Factor("A", [2], [1, 2]), Factor("AB", [2, 2], [1, 2, 3, 4])]
    tree = assign_factors(tree, fs)
    assert len(tree.cliques) == 1
    assert max_abs_diff(tree.potentials[0], fs[0].product(fs[1])) == 0


def test_empty_model_units(fig1):
    tree = assign_factors(build_tree(fig1), [])
    assert all(np.all(p.values == 1) for p in tree.potentials)


def test_figure_one_assignment_scopes(fig1):
    tree = build_tree(fig1)
    for s in ["A", "BA", "CDAB", "CFA", "DIAB", "FI"]:
        assert tree.home(list(s)) is not None


def test_calibrated_marginals_match_enumeration(fig1):
    model = model_for(fig1, 3)
    tree = propagate(assign_factors(build_tree(fig1), model))
    for Q, m in zip(tree.cliques, tree.marginals):
        assert abs(m.total() - 1) < 1e-12
        assert max_abs_diff(m, enum_infer(model, Q)) < 1e-10
    for (i, a), (j, b) in itertools.combinations(enumerate(tree.cliques), 2):
        shared = [v for v in a if v in b]
        if shared:
            d = max_abs_diff(tree.marginals[i].marginalize(shared), tree.marginals[j].marginalize(shared))
            assert d < 1e-10


def test_cross_clique_query(fig1):
    model = model_for(fig1, 7)
    got = query(None, model, ["A", "I"], {"B": 1})
    assert max_abs_diff(got, enum_infer(model, ["A", "I"], {"B": 1})) < 1e-10


def test_evidence_probability_clique_independent(fig1):
    model = model_for(fig1, 8)
    tree = assign_factors(build_tree(fig1), model)
    ev = {"B": 1, "F": 0}
    free = propagate(tree)
    cond = propagate(tree, ev)
    ratios = [c / f for c, f in zip(cond.clique_masses(), free.clique_masses())]
    assert max(ratios) - min(ratios) < 1e-12
    brute = enum_infer(model, ["B", "F"]).value(ev)
    assert abs(probability_of_evidence(tree, None, ev) - brute) < 1e-12


def test_impossible_evidence():
    g = ChainGraph("AB", [("A", "B")], (), {"A": 2, "B": 2})
    fs = [Factor("A", [2], [1, 0]), Factor("BA", [2, 2], [0.5, 0.5, 0.5, 0.5])]
    tree = assign_factors(tree_for_factors(g, fs), fs)
    with pytest.raises(ImpossibleEvidence):
        propagate(tree, {"A": 1})
    assert probability_of_evidence(tree, None, {"A": 1}) == 0.0


def test_unknown_target(fig1):
    with pytest.raises(InferenceError):
        query(None, model_for(fig1, 0), ["Z"])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_random_queries(seed):
    rng = np.random.default_rng(seed)
    g = random_chain_graph(int(rng.integers(2, 7)), rng, p_edge=0.55, cards=(2, 3))
    model = model_for(g, seed)
    tree = assign_factors(build_tree(g), model)
    check_tree(g, tree)
    for _ in range(4):
        labels = rng.integers(0, 3, size=len(g))
        targets = [v for v, l in zip(g.variables, labels) if l == 1] or [g.variables[0]]
        ev = {v: int(rng.integers(0, g.card(v))) for v, l in zip(g.variables, labels)
              if l == 2 and v not in targets}
        assert max_abs_diff(query(tree, None, targets, ev), enum_infer(model, targets, ev)) < 1e-10

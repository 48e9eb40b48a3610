import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ampcg.eamp import to_eamp
from ampcg.graph import ChainGraph
from ampcg.oracle import path_oracle
from ampcg.separation import (EAMP, IDENTITY, SeparationBudgetExceeded, determined_set,
                              find_open_path, is_triplex, is_z_open, separated)
from ampcg.zoo import chain_abc, chain_abc_closed, random_chain_graph


def test_triplex_patterns():
    g = ChainGraph("ABC", [("A", "B"), ("C", "B")])
    assert is_triplex(g, ["A", "B", "C"], 1)
    g = chain_abc()
    assert is_triplex(g, ["A", "B", "C"], 1)
    g = ChainGraph("ABC", [("A", "B"), ("B", "C")])
    assert not is_triplex(g, ["A", "B", "C"], 1)


def test_chain_abc():
    g = chain_abc()
    assert separated(g, ["A"], ["C"])
    assert not separated(g, ["A"], ["C"], ["B"])
    assert find_open_path(g, ["A"], ["C"], ["B"]) == ("A", "B", "C")


def test_chain_abc_closed():
    assert not separated(chain_abc_closed(), ["A"], ["C"])


def test_figure_one(fig1):
    assert separated(fig1, ["A"], ["F"])
    assert separated(fig1, ["A"], ["F"], ["B"])
    assert not separated(fig1, ["A"], ["F"], ["C"])
    assert separated(fig1, ["B"], ["C"], ["A"])


def test_undirected_node_in_z_blocks():
    g = ChainGraph("ABC", [], [("A", "B"), ("B", "C")])
    assert separated(g, ["A"], ["C"], ["B"])
    assert not is_z_open(g, ["A", "B", "C"], ["B"])


def test_eamp_rule_determines_errors():
    H = to_eamp(chain_abc())
    assert "E_A" in determined_set(H, ["A"], EAMP)
    assert "E_B" not in determined_set(H, ["B"], EAMP)
    assert "E_B" in determined_set(H, ["A", "B"], EAMP)
    assert determined_set(H, ["A"], IDENTITY) == ("A",)


def test_budget_guard():
    n = 12
    names = [f"N{i}" for i in range(n)]
    edges = [(a, b) for i, a in enumerate(names) for b in names[i + 1:]]
    g = ChainGraph(names, [], edges)
    with pytest.raises(SeparationBudgetExceeded):
        separated(g, [names[0]], [names[-1]], names[1:-1], budget=100)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_matches_path_oracle(seed):
    rng = np.random.default_rng(seed)
    g = random_chain_graph(int(rng.integers(3, 7)), rng, p_edge=0.5)
    for _ in range(15):
        labels = rng.integers(0, 4, size=len(g))
        X = [v for v, l in zip(g.variables, labels) if l == 1]
        Y = [v for v, l in zip(g.variables, labels) if l == 2]
        Z = [v for v, l in zip(g.variables, labels) if l == 3]
        if X and Y:
            assert separated(g, X, Y, Z) == path_oracle(g, X, Y, Z)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_eamp_rule_matches_path_oracle(seed):
    rng = np.random.default_rng(seed)
    H = to_eamp(random_chain_graph(int(rng.integers(2, 5)), rng, p_edge=0.6))
    for _ in range(15):
        labels = rng.integers(0, 4, size=len(H))
        X = [v for v, l in zip(H.variables, labels) if l == 1]
        Y = [v for v, l in zip(H.variables, labels) if l == 2]
        Z = [v for v, l in zip(H.variables, labels) if l == 3]
        if X and Y:
            assert separated(H, X, Y, Z, EAMP) == path_oracle(H, X, Y, Z, "eamp")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_symmetry(seed):
    rng = np.random.default_rng(seed)
    g = random_chain_graph(5, rng)
    x, y, z = g.variables[0], g.variables[-1], list(g.variables[1:3])
    assert separated(g, [x], [y], z) == separated(g, [y], [x], z)

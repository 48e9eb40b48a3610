import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ampcg.eamp import (Mechanism, _ratio_variation, assign_potentials, build_eamp_distribution,
                        check_separation_equivalence, counterexample_distribution,
                        demonstrate_nonuniversality, determination_check, error_nodes,
                        is_function_of, marginalize_errors, random_eamp_instance,
                        random_error_distribution, source_graph, to_eamp)
from ampcg.factor import Factor, FactorError, conditional, max_abs_diff
from ampcg.factorization import build_joint
from ampcg.graph import ChainGraph, format_amp, parse_amp, validate
from ampcg.oracle import is_markovian
from ampcg.zoo import chain_abc, figure_one, random_chain_graph


def test_figure_one_transform(fig1):
    H = to_eamp(fig1)
    assert validate(H).ok
    assert len(H) == 12
    for x in fig1.variables:
        assert H.edge(f"E_{x}", x) == "->"
        assert H.component_of(x) == (x,)
    expected = {frozenset(e) for e in [("E_C", "E_D"), ("E_C", "E_F"), ("E_D", "E_I"), ("E_F", "E_I")]}
    assert {frozenset(e) for e in H.undirected} == expected
    assert set(fig1.directed) <= set(H.directed)
    assert len(H.directed) == len(fig1.directed) + len(fig1)


def test_chain_transform():
    H = to_eamp(chain_abc())
    assert set(H.directed) == {("E_A", "A"), ("A", "B"), ("E_B", "B"), ("E_C", "C")}
    assert {frozenset(e) for e in H.undirected} == {frozenset(("E_B", "E_C"))}
    assert source_graph(H).sorted_directed() == [("A", "B")]


def test_dag_transform_adds_only_error_arrows():
    g = ChainGraph("AB", [("A", "B")], (), {"A": 2, "B": 2})
    H = to_eamp(g)
    assert not H.undirected
    assert set(H.directed) == {("A", "B"), ("E_A", "A"), ("E_B", "B")}


def test_error_name_collision():
    g = ChainGraph(["A", "E_A"], [], [], {"A": 2, "E_A": 2})
    H = to_eamp(g)
    assert len(set(error_nodes(H).values())) == 2
    assert error_nodes(H)["A"] != "E_A"


def test_roles_round_trip_through_text(fig1):
    H = to_eamp(fig1)
    back = parse_amp(format_amp(H))
    assert back.roles == H.roles
    assert error_nodes(back) == error_nodes(H)


def test_single_node_case_table():
    g = ChainGraph("A", cards={"A": 2})
    H = to_eamp(g)
    mech = Mechanism("A", (), np.array(0), np.array([0.0, 1.0]))
    pe = Factor(("E_A",), (2,), [0.3, 0.7])
    p = build_eamp_distribution(H, {"A": mech}, pe)
    assert np.allclose(p.marginalize(["A"]).values, [0.3, 0.7])


def test_mechanism_constraints():
    with pytest.raises(FactorError):
        Mechanism("A", (), np.array(0), np.array([0.5, 0.5]))
    with pytest.raises(FactorError):
        Mechanism("A", (), np.array(0), np.array([0.0, 0.9]))
    with pytest.raises(FactorError):
        Mechanism("A", (), np.array(0), np.array([0.0, 0.0, 1.0]))


def test_errors_determined_by_values(fig1):
    H, mechs, pe, p_ve = random_eamp_instance(fig1, seed=1, randomize=True)
    V = list(fig1.variables)
    assert is_function_of(p_ve, list(error_nodes(H).values()), V)
    assert np.all(marginalize_errors(p_ve, H).values > 0)


def test_figure_one_assignment_scopes(fig1):
    H, _, _, p_ve = random_eamp_instance(fig1, seed=2)
    model = assign_potentials(H, p_ve)
    scopes = {frozenset(f.scope) for f in model.factor_list()}
    assert scopes == {frozenset(s) for s in ["A", "BA", "CDAB", "CFA", "DIAB", "FI"]}
    assert max_abs_diff(build_joint(model), marginalize_errors(p_ve, H)) < 1e-10


def test_dag_assignment_is_ordinary_factorization():
    g = ChainGraph("ABC", [("A", "B"), ("B", "C")], (), dict.fromkeys("ABC", 3))
    H, _, _, p_ve = random_eamp_instance(g, seed=4)
    p = marginalize_errors(p_ve, H)
    model = assign_potentials(H, p_ve)
    for C, K, f in model.tagged():
        x = K[0]
        target = conditional(p, [x], list(g.parents(x)))
        assert max_abs_diff(f, target) < 1e-12


def test_custom_assignment(fig1):
    H, _, _, p_ve = random_eamp_instance(fig1, seed=3)
    assignment = {"A": ("A",), "B": ("B",), "C": ("C", "F"), "D": ("D", "I"),
                  "F": ("F", "I"), "I": ("D", "I")}
    model = assign_potentials(H, p_ve, assignment)
    assert max_abs_diff(build_joint(model), marginalize_errors(p_ve, H)) < 1e-10


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 100_000))
def test_marginal_markovian_and_reproduced(seed):
    rng = np.random.default_rng(seed)
    g = random_chain_graph(int(rng.integers(2, 5)), rng, p_edge=0.7, cards=(2, 3))
    H, _, _, p_ve = random_eamp_instance(g, seed=seed, randomize=bool(seed % 2))
    p = marginalize_errors(p_ve, H)
    ok, bad = is_markovian(p, g, 1e-9)
    assert ok, bad[:3]
    assert max_abs_diff(build_joint(assign_potentials(H, p_ve)), p) < 1e-10


def test_equivalence_small_graphs(fig1):
    assert check_separation_equivalence(chain_abc()).ok
    assert check_separation_equivalence(ChainGraph("ABC")).ok
    rep = check_separation_equivalence(fig1)
    assert rep.ok and rep.triples_checked > 0


def test_equivalence_direct_sets_agree():
    g = figure_one()
    a = check_separation_equivalence(g)
    b = check_separation_equivalence(g, direct_sets=True)
    assert a.ok and b.ok and a.triples_checked == b.triples_checked


def test_nonuniversality():
    rep = demonstrate_nonuniversality(instances=100, seed=0)
    assert rep.max_eamp_variation <= 1e-10
    assert np.allclose(rep.counterexample_ratio, [1.0, 2.0])
    assert rep.counterexample_variation >= 0.5
    assert rep.min_variation_over_states > 1e-10
    assert rep.counterexample_markovian and rep.factorization_error < 1e-12
    assert rep.ok


def test_counterexample_is_a_distribution():
    p = counterexample_distribution()
    assert abs(p.total() - 1) < 1e-12 and np.all(p.values > 0)


def test_ratio_constant_with_equal_distinguished_states():
    g = chain_abc()
    H = to_eamp(g)
    rng = np.random.default_rng(5)
    mechs = {
        "A": Mechanism("A", (), np.array(0), np.array([0.0, 1.0])),
        "B": Mechanism("B", ("A",), np.array([1, 1]), np.array([[1.0, 1.0], [0.0, 0.0]])),
        "C": Mechanism("C", (), np.array(0), np.array([0.0, 1.0])),
    }
    p_ve = build_eamp_distribution(H, mechs, random_error_distribution(H, rng))
    _, spread = _ratio_variation(marginalize_errors(p_ve, H), 1, 1)
    assert spread <= 1e-12


def test_determination_rows(fig1):
    rows = determination_check(fig1, seed=0)
    assert len(rows) == 6 * 64
    for r in rows:
        assert r["error_determined"] == r["error_expected"]
        assert r["node_determined"] == r["node_expected"]

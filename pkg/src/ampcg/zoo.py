"""Named example graphs and a random generator for small AMP chain graphs."""
from __future__ import annotations

import itertools

import numpy as np

from .graph import ChainGraph, validate


def figure_one(card: int = 2) -> ChainGraph:
    """The six-node graph A->B, A->C, A->D, B->D, C-D, C-F, D-I, F-I."""
    names = ["A", "B", "C", "D", "F", "I"]
    return ChainGraph(
        names,
        [("A", "B"), ("A", "C"), ("A", "D"), ("B", "D")],
        [("C", "D"), ("C", "F"), ("D", "I"), ("F", "I")],
        {v: card for v in names},
    )


def chain_abc(card: int = 2) -> ChainGraph:
    """A -> B - C."""
    return ChainGraph("ABC", [("A", "B")], [("B", "C")], dict.fromkeys("ABC", card))


def chain_abc_closed(card: int = 2) -> ChainGraph:
    """A -> B - C <- A."""
    return ChainGraph("ABC", [("A", "B"), ("A", "C")], [("B", "C")], dict.fromkeys("ABC", card))


def random_chain_graph(n: int, rng: np.random.Generator, p_edge: float = 0.5,
                       p_undirected: float = 0.5, cards=(2,)) -> ChainGraph:
    """Random valid AMP chain graph on ``n`` nodes named V0..V{n-1}.

    Nodes are split into consecutive blocks (the would-be components); edges
    inside a block are undirected and edges between blocks point forward, so
    no semidirected cycle can arise.
    """
    names = [f"V{i}" for i in range(n)]
    block = []
    b = 0
    for i in range(n):
        if i > 0 and rng.random() > p_undirected:
            b += 1
        block.append(b)
    directed, undirected = [], []
    for i, j in itertools.combinations(range(n), 2):
        if rng.random() >= p_edge:
            continue
        if block[i] == block[j]:
            undirected.append((names[i], names[j]))
        else:
            directed.append((names[i], names[j]))
    card = {v: int(rng.choice(cards)) for v in names}
    graph = ChainGraph(names, directed, undirected, card)
    assert validate(graph).ok
    return graph

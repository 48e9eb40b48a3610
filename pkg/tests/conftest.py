import numpy as np
import pytest

from ampcg.zoo import chain_abc, chain_abc_closed, figure_one, random_chain_graph


def corpus(max_nodes=5, count=12, seed=2024):
    """Distinct small graphs with cards 2 and 3: two named ones plus random draws."""
    rng = np.random.default_rng(seed)
    graphs = [chain_abc(2), chain_abc_closed(3)]
    seen = {(tuple(g.sorted_directed()), tuple(g.sorted_undirected()), len(g))
            for g in graphs}
    while len(graphs) < count:
        n = int(rng.integers(3, max_nodes + 1))
        g = random_chain_graph(n, rng, p_edge=0.6, p_undirected=0.5, cards=(2, 3))
        key = (tuple(g.sorted_directed()), tuple(g.sorted_undirected()), n)
        if key in seen or not (g.directed and g.undirected):
            continue
        seen.add(key)
        graphs.append(g)
    return graphs


@pytest.fixture(scope="session")
def fig1():
    return figure_one()


@pytest.fixture(scope="session")
def small_corpus():
    return corpus()


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])

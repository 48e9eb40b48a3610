"""AMP chain graphs: representation, validation, structural queries and the
``.amp`` text format.

A graph keeps its variables in declaration order.  Every set-valued query
returns a tuple sorted by that order so results are deterministic.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable


class GraphError(ValueError):
    """Raised for unknown nodes, bad edges or malformed graph input."""


class ParseError(GraphError):
    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


def _as_names(nodes) -> list[str]:
    if nodes is None:
        return []
    if isinstance(nodes, str):
        return [nodes]
    return list(nodes)


class ChainGraph:
    """A graph with directed and undirected edges over named discrete variables.

    Construction only checks that names are well formed and that edges refer
    to declared nodes; structural validity (no semidirected cycles, no
    conflicting edges) is reported by :func:`validate`.

    ``cards`` maps a variable to its number of states and may omit variables
    for purely structural work.  ``roles`` maps an error node to the node whose
    mechanism it belongs to (see :mod:`ampcg.eamp`).
    """

    def __init__(self, variables: Iterable[str], directed=(), undirected=(),
                 cards: dict[str, int] | None = None,
                 roles: dict[str, str] | None = None):
        self.variables = tuple(variables)
        self._index = {}
        for i, v in enumerate(self.variables):
            if not isinstance(v, str) or not v:
                raise GraphError(f"invalid variable name {v!r}")
            if v in self._index:
                raise GraphError(f"duplicate variable {v!r}")
            self._index[v] = i

        self.cards = {}
        for v, c in (cards or {}).items():
            self._check_node(v)
            if int(c) < 1:
                raise GraphError(f"cardinality of {v!r} must be >= 1")
            self.cards[v] = int(c)

        self.roles = dict(roles or {})
        for e, x in self.roles.items():
            self._check_node(e)
            self._check_node(x)

        self.directed = frozenset((a, b) for a, b in directed)
        self.undirected = frozenset(frozenset(e) for e in undirected)
        for a, b in self.directed:
            self._check_node(a)
            self._check_node(b)
        for e in self.undirected:
            for v in e:
                self._check_node(v)

        self._pa = {v: set() for v in self.variables}
        self._ch = {v: set() for v in self.variables}
        self._ne = {v: set() for v in self.variables}
        for a, b in self.directed:
            self._pa[b].add(a)
            self._ch[a].add(b)
        for e in self.undirected:
            if len(e) == 2:
                a, b = tuple(e)
                self._ne[a].add(b)
                self._ne[b].add(a)

    # -- basics -----------------------------------------------------------

    def _check_node(self, v):
        if v not in self._index:
            raise GraphError(f"unknown node {v!r}")

    def nodeset(self, nodes) -> set[str]:
        names = _as_names(nodes)
        for v in names:
            self._check_node(v)
        return set(names)

    def sort(self, nodes) -> tuple[str, ...]:
        """Return ``nodes`` as a tuple in declaration order."""
        return tuple(sorted(set(_as_names(nodes)), key=self._index.__getitem__))

    def index(self, v: str) -> int:
        return self._index[v]

    def __contains__(self, v) -> bool:
        return v in self._index

    def __len__(self) -> int:
        return len(self.variables)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ChainGraph):
            return NotImplemented
        return (self.variables == other.variables
                and self.directed == other.directed
                and self.undirected == other.undirected
                and self.cards == other.cards
                and self.roles == other.roles)

    def __hash__(self):
        return hash((self.variables, self.directed, self.undirected))

    def __repr__(self):
        edges = [f"{a}->{b}" for a, b in self.sorted_directed()]
        edges += [f"{a}-{b}" for a, b in self.sorted_undirected()]
        return f"ChainGraph({', '.join(edges) or ' '.join(self.variables)})"

    def sorted_directed(self) -> list[tuple[str, str]]:
        return sorted(self.directed, key=lambda e: (self._index[e[0]], self._index[e[1]]))

    def sorted_undirected(self) -> list[tuple[str, str]]:
        pairs = [self.sort(e) for e in self.undirected if len(e) == 2]
        return sorted(pairs, key=lambda e: (self._index[e[0]], self._index[e[1]]))

    def card(self, v: str) -> int:
        try:
            return self.cards[v]
        except KeyError:
            raise GraphError(f"variable {v!r} has no cardinality") from None

    def require_cards(self):
        missing = [v for v in self.variables if v not in self.cards]
        if missing:
            raise GraphError("missing cardinalities for " + ", ".join(missing))

    def with_cards(self, cards: dict[str, int]) -> "ChainGraph":
        merged = dict(self.cards)
        merged.update(cards)
        return ChainGraph(self.variables, self.directed, self.undirected, merged, self.roles)

    def edge(self, a: str, b: str) -> str | None:
        """Edge type between ``a`` and ``b`` seen from ``a``: '->', '<-', '-' or None."""
        if (a, b) in self.directed:
            return "->"
        if (b, a) in self.directed:
            return "<-"
        if frozenset((a, b)) in self.undirected:
            return "-"
        return None

    def is_undirected(self) -> bool:
        return not self.directed

    # -- family queries ---------------------------------------------------

    def parents(self, X) -> tuple[str, ...]:
        X = self.nodeset(X)
        return self.sort({p for x in X for p in self._pa[x]} - X)

    def children(self, X) -> tuple[str, ...]:
        X = self.nodeset(X)
        return self.sort({c for x in X for c in self._ch[x]} - X)

    def neighbours(self, X) -> tuple[str, ...]:
        X = self.nodeset(X)
        return self.sort({n for x in X for n in self._ne[x]} - X)

    def adjacents(self, X) -> tuple[str, ...]:
        X = self.nodeset(X)
        adj = set()
        for x in X:
            adj |= self._pa[x] | self._ch[x] | self._ne[x]
        return self.sort(adj - X)

    def descendants(self, X) -> tuple[str, ...]:
        X = self.nodeset(X)
        seen = set(X)
        queue = deque(X)
        while queue:
            v = queue.popleft()
            for w in self._ch[v] | self._ne[v]:
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        return self.sort(seen - X)

    def non_descendants(self, X) -> tuple[str, ...]:
        X = self.nodeset(X)
        return self.sort(set(self.variables) - X - set(self.descendants(X)))

    def strict_ascendants(self, X) -> tuple[str, ...]:
        X = self.nodeset(X)
        seen = set(X)
        queue = deque(X)
        while queue:
            v = queue.popleft()
            for w in self._pa[v]:
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        return self.sort(seen - X)

    # -- components and subgraphs -----------------------------------------

    def components(self) -> list[tuple[str, ...]]:
        """Connectivity components, ordered by their first node."""
        seen = set()
        out = []
        for v in self.variables:
            if v in seen:
                continue
            comp = {v}
            queue = deque([v])
            while queue:
                u = queue.popleft()
                for w in self._ne[u]:
                    if w not in comp:
                        comp.add(w)
                        queue.append(w)
            seen |= comp
            out.append(self.sort(comp))
        return out

    def component_of(self, x: str) -> tuple[str, ...]:
        self._check_node(x)
        for comp in self.components():
            if x in comp:
                return comp
        raise AssertionError("unreachable")

    def component_closure(self, X) -> tuple[str, ...]:
        """Union of the components of the nodes in ``X`` (Cc_G(X))."""
        X = self.nodeset(X)
        return self.sort({v for comp in self.components() if X & set(comp) for v in comp})

    def induced(self, X) -> "ChainGraph":
        X = self.nodeset(X)
        keep = self.sort(X)
        return ChainGraph(
            keep,
            [(a, b) for a, b in self.directed if a in X and b in X],
            [e for e in self.undirected if e <= X],
            {v: c for v, c in self.cards.items() if v in X},
            {e: x for e, x in self.roles.items() if e in X and x in X},
        )


# -- validation ---------------------------------------------------------------

@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    cycles: list[tuple[str, ...]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def _undirected_path(graph: ChainGraph, start: str, goal: str, within: set[str]) -> list[str]:
    prev = {start: None}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        if u == goal:
            break
        for w in sorted(graph._ne[u] & within, key=graph.index):
            if w not in prev:
                prev[w] = u
                queue.append(w)
    path = [goal]
    while path[-1] != start:
        path.append(prev[path[-1]])
    return path[::-1]


def validate(graph: ChainGraph) -> ValidationReport:
    """Report conflicting edges and every class of semidirected cycles.

    Semidirected cycles are found by contracting each connectivity component
    to a single node and looking for directed cycles among the components
    (including a directed edge inside one component).
    """
    report = ValidationReport()
    for a, b in graph.sorted_directed():
        if a == b:
            report.violations.append(f"self-loop {a} -> {a}")
        elif (b, a) in graph.directed and graph.index(a) < graph.index(b):
            report.violations.append(f"opposite directed edges {a} -> {b} and {b} -> {a}")
        if frozenset((a, b)) in graph.undirected:
            report.violations.append(f"both directed and undirected edge between {a} and {b}")
    for e in graph.undirected:
        if len(e) == 1:
            (a,) = tuple(e)
            report.violations.append(f"self-loop {a} - {a}")

    comps = graph.components()
    comp_id = {v: i for i, comp in enumerate(comps) for v in comp}
    succ = {i: {} for i in range(len(comps))}
    for a, b in graph.sorted_directed():
        if a == b:
            continue
        succ[comp_id[a]].setdefault(comp_id[b], (a, b))

    for scc in _strongly_connected(succ):
        if len(scc) == 1:
            (i,) = scc
            if i not in succ[i]:
                continue
        cycle = _component_cycle(succ, scc)
        route = []
        for k, (a, b) in enumerate(cycle):
            a2, _ = cycle[(k + 1) % len(cycle)]
            route.append(a)
            route.extend(_undirected_path(graph, b, a2, set(comps[comp_id[b]]))[:-1])
        route.append(route[0])
        report.cycles.append(tuple(route))
        report.violations.append("semidirected cycle " + ",".join(route))
    return report


def _strongly_connected(succ: dict[int, dict[int, tuple]]) -> list[list[int]]:
    index, low, on_stack, stack, out = {}, {}, set(), [], []
    counter = itertools.count()

    def visit(v):
        index[v] = low[v] = next(counter)
        stack.append(v)
        on_stack.add(v)
        for w in sorted(succ[v]):
            if w not in index:
                visit(w)
                low[v] = min(low[v], low[w])
            elif w in on_stack:
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            scc = []
            while True:
                w = stack.pop()
                on_stack.discard(w)
                scc.append(w)
                if w == v:
                    break
            out.append(sorted(scc))

    for v in sorted(succ):
        if v not in index:
            visit(v)
    return sorted(out)


def _component_cycle(succ, scc) -> list[tuple[str, str]]:
    """One directed cycle of component-level edges inside ``scc``."""
    members = set(scc)
    start = scc[0]
    if start in succ[start]:
        return [succ[start][start]]
    prev = {start: None}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for w in sorted(succ[u]):
            if w not in members:
                continue
            if w == start:
                edges = [succ[u][start]]
                while prev[u] is not None:
                    edges.append(succ[prev[u]][u])
                    u = prev[u]
                return edges[::-1]
            if w not in prev:
                prev[w] = u
                queue.append(w)
    raise AssertionError("no cycle in strongly connected set")


def require_valid(graph: ChainGraph):
    report = validate(graph)
    if not report.ok:
        raise GraphError("invalid AMP chain graph: " + "; ".join(report.violations))


# -- undirected graph helpers -------------------------------------------------

def _require_undirected(ug: ChainGraph):
    if ug.directed:
        raise GraphError("expected an undirected graph")


def cliques(ug: ChainGraph) -> list[tuple[str, ...]]:
    """Maximal complete sets, by Bron-Kerbosch with pivoting."""
    _require_undirected(ug)
    out = []

    def expand(r, p, x):
        if not p and not x:
            out.append(ug.sort(r))
            return
        pivot = max(p | x, key=lambda u: (len(ug._ne[u] & p), -ug.index(u)))
        for v in sorted(p - ug._ne[pivot], key=ug.index):
            expand(r | {v}, p & ug._ne[v], x & ug._ne[v])
            p = p - {v}
            x = x | {v}

    if ug.variables:
        expand(set(), set(ug.variables), set())
    return sorted(out, key=lambda c: [ug.index(v) for v in c])


def complete_sets(ug: ChainGraph) -> list[tuple[str, ...]]:
    """All complete sets including the empty set, sorted by size then order."""
    found = {()}
    for clique in cliques(ug):
        for r in range(1, len(clique) + 1):
            found.update(itertools.combinations(clique, r))
    return sorted(found, key=lambda s: (len(s), [ug.index(v) for v in s]))


def is_complete(ug: ChainGraph, nodes) -> bool:
    nodes = list(nodes)
    return all(frozenset((a, b)) in ug.undirected for a, b in itertools.combinations(nodes, 2))


def marginal_graph(graph: ChainGraph, C, D) -> ChainGraph:
    """Undirected graph over ``D`` joining nodes adjacent in ``G_C`` or
    connected in ``G_C`` through nodes outside ``D``."""
    C = graph.nodeset(C)
    D = graph.nodeset(D)
    if graph.sort(C) not in graph.components():
        raise GraphError(f"{graph.sort(C)} is not a connectivity component")
    if not D <= C:
        raise GraphError("D must be a subset of C")
    outside = C - D
    edges = set()
    for x in D:
        reached = set()
        queue = deque([x])
        seen = {x}
        while queue:
            u = queue.popleft()
            for w in graph._ne[u]:
                if w in D and w != x:
                    reached.add(w)
                elif w in outside and w not in seen:
                    seen.add(w)
                    queue.append(w)
        edges.update(frozenset((x, y)) for y in reached)
    return ChainGraph(graph.sort(D), (), edges,
                      {v: c for v, c in graph.cards.items() if v in D})


# -- .amp text format ---------------------------------------------------------

def parse_amp(text: str) -> ChainGraph:
    """Parse the line-based ``.amp`` format.

    ``var <name> [card]`` declares a variable, ``edge A -> B`` and
    ``edge A - B`` add edges, ``#`` starts a comment.  A comment line of the
    form ``# role error-of X`` tags the most recently declared variable as the
    error node of ``X``.
    """
    variables, cards, directed, undirected, roles = [], {}, [], [], {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("#"):
            words = line[1:].split()
            if words[:2] == ["role", "error-of"]:
                if len(words) != 3 or not variables:
                    raise ParseError(lineno, "malformed role annotation")
                roles[variables[-1]] = words[2]
            continue
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        if words[0] == "var":
            if len(words) not in (2, 3):
                raise ParseError(lineno, "expected 'var <name> [cardinality]'")
            name = words[1]
            if name in variables:
                raise ParseError(lineno, f"duplicate variable {name!r}")
            variables.append(name)
            if len(words) == 3:
                try:
                    card = int(words[2])
                except ValueError:
                    raise ParseError(lineno, f"bad cardinality {words[2]!r}") from None
                if card < 1:
                    raise ParseError(lineno, "cardinality must be >= 1")
                cards[name] = card
        elif words[0] == "edge":
            if len(words) != 4 or words[2] not in ("->", "-"):
                raise ParseError(lineno, "expected 'edge A -> B' or 'edge A - B'")
            a, b = words[1], words[3]
            for v in (a, b):
                if v not in variables:
                    raise ParseError(lineno, f"undeclared variable {v!r}")
            (directed if words[2] == "->" else undirected).append((a, b))
        else:
            raise ParseError(lineno, f"unknown directive {words[0]!r}")
    for e, x in roles.items():
        if x not in variables:
            raise ParseError(0, f"role refers to undeclared variable {x!r}")
    return ChainGraph(variables, directed, undirected, cards, roles)


def format_amp(graph: ChainGraph) -> str:
    lines = []
    for v in graph.variables:
        lines.append(f"var {v} {graph.cards[v]}" if v in graph.cards else f"var {v}")
        if v in graph.roles:
            lines.append(f"# role error-of {graph.roles[v]}")
    for a, b in graph.sorted_directed():
        lines.append(f"edge {a} -> {b}")
    for a, b in graph.sorted_undirected():
        lines.append(f"edge {a} - {b}")
    return "\n".join(lines) + "\n"


def read_amp(path) -> ChainGraph:
    with open(path, encoding="utf-8") as fh:
        return parse_amp(fh.read())


def write_amp(graph: ChainGraph, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_amp(graph))

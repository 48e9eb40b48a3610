"""Dense discrete factors, datasets and the arithmetic shared by every module.

Values are stored as an ``ndarray`` with one axis per scope variable, so the
flattened table is row-major in scope order.  Operations between factors
always align variables by name.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np


class FactorError(ValueError):
    pass


class Factor:
    """A non-negative table over an ordered scope of named variables."""

    __slots__ = ("scope", "cards", "values")

    def __init__(self, scope: Sequence[str], cards: Sequence[int], values=None):
        self.scope = tuple(scope)
        self.cards = tuple(int(c) for c in cards)
        if len(set(self.scope)) != len(self.scope):
            raise FactorError(f"repeated variable in scope {self.scope}")
        if len(self.cards) != len(self.scope):
            raise FactorError("scope and cardinalities differ in length")
        if values is None:
            values = np.ones(self.cards)
        values = np.asarray(values, dtype=float)
        if values.size != int(np.prod(self.cards, dtype=np.int64)):
            raise FactorError(f"expected {int(np.prod(self.cards))} values, got {values.size}")
        values = values.reshape(self.cards)
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise FactorError("factor entries must be finite and non-negative")
        values.setflags(write=False)
        self.values = values

    # -- construction helpers ---------------------------------------------

    @classmethod
    def unit(cls, scope=(), cards=()) -> "Factor":
        return cls(scope, cards, np.ones(tuple(cards)))

    @classmethod
    def scalar(cls, value: float) -> "Factor":
        return cls((), (), np.array(float(value)))

    @classmethod
    def uniform(cls, scope, cards) -> "Factor":
        n = int(np.prod(cards, dtype=np.int64))
        return cls(scope, cards, np.full(tuple(cards), 1.0 / n))

    def card_map(self) -> dict[str, int]:
        return dict(zip(self.scope, self.cards))

    def __repr__(self):
        inner = ", ".join(f"{v}:{c}" for v, c in zip(self.scope, self.cards))
        return f"Factor({inner})"

    # -- alignment --------------------------------------------------------

    def aligned(self, scope: Sequence[str]) -> np.ndarray:
        """Values transposed and reshaped to broadcast against ``scope``."""
        missing = set(self.scope) - set(scope)
        if missing:
            raise FactorError(f"scope {tuple(scope)} lacks {sorted(missing)}")
        present = [v for v in scope if v in self.scope]
        arr = np.transpose(self.values, [self.scope.index(v) for v in present])
        shape = [self.cards[self.scope.index(v)] if v in self.scope else 1 for v in scope]
        return arr.reshape(shape)

    def reorder(self, scope: Sequence[str]) -> "Factor":
        scope = tuple(scope)
        if set(scope) != set(self.scope) or len(scope) != len(self.scope):
            raise FactorError("reorder needs a permutation of the scope")
        cm = self.card_map()
        return Factor(scope, [cm[v] for v in scope], self.aligned(scope))

    def _union(self, other: "Factor") -> tuple[tuple[str, ...], tuple[int, ...]]:
        cm = self.card_map()
        for v, c in zip(other.scope, other.cards):
            if cm.setdefault(v, c) != c:
                raise FactorError(f"cardinality mismatch for {v!r}")
        scope = self.scope + tuple(v for v in other.scope if v not in self.scope)
        return scope, tuple(cm[v] for v in scope)

    # -- arithmetic -------------------------------------------------------

    def product(self, other: "Factor") -> "Factor":
        scope, cards = self._union(other)
        return Factor(scope, cards, self.aligned(scope) * other.aligned(scope))

    __mul__ = product

    def divide(self, other: "Factor") -> "Factor":
        """Entrywise quotient with 0/0 = 0; x/0 for x > 0 is an error."""
        scope, cards = self._union(other)
        num = np.broadcast_to(self.aligned(scope), cards)
        den = np.broadcast_to(other.aligned(scope), cards)
        zero = den == 0
        if np.any(num[zero] > 0):
            raise FactorError("division of a positive entry by zero")
        out = np.divide(num, den, out=np.zeros(cards), where=~zero)
        return Factor(scope, cards, out)

    __truediv__ = divide

    def marginalize(self, keep) -> "Factor":
        """Sum out every variable not in ``keep`` (order of ``keep`` preserved)."""
        keep = [v for v in keep if v in self.scope] if not isinstance(keep, str) else [keep]
        drop = tuple(i for i, v in enumerate(self.scope) if v not in keep)
        summed = self.values.astype(np.longdouble).sum(axis=drop).astype(float)
        rest = [v for v in self.scope if v in keep]
        cm = self.card_map()
        f = Factor(rest, [cm[v] for v in rest], summed)
        return f.reorder(keep) if rest != list(keep) else f

    def sum_out(self, variables) -> "Factor":
        variables = set([variables] if isinstance(variables, str) else variables)
        return self.marginalize([v for v in self.scope if v not in variables])

    def total(self) -> float:
        return float(self.values.astype(np.longdouble).sum())

    def normalize(self) -> "Factor":
        z = self.total()
        if z <= 0:
            raise FactorError("cannot normalize an all-zero factor")
        return Factor(self.scope, self.cards, self.values / z)

    def reduce(self, evidence: Mapping[str, int]) -> "Factor":
        """Zero every entry inconsistent with ``evidence``; the scope is kept."""
        mask = np.ones(self.cards, dtype=bool)
        for v, s in evidence.items():
            if v not in self.scope:
                continue
            axis = self.scope.index(v)
            if not 0 <= s < self.cards[axis]:
                raise FactorError(f"state {s} out of range for {v!r}")
            sel = np.zeros(self.cards[axis], dtype=bool)
            sel[s] = True
            shape = [1] * len(self.scope)
            shape[axis] = self.cards[axis]
            mask = mask & sel.reshape(shape)
        return Factor(self.scope, self.cards, np.where(mask, self.values, 0.0))

    def slice(self, assignment: Mapping[str, int]) -> "Factor":
        """Restrict to ``assignment`` and drop the assigned variables."""
        index = tuple(assignment[v] if v in assignment else slice(None) for v in self.scope)
        rest = [(v, c) for v, c in zip(self.scope, self.cards) if v not in assignment]
        return Factor([v for v, _ in rest], [c for _, c in rest], self.values[index])

    def map(self, fn) -> "Factor":
        return Factor(self.scope, self.cards, fn(self.values))

    def value(self, assignment: Mapping[str, int]) -> float:
        return float(self.values[tuple(assignment[v] for v in self.scope)])

    def allclose(self, other: "Factor", atol: float) -> bool:
        return max_abs_diff(self, other) <= atol

    def to_json(self) -> dict:
        return {"scope": list(self.scope), "values": self.values.ravel().tolist()}


def product(*factors: Factor) -> Factor:
    out = Factor.scalar(1.0)
    for f in factors:
        out = out.product(f)
    return out


def divide(f: Factor, g: Factor) -> Factor:
    return f.divide(g)


def marginalize(f: Factor, keep) -> Factor:
    return f.marginalize(keep)


def normalize(f: Factor) -> Factor:
    return f.normalize()


def reduce(f: Factor, evidence: Mapping[str, int]) -> Factor:
    return f.reduce(evidence)


def max_abs_diff(f: Factor, g: Factor) -> float:
    """Largest entrywise difference, aligning ``g`` to ``f``'s scope."""
    if set(f.scope) != set(g.scope):
        raise FactorError(f"scopes differ: {f.scope} vs {g.scope}")
    if not f.scope:
        return abs(float(f.values) - float(g.values))
    return float(np.max(np.abs(f.values - g.aligned(f.scope))))


def assignments(scope: Sequence[str], cards: Sequence[int]):
    """Iterate over all joint states as dicts, row-major in ``scope``."""
    for states in itertools.product(*(range(c) for c in cards)):
        yield dict(zip(scope, states))


# -- distributions ------------------------------------------------------------

def conditional(p: Factor, target, given) -> Factor:
    """``p(target | given)`` as a factor over target followed by given."""
    target = [target] if isinstance(target, str) else list(target)
    given = [given] if isinstance(given, str) else list(given)
    if set(target) & set(given):
        raise FactorError("target and given overlap")
    joint = p.marginalize(target + given)
    margin = joint.marginalize(given)
    if np.any(margin.values <= 0):
        raise FactorError(f"zero probability on the conditioning margin {tuple(given)}")
    return joint.divide(margin)


def independence_test(p: Factor, X, Y, Z=(), tol: float = 1e-9) -> bool:
    """Numeric test of X independent of Y given Z in the joint table ``p``.

    Passes iff max |p(x,y|z) - p(x|z) p(y|z)| <= tol over all assignments,
    skipping conditioning states of zero probability.
    """
    X, Y, Z = (list(s) if not isinstance(s, str) else [s] for s in (X, Y, Z))
    if set(X) & set(Y) or set(X) & set(Z) or set(Y) & set(Z):
        raise FactorError("X, Y and Z must be disjoint")
    if not X or not Y:
        return True
    return independence_gap(p, X, Y, Z) <= tol


def independence_gap(p: Factor, X, Y, Z=()) -> float:
    X, Y, Z = list(X), list(Y), list(Z)
    joint = p.marginalize(Z + X + Y)
    cm = joint.card_map()
    nz = int(np.prod([cm[v] for v in Z], dtype=np.int64))
    nx = int(np.prod([cm[v] for v in X], dtype=np.int64))
    ny = int(np.prod([cm[v] for v in Y], dtype=np.int64))
    t = joint.values.reshape(nz, nx, ny)
    pz = t.sum(axis=(1, 2))
    ok = pz > 0
    t, pz = t[ok], pz[ok]
    cond = t / pz[:, None, None]
    px = cond.sum(axis=2)
    py = cond.sum(axis=1)
    if cond.size == 0:
        return 0.0
    return float(np.max(np.abs(cond - px[:, :, None] * py[:, None, :])))


def entropy(p: Factor) -> float:
    v = p.values[p.values > 0]
    return float(-(v * np.log(v)).sum())


# -- datasets -----------------------------------------------------------------

@dataclass
class Dataset:
    """Complete discrete observations: one row per instance, one column per variable."""
    header: tuple[str, ...]
    rows: np.ndarray

    def __post_init__(self):
        self.header = tuple(self.header)
        self.rows = np.asarray(self.rows, dtype=np.int64).reshape(-1, len(self.header))
        if np.any(self.rows < 0):
            raise FactorError("states must be non-negative")

    def __len__(self):
        return self.rows.shape[0]

    def check_cards(self, cards: Mapping[str, int]):
        for j, v in enumerate(self.header):
            if v not in cards:
                raise FactorError(f"column {v!r} is not a model variable")
            if len(self) and self.rows[:, j].max() >= cards[v]:
                raise FactorError(f"state out of range in column {v!r}")

    def counts(self, variables: Sequence[str], cards: Mapping[str, int]) -> Factor:
        variables = list(variables)
        shape = tuple(cards[v] for v in variables)
        table = np.zeros(shape)
        if variables:
            cols = [self.header.index(v) for v in variables]
            np.add.at(table, tuple(self.rows[:, c] for c in cols), 1.0)
        else:
            table = np.array(float(len(self)))
        return Factor(variables, shape, table)

    @classmethod
    def from_csv(cls, text: str) -> "Dataset":
        reader = csv.reader(io.StringIO(text))
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FactorError("empty CSV") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise FactorError(f"line {lineno}: expected {len(header)} cells")
            try:
                rows.append([int(c) for c in row])
            except ValueError:
                raise FactorError(f"line {lineno}: cells must be state indices") from None
        return cls(header, np.array(rows, dtype=np.int64).reshape(-1, len(header)))

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(self.header)
        writer.writerows(self.rows.tolist())
        return out.getvalue()


def read_csv(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return Dataset.from_csv(fh.read())


def empirical_distribution(data: Dataset, cards: Mapping[str, int], variables=None,
                           smoothing: float = 0.0) -> Factor:
    """Row frequencies (plus ``smoothing`` pseudo-counts per cell), normalized."""
    if smoothing < 0:
        raise FactorError("smoothing must be non-negative")
    variables = list(variables or data.header)
    data.check_cards(cards)
    if len(data) == 0 and smoothing == 0:
        raise FactorError("empty dataset without smoothing")
    counts = data.counts(variables, cards)
    return counts.map(lambda v: v + smoothing).normalize()


# -- JSON persistence -----------------------------------------------------------

def factors_to_json(cards: Mapping[str, int], factors: Sequence[Factor], order=None) -> dict:
    order = list(order or cards)
    return {
        "schema": 1,
        "variables": [{"name": v, "card": int(cards[v])} for v in order],
        "factors": [f.to_json() for f in factors],
    }


def factors_from_json(obj: dict) -> tuple[dict[str, int], list[Factor]]:
    cards = {d["name"]: int(d["card"]) for d in obj["variables"]}
    factors = []
    for d in obj["factors"]:
        scope = d["scope"]
        factors.append(Factor(scope, [cards[v] for v in scope], np.array(d["values"], dtype=float)))
    return cards, factors


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False)

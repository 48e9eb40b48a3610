"""Command-line interface.

Exit codes: 0 success, 1 a false answer or failed check, 2 usage or parse
error, 3 data or model error.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings

import numpy as np

from . import __version__
from .eamp import check_separation_equivalence, demonstrate_nonuniversality, to_eamp
from .factor import Dataset, Factor, FactorError, read_csv
from .factorization import FactorizedModel, factorize, generate_markovian
from .graph import ChainGraph, GraphError, ParseError, format_amp, read_amp, validate
from .inference import (InferenceError, assign_factors, build_tree, moralize, probability_of_evidence,
                        propagate, query, tree_for_factors, triangulate_and_order)
from .learning import (DEFAULT_SWEEPS, DEFAULT_TOL, LearningError, closed_form_fit, ipfp_fit,
                       joint_of, loglik, merged_domain_ipfp)
from .oracle import OracleError, enum_infer, full_joint, is_markovian, path_oracle
from .separation import EAMP, IDENTITY, find_open_path

SCHEMA = 1
MAX_SAMPLE_CELLS = 2 ** 22

EXIT_OK, EXIT_FALSE, EXIT_USAGE, EXIT_DATA = 0, 1, 2, 3


class UsageError(Exception):
    pass


# -- models on disk ---------------------------------------------------------------

class GenericModel:
    """A graph plus an untagged factor list whose product is the joint."""

    def __init__(self, graph: ChainGraph, factors: list[Factor]):
        self.graph = graph
        self.factors = list(factors)

    def factor_list(self) -> list[Factor]:
        return list(self.factors)

    def to_json(self) -> dict:
        g = self.graph
        return {
            "schema": SCHEMA,
            "variables": [{"name": v, "card": g.card(v)} for v in g.variables],
            "graph": {"directed": [list(e) for e in g.sorted_directed()],
                      "undirected": [list(e) for e in g.sorted_undirected()]},
            "factors": [f.to_json() for f in self.factors],
        }


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if all("component" in d for d in obj.get("factors", [])):
        return FactorizedModel.from_json(obj)
    names = [d["name"] for d in obj["variables"]]
    cards = {d["name"]: int(d["card"]) for d in obj["variables"]}
    g = obj.get("graph", {})
    graph = ChainGraph(names, g.get("directed", []), g.get("undirected", []), cards)
    factors = [Factor(d["scope"], [cards[v] for v in d["scope"]], np.array(d["values"], dtype=float))
               for d in obj["factors"]]
    return GenericModel(graph, factors)


def _tree(model):
    if isinstance(model, FactorizedModel):
        return assign_factors(build_tree(model.graph), model)
    return assign_factors(tree_for_factors(model.graph, model.factors), model.factors)


def sample(model, n: int, seed=None) -> Dataset:
    """``n`` independent draws from the model joint by inverting its cumulative table."""
    if n < 0:
        raise ValueError("the sample size must be non-negative")
    if seed is not None and seed < 0:
        raise ValueError("the seed must be a non-negative integer")
    variables, joint = full_joint(model, model.graph.variables)
    if joint.size > MAX_SAMPLE_CELLS:
        raise OracleError(f"joint has {joint.size} cells, more than {MAX_SAMPLE_CELLS}")
    rng = np.random.default_rng(seed)
    if np.any(joint < 0):
        raise OracleError("the model joint has negative entries")
    cdf = np.cumsum(joint.ravel())
    idx = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    idx = np.minimum(idx, joint.size - 1)
    rows = np.array(np.unravel_index(idx, joint.shape), dtype=np.int64).T.reshape(n, len(variables))
    return Dataset(variables, rows)


# -- helpers -------------------------------------------------------------------------

def _names(text: str | None) -> list[str]:
    if not text:
        return []
    return [t.strip() for t in text.split(",") if t.strip()]


def _evidence(text: str | None) -> dict[str, int]:
    out = {}
    for item in _names(text):
        if "=" not in item:
            raise UsageError(f"evidence item {item!r} is not NAME=STATE")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = int(v)
        except ValueError:
            raise UsageError(f"evidence state {v!r} is not an integer") from None
    return out


def _emit(args, payload: dict, human: str):
    if args.json:
        print(json.dumps({"schema": SCHEMA, **payload}, indent=2))
    else:
        print(human)


def _table_csv(f: Factor) -> str:
    lines = [",".join(list(f.scope) + ["p"])]
    for idx in np.ndindex(*f.cards):
        lines.append(",".join([str(i) for i in idx] + [repr(float(f.values[idx]))]))
    return "\n".join(lines)


# -- subcommands ----------------------------------------------------------------------

def cmd_validate(args) -> int:
    g = read_amp(args.graph)
    rep = validate(g)
    _emit(args, {"valid": rep.ok, "violations": rep.violations},
          "valid" if rep.ok else "invalid\n" + "\n".join(rep.violations))
    return EXIT_OK if rep.ok else EXIT_FALSE


def cmd_components(args) -> int:
    g = read_amp(args.graph)
    comps = g.components()
    _emit(args, {"components": [list(c) for c in comps]}, "\n".join(" ".join(c) for c in comps))
    return EXIT_OK


def cmd_separate(args) -> int:
    g = read_amp(args.graph)
    X, Y, Z = _names(args.x), _names(args.y), _names(args.given)
    if not X or not Y:
        raise UsageError("--x and --y are required")
    path = find_open_path(g, X, Y, Z, args.rule)
    sep = path is None
    _emit(args, {"separated": sep, "open_path": list(path) if path else None},
          "separated" if sep else "connected via " + " ".join(path))
    return EXIT_OK if sep else EXIT_FALSE


def cmd_moralize(args) -> int:
    m = moralize(read_amp(args.graph))
    _emit(args, {"edges": [list(e) for e in m.sorted_undirected()]}, format_amp(m).rstrip())
    return EXIT_OK


def cmd_triangulate(args) -> int:
    g = read_amp(args.graph)
    tree = triangulate_and_order(moralize(g))
    human = "\n".join(f"Q{i + 1}: {' '.join(Q)} | S: {' '.join(S)}"
                      for i, (Q, S) in enumerate(zip(tree.cliques, tree.separators)))
    _emit(args, tree.describe(), human)
    return EXIT_OK


def cmd_infer(args) -> int:
    model = load_model(args.model)
    targets = _names(args.query)
    if not targets:
        raise UsageError("--query is required")
    tree = _tree(model)
    ev = _evidence(args.evidence)
    table = query(tree, None, targets, ev)
    payload = {"query": targets, "evidence": ev, "table": table.to_json()}
    human = _table_csv(table)
    if args.show_tree:
        payload["tree"] = tree.describe()
        human = json.dumps(tree.describe()) + "\n" + human
    _emit(args, payload, human)
    return EXIT_OK


def cmd_learn(args) -> int:
    g = read_amp(args.graph)
    data = read_csv(args.data)
    tol = args.tol if args.tol is not None else DEFAULT_TOL
    if args.estimator == "ipfp":
        model, report = ipfp_fit(g, data, tol, args.max_sweeps, args.smoothing)
        out = model.to_json()
        out["report"] = report.to_json()
    elif args.estimator == "merged":
        factors, report = merged_domain_ipfp(g, data, tol, args.max_sweeps, args.smoothing)
        out = GenericModel(g, factors).to_json()
        out["report"] = report.to_json()
    else:
        factors = closed_form_fit(g, data, args.smoothing)
        out = GenericModel(g, factors).to_json()
        out["report"] = {"estimator": "closedform"}
    out["schema"] = SCHEMA
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_loglik(args) -> int:
    model = load_model(args.model)
    data = read_csv(args.data)
    if isinstance(model, FactorizedModel):
        value = loglik(model, data)
    else:
        joint = joint_of(model.factors, model.graph)
        counts = data.counts(model.graph.variables, model.graph.cards)
        mask = counts.values > 0
        if np.any(joint.values[mask] <= 0):
            value = float("-inf")
        else:
            value = float(np.sum(counts.values[mask] * np.log(joint.values[mask])))
    _emit(args, {"loglik": value, "n": len(data)}, repr(value))
    return EXIT_OK


def cmd_eamp(args) -> int:
    H = to_eamp(read_amp(args.graph))
    text = format_amp(H)
    if args.json:
        _emit(args, {"amp": text}, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_sample(args) -> int:
    model = load_model(args.model)
    data = sample(model, args.n, args.seed)
    sys.stdout.write(data.to_csv())
    return EXIT_OK


def cmd_generate(args) -> int:
    g = read_amp(args.graph)
    p = generate_markovian(g, args.seed)
    print(json.dumps(factorize(p, g).to_json(), indent=2))
    return EXIT_OK


def cmd_check_infer(args) -> int:
    model = load_model(args.model)
    tree = _tree(model)
    ev = _evidence(args.evidence)
    queries = [_names(args.query)] if args.query else [[v] for v in model.graph.variables]
    tol = args.tol if args.tol is not None else 1e-10
    worst = 0.0
    for targets in queries:
        a = query(tree, None, targets, ev)
        b = enum_infer(model, targets, ev)
        worst = max(worst, float(np.max(np.abs(a.values - b.values))))
    ok = worst <= tol
    _emit(args, {"ok": ok, "max_error": worst, "queries": len(queries)},
          f"{'ok' if ok else 'MISMATCH'} max error {worst:.3g} over {len(queries)} queries")
    return EXIT_OK if ok else EXIT_FALSE


def cmd_check_markov(args) -> int:
    model = load_model(args.model)
    variables, joint = full_joint(model, model.graph.variables)
    p = Factor(variables, joint.shape, joint)
    tol = args.tol if args.tol is not None else 1e-9
    ok, violations = is_markovian(p, model.graph, tol)
    _emit(args, {"markovian": ok, "violations": [[list(X), list(Y), list(Z), gap]
                                                  for X, Y, Z, gap in violations]},
          "markovian" if ok else f"{len(violations)} violated separations")
    return EXIT_OK if ok else EXIT_FALSE


def cmd_check_separation(args) -> int:
    import itertools
    g = read_amp(args.graph)
    rule = args.rule
    mismatches, total = [], 0
    for x, y in itertools.combinations(g.variables, 2):
        others = [v for v in g.variables if v not in (x, y)]
        for r in range(len(others) + 1):
            for Z in itertools.combinations(others, r):
                total += 1
                a = find_open_path(g, [x], [y], Z, rule) is None
                if a != path_oracle(g, [x], [y], Z, rule):
                    mismatches.append([x, y, list(Z)])
    ok = not mismatches
    _emit(args, {"ok": ok, "queries": total, "mismatches": mismatches},
          f"{'ok' if ok else 'MISMATCH'}: {total} queries, {len(mismatches)} disagreements")
    return EXIT_OK if ok else EXIT_FALSE


def cmd_check_eamp(args) -> int:
    rep = check_separation_equivalence(read_amp(args.graph))
    _emit(args, {"ok": rep.ok, "triples": rep.triples_checked,
                 "mismatches": [[list(X), list(Y), list(Z), a, b] for X, Y, Z, a, b in rep.mismatches]},
          f"{'equivalent' if rep.ok else 'NOT equivalent'} over {rep.triples_checked} triples")
    return EXIT_OK if rep.ok else EXIT_FALSE


def cmd_check_nonuniversality(args) -> int:
    rep = demonstrate_nonuniversality(args.instances, args.seed)
    _emit(args, rep.to_json(),
          f"error-graph ratio spread {rep.max_eamp_variation:.3g}; "
          f"counterexample ratios {rep.counterexample_ratio}; {'ok' if rep.ok else 'FAILED'}")
    return EXIT_OK if rep.ok else EXIT_FALSE


def cmd_check_evidence(args) -> int:
    model = load_model(args.model)
    ev = _evidence(args.evidence)
    a = probability_of_evidence(_tree(model), None, ev)
    b_vars, joint = full_joint(model, model.graph.variables)
    idx = tuple(ev.get(v, slice(None)) for v in b_vars)
    b = float(joint[idx].sum())
    tol = args.tol if args.tol is not None else 1e-10
    ok = abs(a - b) <= tol
    _emit(args, {"ok": ok, "tree": a, "enumeration": b}, f"p(o) = {a!r} (enumeration {b!r})")
    return EXIT_OK if ok else EXIT_FALSE


# -- parser ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS,
                        help="machine-readable output")
    common.add_argument("--tol", type=float, default=argparse.SUPPRESS, help="numeric tolerance")

    p = _Parser(prog="ampcg", description="Discrete AMP chain graphs")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true", default=False)
    p.add_argument("--tol", type=float, default=None)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    add("validate", cmd_validate, "check for semidirected cycles").add_argument("graph")
    add("components", cmd_components, "list connectivity components").add_argument("graph")
    sp = add("separate", cmd_separate, "test a separation statement")
    sp.add_argument("graph")
    sp.add_argument("--x", required=True)
    sp.add_argument("--y", required=True)
    sp.add_argument("--z", "--given", dest="given", default="")
    sp.add_argument("--rule", choices=[IDENTITY, EAMP], default=IDENTITY)
    add("moralize", cmd_moralize, "print the moral graph").add_argument("graph")
    add("triangulate", cmd_triangulate, "print the ordered cliques").add_argument("graph")
    sp = add("infer", cmd_infer, "conditional table of query variables")
    sp.add_argument("model")
    sp.add_argument("--query", required=True)
    sp.add_argument("--evidence", default="")
    sp.add_argument("--show-tree", action="store_true")
    sp = add("learn", cmd_learn, "fit factors to data")
    sp.add_argument("graph")
    sp.add_argument("data")
    sp.add_argument("--max-sweeps", type=int, default=DEFAULT_SWEEPS)
    sp.add_argument("--smoothing", type=float, default=0.0)
    sp.add_argument("--estimator", choices=["ipfp", "merged", "closedform"], default="ipfp")
    sp = add("loglik", cmd_loglik, "log-likelihood of data")
    sp.add_argument("model")
    sp.add_argument("data")
    add("eamp", cmd_eamp, "print the error graph").add_argument("graph")
    sp = add("sample", cmd_sample, "draw a dataset from a model")
    sp.add_argument("model")
    sp.add_argument("-n", type=int, required=True)
    add("generate", cmd_generate, "random Markovian model for a graph").add_argument("graph")

    check = sub.add_parser("check", help="brute-force audits")
    csub = check.add_subparsers(dest="check", parser_class=_Parser)

    def cadd(name, fn, help_):
        sp = csub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    sp = cadd("infer", cmd_check_infer, "tree queries against enumeration")
    sp.add_argument("model")
    sp.add_argument("--query", default="")
    sp.add_argument("--evidence", default="")
    sp = cadd("evidence", cmd_check_evidence, "probability of evidence against enumeration")
    sp.add_argument("model")
    sp.add_argument("--evidence", default="")
    cadd("markov", cmd_check_markov, "model joint against every separation").add_argument("model")
    sp = cadd("separation", cmd_check_separation, "path search against the path oracle")
    sp.add_argument("graph")
    sp.add_argument("--rule", choices=[IDENTITY, EAMP], default=IDENTITY)
    cadd("eamp", cmd_check_eamp, "separation equivalence with the error graph").add_argument("graph")
    sp = cadd("nonuniversality", cmd_check_nonuniversality, "ratio argument on A -> B - C")
    sp.add_argument("--instances", type=int, default=100)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            raise UsageError("a subcommand is required")
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GraphError, FactorError, LearningError, InferenceError, OracleError,
            OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

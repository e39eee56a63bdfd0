"""Command-line entry point.

Every subcommand prints (or writes with ``--out``) one JSON report with a
``schema_version`` field and exits with 0 when all checks pass, 1 when an
exact check fails, 2 on usage errors and 3 when only Monte-Carlo checks
fail their tolerance.  A key-value config file given with ``--config``
supplies defaults for any flag; flags on the command line win.
"""

from __future__ import annotations

import configparser
import json
import random
import sys
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import click

from .ainfty import (
    bimodule_ambients,
    check_bimodule_relations,
    graded_algebra,
    graph_bimodule,
    pairing_bimodule,
    pairing_values,
)
from .geometry import WeightBook, WeightProblem, normalize_kind, tolerance
from .graded_core import DomainError, Splitting, basis_elements
from .graphs import (
    AdmissibleGraph,
    canonical_encode,
    compile_graph,
    edge_kinds,
    enumerate_bimodule_graphs,
    enumerate_formality_graphs,
)

SCHEMA_VERSION = 1

EXIT_PASS = 0
EXIT_CHECK = 1
EXIT_USAGE = 2
EXIT_TOLERANCE = 3


# ---------------------------------------------------------------------------
# plumbing


def _jsonable(x: Any) -> Any:
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else int(x)
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, set):
        return sorted(_jsonable(v) for v in x)
    return x


def status_of(checks: list[dict]) -> tuple[str, int]:
    """Overall status from check records ``{"pass": bool, "mode": "exact" | "numeric" | ...}``."""
    failing = [c for c in checks if not c["pass"]]
    if not failing:
        return "pass", EXIT_PASS
    if any(c.get("mode") != "numeric" for c in failing):
        return "check_failure", EXIT_CHECK
    return "tolerance_failure", EXIT_TOLERANCE


def emit(command: str, config: dict, result: Any, checks: list[dict], out: str | None) -> None:
    """Write the report and exit with the status code."""
    status, code = status_of(checks)
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "status": status,
        "checks": checks,
        "result": result,
    }
    text = json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)
    sys.exit(code)


def parse_dims(text: str) -> Splitting:
    try:
        return Splitting.parse(text)
    except (DomainError, ValueError) as exc:
        raise click.BadParameter(str(exc), param_hint="--dims") from exc


def parse_ints(text: str, name: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise click.BadParameter(f"expected comma-separated integers, got {text!r}", param_hint=name) from exc


def load_weights(path: str | None) -> dict[str, Fraction]:
    """Exact weights ``{problem key: value}`` from a JSON file (values as numbers or fraction strings)."""
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text())
        return {k: Fraction(str(v)) for k, v in data.items()}
    except (OSError, ValueError, AttributeError) as exc:
        raise click.BadParameter(f"cannot read exact weights: {exc}", param_hint="--weights-file") from exc


def make_book(opts: dict) -> WeightBook:
    return WeightBook(
        samples=opts["samples"],
        seed=opts["seed"],
        workers=opts["workers"],
        exact=load_weights(opts["weights_file"]),
        cache_path=opts["cache"],
    )


def read_config(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment.  Dashes in keys become underscores."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string("[run]\n" + Path(path).read_text())
    except (OSError, configparser.Error) as exc:
        raise click.BadParameter(f"cannot read config: {exc}", param_hint="--config") from exc
    return {k.replace("-", "_"): v for k, v in parser["run"].items()}


def common_options(f: Callable) -> Callable:
    """Flags shared by the subcommands."""
    options = [
        click.option("--dims", default="0,0,1,0", show_default=True, help="Block dimensions uv,uvperp,upv,perp."),
        click.option("--samples", default=200_000, show_default=True, type=click.IntRange(min=1), help="Monte-Carlo samples per weight."),
        click.option("--seed", default=0, show_default=True, type=int, help="Base seed of the weight estimates."),
        click.option("--order", default=1, show_default=True, type=click.IntRange(min=0), help="Order in hbar."),
        click.option("--npoly", default=2, show_default=True, type=click.IntRange(min=0), help="Polynomial degree of the probe basis."),
        click.option("--cache", default=None, type=click.Path(dir_okay=False), help="JSON cache of weight estimates."),
        click.option("--out", default=None, type=click.Path(dir_okay=False), help="Write the report here instead of stdout."),
        click.option("--weights-file", default=None, type=click.Path(dir_okay=False), help="JSON table of exact weights."),
        click.option("--workers", default=1, show_default=True, type=click.IntRange(min=1), help="Sampling threads."),
    ]
    for opt in reversed(options):
        f = opt(f)
    return f


def _config(opts: dict) -> dict:
    return {k: v for k, v in sorted(opts.items())}


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_path", default=None, type=click.Path(exists=True, dir_okay=False), help="Key-value config file.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None) -> None:
    """Command-line checks for graph-built bimodules and their Koszul duality."""
    if config_path:
        values = read_config(config_path)
        ctx.default_map = {name: dict(values) for name in main.commands}


# ---------------------------------------------------------------------------
# graphs


@main.command()
@click.option("--type", "kind", type=click.Choice(["bimodule", "A", "B", "K"]), default="bimodule", show_default=True)
@click.option("--m", default=1, show_default=True, type=click.IntRange(min=0), help="Bimodule: A arity.  Otherwise: real vertices.")
@click.option("--n", default=1, show_default=True, type=click.IntRange(min=0), help="Bimodule: B arity.  Otherwise: upper half-plane vertices.")
@click.option("--special", default=None, type=int, help="Marked real vertex for --type K.")
@common_options
def graphs(kind: str, m: int, n: int, special: int | None, **opts: Any) -> None:
    """Enumerate the surviving admissible graphs with their colorings."""
    splitting = parse_dims(opts["dims"])
    try:
        if kind == "bimodule":
            found = enumerate_bimodule_graphs(m, n, splitting)
            target = "bimodule"
        else:
            found = enumerate_formality_graphs(n, m, kind, splitting, special)
            target = kind
    except DomainError as exc:
        raise click.UsageError(str(exc)) from exc
    rows = []
    for g in found:
        ops = compile_graph(g, splitting, target)
        rows.append(
            {
                "graph": g.to_text(),
                "canonical": canonical_encode(g),
                "colorings": [{"kinds": list(op.coloring), "weight_key": op.weight_problem().key()} for op in ops],
            }
        )
    config = _config({**opts, "type": kind, "m": m, "n": n, "special": special})
    emit("graphs", config, {"count": len(rows), "graphs": rows}, [], opts["out"])


# ---------------------------------------------------------------------------
# weight


@main.command()
@click.option("--graph", "graph_text", required=True, help="Graph in the text form 'n m s | i>j ... |'.")
@click.option("--kind", default=None, help="One propagator kind for every edge, or a comma-separated list.")
@click.option("--expect", default=None, type=float, help="Compare the estimate with this value.")
@click.option("--floor", default=0.02, show_default=True, type=float, help="Absolute tolerance floor for --expect.")
@common_options
def weight(graph_text: str, kind: str | None, expect: float | None, floor: float, **opts: Any) -> None:
    """Estimate the weight integral of one colored graph."""
    try:
        g = AdmissibleGraph.parse(graph_text)
        if kind is None:
            coloring = None
        else:
            kinds = [normalize_kind(k.strip()) for k in kind.split(",")]
            coloring = kinds * len(g.edges) if len(kinds) == 1 else kinds
        problem = g.weight_problem(coloring)
    except (DomainError, ValueError) as exc:
        raise click.UsageError(str(exc)) from exc
    book = make_book(opts)
    book.symbol(problem)
    est = book.estimate(problem.key())
    book.save()
    vanishing = []
    if g.special is not None:
        for (s, t), k in zip(g.edges, [e[2] for e in problem.edges]):
            allowed = edge_kinds(g, s, t, "K")
            if k not in allowed:
                vanishing.append({"edge": f"{s}>{t}", "kind": k, "non_vanishing_kinds": allowed})
    result = {"graph": g.to_text(), "weight_key": problem.key(), "estimate": est.to_json(), "identically_zero_edges": vanishing}
    checks = []
    if expect is not None:
        tol, source = tolerance(est, floor=floor)
        checks.append(
            {
                "check": "expected_value",
                "expected": expect,
                "residual": abs(est.value - expect),
                "tolerance": tol,
                "tolerance_source": source,
                "mode": "exact" if est.method == "exact" else "numeric",
                "pass": abs(est.value - expect) <= tol,
            }
        )
    config = _config({**opts, "graph": graph_text, "kind": kind, "expect": expect, "floor": floor})
    emit("weight", config, result, checks, opts["out"])


# ---------------------------------------------------------------------------
# bimodule


@main.command()
@click.option("--max-arity", default="2,2", show_default=True, help="Largest (m, n) of components and relations.")
@click.option("--forced", is_flag=True, help="Use weights forced exactly by the relations instead of Monte-Carlo.")
@click.option("--total-arity", default=4, show_default=True, type=click.IntRange(min=1), help="With --forced: components with m + n up to this.")
@common_options
def bimodule(max_arity: str, forced: bool, total_arity: int, **opts: Any) -> None:
    """Build the graph bimodule and check its relations, reporting the pairing along the way."""
    from .koszul import PAIRING_WEIGHTS, undeformed_bimodule

    splitting = parse_dims(opts["dims"])
    arity = parse_ints(max_arity, "--max-arity")
    if len(arity) != 2:
        raise click.BadParameter("expected m,n", param_hint="--max-arity")
    A, K, B = bimodule_ambients(splitting)
    dA, dB = graded_algebra(A), graded_algebra(B)
    book = make_book(opts)
    checks: list[dict] = []

    pairing = pairing_values(pairing_bimodule(splitting), probe=1)
    checks.append({"check": "pairing", "mode": "exact", "pass": pairing["pass"]})
    pairing_weights = []
    for key in sorted(PAIRING_WEIGHTS):
        if key not in book.exact:
            book.problems[key] = WeightProblem.from_key(key)
        est = book.estimate(key)
        pairing_weights.append({"weight_key": key, "estimate": est.to_json()})
        if est.method == "exact":
            checks.append({"check": f"pairing weight {key}", "mode": "exact", "pass": book.exact[key] == 1})
            continue
        tol, source = tolerance(est, floor=0.01)
        checks.append(
            {
                "check": f"pairing weight {key}",
                "mode": "numeric",
                "residual": abs(est.value - 1),
                "tolerance": tol,
                "tolerance_source": source,
                "pass": abs(est.value - 1) <= tol,
            }
        )

    result: dict[str, Any] = {"pairing": pairing, "pairing_weights": pairing_weights}
    try:
        if forced:
            dK, fw = undeformed_bimodule(splitting, total_arity)
            result["forced_weights"] = fw.to_json()
            checks.append({"check": "forced weights consistent", "mode": "exact", "pass": fw.consistent})
            rel_book = None
        else:
            dK = graph_bimodule(splitting, (arity[0], arity[1]), book)
            rel_book = book
        report = check_bimodule_relations(dA, dB, dK, (arity[0], arity[1]), (opts["npoly"], 1, opts["npoly"]), weights=rel_book)
    except DomainError as exc:
        raise click.UsageError(str(exc)) from exc
    book.save()
    relations = []
    for e in report.entries:
        row = e.to_json() | {"tolerance_source": e.tolerance_source, "cases": e.cases}
        relations.append(row)
        checks.append({"check": f"bimodule relation {list(e.arity)}", "mode": e.mode, "pass": e.passed})
    result["relations"] = relations
    config = _config({**opts, "max_arity": max_arity, "forced": forced, "total_arity": total_arity})
    emit("bimodule", config, result, checks, opts["out"])


# ---------------------------------------------------------------------------
# hochschild


@main.command()
@click.option("--window", default=4, show_default=True, type=click.IntRange(min=1), help="Largest total input size of the rank window.")
@click.option("--degrees", default="0,1,2", show_default=True, help="Cochain degrees of the rank table.")
@click.option("--internal", default="-1,0,1", show_default=True, help="Internal degrees of the rank table.")
@click.option("--cases", default=50, show_default=True, type=click.IntRange(min=0), help="Random cases per identity.")
@click.option("--total-arity", default=4, show_default=True, type=click.IntRange(min=1), help="Components of the bimodule with m + n up to this.")
@common_options
def hochschild(window: int, degrees: str, internal: str, cases: int, total_arity: int, **opts: Any) -> None:
    """Check the bracket identities and the square of the differential on random cochains."""
    from .hochschild import MaurerCartanElement, Window, identity_suite
    from .koszul import check_projections, undeformed_bimodule

    splitting = parse_dims(opts["dims"])
    degs = parse_ints(degrees, "--degrees")
    ints = parse_ints(internal, "--internal")
    A, K, B = bimodule_ambients(splitting)
    dA, dB = graded_algebra(A), graded_algebra(B)
    dK, fw = undeformed_bimodule(splitting, total_arity)
    mc = MaurerCartanElement.from_structures(dA, dB, dK)
    cat = mc.gamma.cat
    checks: list[dict] = []
    defect = mc.check(Window(cat, window, total_arity))
    checks.append({"check": "maurer_cartan", "mode": "exact", "pass": not defect})
    suite = identity_suite(mc, Window(cat, 2, 3), Window(cat, 4, 4), random.Random(opts["seed"]), cases)
    for name, tally in sorted(suite.items()):
        checks.append({"check": name, "mode": "exact", "pass": tally["failures"] == 0})
    proj = check_projections(dA, dB, dK, window, degs, ints)
    for name, rep in sorted(proj.items()):
        checks.append({"check": f"kernel of {name} acyclic", "mode": "exact", "pass": rep["acyclic"]})
    result = {
        "forced_weights": fw.to_json(),
        "maurer_cartan_defect_inputs": len(defect),
        "identities": suite,
        "projections": proj,
    }
    config = _config({**opts, "window": window, "degrees": degrees, "internal": internal, "cases": cases, "total_arity": total_arity})
    emit("hochschild", config, result, checks, opts["out"])


# ---------------------------------------------------------------------------
# koszul


@main.command()
@click.option("--base", "n_base", default=0, show_default=True, type=click.IntRange(min=0), help="Base variables of the Koszul complex.")
@click.option("--fiber", "n_fiber", default=1, show_default=True, type=click.IntRange(min=0), help="Fiber variables of the Koszul complex.")
@click.option("--truncation", default=6, show_default=True, type=click.IntRange(min=0), help="Largest internal weight.")
@click.option("--pmax", default=3, show_default=True, type=click.IntRange(min=0), help="Largest p of the Keller check.")
@click.option("--keller/--no-keller", default=True, show_default=True, help="Run the Keller check on --dims.")
@common_options
def koszul(n_base: int, n_fiber: int, truncation: int, pmax: int, keller: bool, **opts: Any) -> None:
    """Koszul complex, Ext algebra, diagonal concentration and the Keller condition."""
    from .koszul import check_keller, diagonal_concentration, ext_algebra, koszul_complex, undeformed_bimodule

    splitting = parse_dims(opts["dims"])
    checks: list[dict] = []
    kc = koszul_complex(n_base, n_fiber, truncation)
    ranks = kc.cohomology()
    negative = [e for e in ranks if e.degree != 0 and e.betti]
    defects = sum(len(kc.homotopy_defect(w)) + len(kc.d_squared_defect(w)) for w in range(truncation + 1))
    checks.append({"check": "koszul acyclic in negative degrees", "mode": "exact", "pass": not negative})
    checks.append({"check": "d squared and homotopy", "mode": "exact", "pass": defects == 0})
    ext = ext_algebra(n_base, n_fiber, truncation)
    presentation = ext.check_presentation()
    checks.append({"check": "ext presentation", "mode": "exact", "pass": bool(presentation["isomorphic"])})
    result: dict[str, Any] = {
        "complex": [e.to_json() for e in ranks],
        "ext": ext.table(),
        "presentation": presentation,
    }
    conc = {}
    for side in ("right", "left"):
        c = diagonal_concentration(splitting, side, max_length=min(pmax + 1, 4), max_weight=min(pmax + 1, 4))
        conc[side] = c
        checks.append({"check": f"diagonal concentration {side}", "mode": "exact", "pass": c["concentrated"]})
    result["concentration"] = conc
    if keller:
        A, K, B = bimodule_ambients(splitting)
        dA, dB = graded_algebra(A), graded_algebra(B)
        dK, _ = undeformed_bimodule(splitting, max(pmax + 1, 2))
        kel = {}
        for side in ("right", "left"):
            rep = check_keller(dA, dB, dK, side, pmax)
            kel[side] = rep.to_json()
            checks.append({"check": f"keller {side}", "mode": "exact", "pass": rep.isomorphism})
        result["keller"] = kel
    config = _config({**opts, "base": n_base, "fiber": n_fiber, "truncation": truncation, "pmax": pmax, "keller": keller})
    emit("koszul", config, result, checks, opts["out"])


# ---------------------------------------------------------------------------
# quantize


@main.command()
@click.option("--poisson", required=True, help="Bivector as JSON text or a path to a JSON file.")
@click.option("--keller/--no-keller", default=False, show_default=True, help="Also run the first-order Keller check.")
@click.option("--relations/--no-relations", default=False, show_default=True, help="Also check the deformed bimodule relations.")
@click.option("--multiple", default=3.0, show_default=True, type=float, help="Tolerance in standard errors.")
@common_options
def quantize(poisson: str, keller: bool, relations: bool, multiple: float, **opts: Any) -> None:
    """Quantize a Poisson bivector and check the deformed duality."""
    from . import quantize as qz

    splitting = parse_dims(opts["dims"])
    text = Path(poisson).read_text() if Path(poisson).is_file() else poisson
    try:
        pi = qz.poisson_from_json(text, splitting, max(opts["order"], 1))
        book = make_book(opts)
        summary = qz.check_deformed_koszul(pi, opts["order"], book, multiple=multiple)
        mc = qz.check_maurer_cartan(pi)
    except (DomainError, ValueError, KeyError) as exc:
        raise click.UsageError(str(exc)) from exc
    checks = [{"check": "maurer_cartan", "mode": "exact", "pass": mc.passed}]
    for c in summary["checks"]:
        checks.append({"check": c["check"], "mode": c["mode"], "pass": c["pass"]})
    result: dict[str, Any] = {"poisson": [pi[k].to_text() for k in range(1, pi.order + 1)], "summary": summary}
    result["star_product"] = _dump_star(pi, opts["order"], book, opts["npoly"])
    if relations and opts["order"] >= 1:
        ds = qz.deformed_bimodule(pi, 1, book, (2, 2))
        dA = qz.star_product(pi, "A", 1, book)
        dB = qz.star_product(pi, "B", 1, book)
        rep = qz.check_deformed_relations(ds, dA, dB, 1, (2, 2), 1, multiple)
        result["relations"] = [e.to_json() | {"tolerance_source": e.tolerance_source} for e in rep.entries]
        for e in rep.entries:
            checks.append({"check": f"deformed relation {list(e.arity)}", "mode": e.mode, "pass": e.passed})
    if keller:
        kr = qz.deformed_keller(pi, book, 2, multiple)
        result["keller"] = kr
        checks.append({"check": "deformed keller", "mode": "numeric", "pass": kr["pass"]})
    result["weights"] = {k: book.estimate(k).to_json() for k in sorted(book.problems)}
    book.save()
    config = _config({**opts, "poisson": text, "keller": keller, "relations": relations, "multiple": multiple})
    emit("quantize", config, result, checks, opts["out"])


def _dump_star(pi, order: int, book: WeightBook, probe: int) -> dict:
    """Order-by-order values of the deformed products of ``A`` and ``B`` on a small basis."""
    from . import quantize as qz

    out = {}
    for target in ("A", "B"):
        ds = qz.star_product(pi, target, order, book)
        amb = ds.base.ambient
        per_order = {}
        for k in range(1, order + 1):
            op = ds.correction(2, k)
            rows = []
            if op is not None:
                for f in basis_elements(amb, probe):
                    for g in basis_elements(amb, probe):
                        v = op(f, g)
                        if not v.is_zero():
                            rows.append({"f": f.to_text(), "g": g.to_text(), "value": v.to_text()})
            per_order[str(k)] = rows
        out[target] = per_order
    return out


if __name__ == "__main__":  # pragma: no cover
    main()

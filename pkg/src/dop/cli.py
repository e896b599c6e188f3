"""Command-line interface: ``dop tree|build|check|iterate|simulate|interface``.

Exit status is 0 on success, 2 for bad input (parse errors, missing or
unknown parameters, malformed files) and 1 for anything unexpected.
"""

from __future__ import annotations

import argparse
import hashlib
import importlib
import json
import os
import sys

from . import geometry
from .dsl import expand_sources, has_errors, load_registry, render_interface
from .errors import DopError
from .manager import ObjectManager, ProcedureTable, TraceLog, build_stats, iterate, totals
from .model import (
    CalculationConditions,
    check_well_built,
    derive_production_tree,
    internal_tree,
    parse_path,
    path_str,
)
from .params import ParameterFile, ParameterFileError, parse_literal
from .scheduler import CostModel, schedule_builds, simulate_workflow
from .store import open_store

STORE_ENV = "DOP_STORE"


class UsageError(Exception):
    pass


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    if isinstance(v, list):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


def _emit(args, record: dict, plain: str) -> None:
    if args.format == "json-lines":
        print(json.dumps(_jsonable(record)))
    else:
        print(plain)


def _registry(args):
    sources = expand_sources(args.classes) if args.classes else geometry.class_sources()
    registry, diags = load_registry(sources)
    for d in diags:
        print(d, file=sys.stderr)
    if registry is None or has_errors(diags):
        raise UsageError("class sources have errors")
    return registry


def schema_version(registry) -> str:
    """Fingerprint of every loaded class, embedded in state keys."""
    h = hashlib.sha256()
    for name in sorted(registry):
        h.update(render_interface(registry[name]).encode("utf-8"))
    return h.hexdigest()[:16]


def _procedures(args) -> ProcedureTable:
    table = ProcedureTable(geometry.PROCEDURES)
    for entry in args.procedures or ():
        module, _, attr = entry.partition(":")
        try:
            extra = getattr(importlib.import_module(module), attr or "PROCEDURES")
        except (ImportError, AttributeError) as e:
            raise UsageError(f"cannot load procedures {entry!r}: {e}") from None
        table.update(extra)
    return table


def _store(args, registry):
    path = args.store or os.environ.get(STORE_ENV)
    if not path:
        return None
    return open_store(path, schema_version(registry))


def _label(node, root: bool) -> str:
    name = node.class_name if root else node.path[-1]
    if node.kind == "parameter":
        return f"{name} [parameter]"
    sub = f'("{node.substate}")' if node.substate else ""
    return f"{name} : {node.class_name}{sub} [{node.kind}]"


def _print_tree(args, tree) -> None:
    if args.canonical:
        sys.stdout.write(tree.serialize())
        return
    for depth, node in tree.walk():
        _emit(
            args,
            {"depth": depth, "path": path_str(node.path), "class": node.class_name,
             "substate": node.substate, "kind": node.kind},
            "  " * depth + _label(node, node.path == tree.root),
        )


# -- commands -----------------------------------------------------------------


def cmd_tree(args) -> int:
    registry = _registry(args)
    if args.internal:
        tree = internal_tree(registry, args.root, args.internal)
    else:
        tree = derive_production_tree(registry, args.root, args.substate)
    _print_tree(args, tree)
    return 0


def cmd_interface(args) -> int:
    registry = _registry(args)
    text = render_interface(registry[args.root])
    if args.format == "json-lines":
        print(json.dumps({"class": args.root, "interface": text}))
    else:
        sys.stdout.write(text)
    return 0


def cmd_check(args) -> int:
    registry = _registry(args)
    report = check_well_built(registry, args.root)
    clusters = []
    for c in report.leaf_clusters:
        users = sorted(i for i, leaves in report.needs.items() if leaves & c)
        clusters.append({"builders": sorted(c), "needed_by": users})
    if args.format == "json-lines":
        print(json.dumps({"class": args.root, "well_built": report.well_built, "clusters": clusters}))
        return 0
    print(f"{args.root}: {'well built' if report.well_built else 'not well built'}")
    if not report.well_built:
        for i, c in enumerate(clusters, start=1):
            users = ", ".join(c["needed_by"]) or "no internal attribute"
            print(f"  cluster {i}: {{{', '.join(c['builders'])}}} needed by {users}")
        print("  suggestion: split the class so each part's internals share one builder set")
    return 0


def _load_manager(args, registry, tree):
    params = ParameterFile.read(args.params) if args.params else ParameterFile({})
    unknown = params.check(tree)
    if unknown:
        raise UsageError("not parameter leaves of the tree: " + ", ".join(unknown))
    missing = params.missing(tree)
    if missing:
        raise UsageError("missing parameter(s): " + ", ".join(missing))
    conditions = CalculationConditions.for_tree(tree, params.typed(tree))
    trace = None
    if getattr(args, "trace", None):
        trace = TraceLog(open(args.trace, "w", encoding="utf-8"))
    manager = ObjectManager.create(
        registry, args.root, args.substate, procedures=_procedures(args),
        store=_store(args, registry), parameters=conditions.assignments, trace=trace,
    )
    return manager, trace


def cmd_build(args) -> int:
    registry = _registry(args)
    tree = derive_production_tree(registry, args.root, args.substate)
    manager, trace = _load_manager(args, registry, tree)
    try:
        value = manager.provide(args.substate)
    finally:
        if trace is not None:
            trace.stream.close()
    stats = build_stats(manager)
    tot = totals(stats)
    if args.format == "json-lines":
        print(json.dumps({"class": args.root, "substate": args.substate, "value": _jsonable(value)}))
        for name, c in stats.items():
            print(json.dumps({"substate": name, **c}))
        print(json.dumps({"totals": tot}))
        return 0
    print(f"{args.root}.{args.substate} = {value!r}")
    print(f"builds={tot['builds']} store_hits={tot['store_hits']} store_misses={tot['store_misses']}")
    if args.verbose:
        for name, c in stats.items():
            print(f"  {name}: builds={c['builds']} hits={c['store_hits']} misses={c['store_misses']}")
    return 0


def _parse_set(text: str):
    if "+=" in text:
        path, _, lit = text.partition("+=")
        delta = parse_literal(lit)
        if isinstance(delta, bool) or not isinstance(delta, (int, float)):
            raise UsageError(f"--set {text!r}: increment must be a number")
        return path.strip(), lambda i, cur, d=delta: cur + d
    path, eq, lit = text.partition("=")
    if not eq:
        raise UsageError(f"--set expects path=value or path+=delta, got {text!r}")
    return path.strip(), parse_literal(lit)


def cmd_iterate(args) -> int:
    registry = _registry(args)
    tree = derive_production_tree(registry, args.root, args.substate)
    updates = [_parse_set(s) for s in args.set or ()]
    for path, _ in updates:
        node = tree.nodes.get(parse_path(path))
        if node is None or node.kind != "parameter":
            raise UsageError(f"--set {path}: not a parameter leaf of the tree")
    manager, trace = _load_manager(args, registry, tree)
    try:
        results = iterate(manager, args.substate, updates, args.iters)
    finally:
        if trace is not None:
            trace.stream.close()
    if args.format != "json-lines":
        print(f"{'iteration':>9}  {'rebuilt':>7}  value")
    for r in results:
        _emit(args, {"iteration": r.iteration, "rebuilt": r.rebuilt, "value": r.value},
              f"{r.iteration:>9}  {r.rebuilt:>7}  {r.value!r}")
    return 0


def cmd_simulate(args) -> int:
    registry = _registry(args)
    tree = derive_production_tree(registry, args.root, args.substate)
    if args.costs:
        with open(args.costs, encoding="utf-8") as f:
            cost = CostModel.parse(f.read())
    else:
        cost = CostModel.uniform(1.0)
    report = simulate_workflow(tree, cost)
    schedule = schedule_builds(tree, cost, args.workers)
    if args.format == "json-lines":
        print(json.dumps({
            "nodes": len(tree), "total_cpu": report.total.cpu_seconds,
            "total_memory": report.total.memory_bytes, "total_disk": report.total.disk_bytes,
            "critical_path_cpu": report.critical_path_cpu, "workers": args.workers,
            "makespan": schedule.makespan,
        }))
        for a in sorted(schedule.assignments, key=lambda a: (a.start, a.worker)):
            print(json.dumps({"node": a.node, "worker": a.worker, "start": a.start, "end": a.end}))
        return 0
    print(f"nodes={len(tree)} total_cpu={report.total.cpu_seconds:g} "
          f"total_memory={report.total.memory_bytes:g} total_disk={report.total.disk_bytes:g}")
    print(f"critical_path_cpu={report.critical_path_cpu:g} "
          f"path={' <- '.join(p or args.root for p in report.critical_path)}")
    print(f"workers={args.workers} makespan={schedule.makespan:g}")
    print(f"{'start':>8} {'end':>8} {'worker':>6}  node")
    for a in sorted(schedule.assignments, key=lambda a: (a.start, a.worker)):
        print(f"{a.start:>8g} {a.end:>8g} {a.worker:>6}  {a.node or args.root}")
    return 0


# -- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--classes", action="append", metavar="GLOB",
                        help="class sources (glob, file or directory); default: shipped geometry")
    common.add_argument("--format", choices=("plain", "json-lines"), default="plain")
    common.add_argument("--procedures", action="append", metavar="MODULE[:ATTR]",
                        help="extra build procedures (a ProcedureTable)")

    p = argparse.ArgumentParser(prog="dop", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("tree", parents=[common], help="print a production tree")
    t.add_argument("root")
    t.add_argument("substate", nargs="?", help="omit for the ground-state tree")
    t.add_argument("--internal", metavar="ATTR", help="internal tree of one attribute instead")
    t.add_argument("--canonical", action="store_true", help="canonical line format")
    t.set_defaults(func=cmd_tree)

    i = sub.add_parser("interface", parents=[common], help="render a class interface")
    i.add_argument("root")
    i.set_defaults(func=cmd_interface)

    c = sub.add_parser("check", parents=[common], help="well-built diagnostics")
    c.add_argument("root")
    c.set_defaults(func=cmd_check)

    def with_run_options(sp):
        sp.add_argument("root")
        sp.add_argument("substate")
        sp.add_argument("--params", metavar="FILE", help="parameter file (slot_path = literal)")
        sp.add_argument("--store", metavar="DIR", help=f"value store (default: ${STORE_ENV})")
        sp.add_argument("--trace", metavar="FILE", help="write build trace events here")

    b = sub.add_parser("build", parents=[common], help="provide an object in a sub-state")
    with_run_options(b)
    b.add_argument("-v", "--verbose", action="store_true", help="per sub-state counters")
    b.set_defaults(func=cmd_build)

    it = sub.add_parser("iterate", parents=[common], help="rebuild while parameters change")
    with_run_options(it)
    it.add_argument("--set", action="append", metavar="PATH=VALUE|PATH+=DELTA")
    it.add_argument("--iters", type=int, default=1)
    it.set_defaults(func=cmd_iterate)

    s = sub.add_parser("simulate", parents=[common], help="cost totals and a build schedule")
    s.add_argument("root")
    s.add_argument("substate", nargs="?")
    s.add_argument("--costs", metavar="FILE", help="'CLASS.substate cpu mem disk' lines")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "iters", 1) < 1 or getattr(args, "workers", 1) < 1:
        print("dop: --iters and --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (UsageError, DopError, ParameterFileError, FileNotFoundError, ValueError) as e:
        print(f"dop: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        print(f"dop: internal error: {e!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

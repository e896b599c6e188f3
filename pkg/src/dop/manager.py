"""The object manager: provide any object of a production tree in a sub-state.

Each object node of a :class:`~dop.model.ProductionTree` gets one
:class:`ObjectManager`.  ``provide(s)`` answers from the in-memory value if
``s`` is ready, otherwise derives the state key and asks the store; on a
miss it provides everything ``s`` needs (depth first, in ``needs`` order),
runs the build procedure and stores the result.  Build calls nest: the
parent's build is still open while its children build.

Changing a parameter marks exactly the attributes that depend on it, on the
path from that leaf to the root, as not ready; rebuilding waits for the next
``provide``.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, NamedTuple

from .errors import (
    BuildFailure,
    CycleDetected,
    DopError,
    IterationError,
    MissingParameter,
    SchemaError,
    UnknownLeaf,
    UnknownSubState,
)
from .model import (
    Builder,
    ClassSchema,
    Internal,
    Need,
    Parameter,
    ProductionTree,
    coerce_parameter,
    derive_production_tree,
    parse_path,
    path_str,
)
from .store import derive_key

log = logging.getLogger(__name__)


class Status(enum.Enum):
    NOT_READY = "NotReady"
    BUILDING = "Building"
    READY = "Ready"


class ProcedureTable(dict):
    """``(class name, procedure name) -> callable``.

    A procedure is called with one keyword argument per entry of its
    attribute's ``needs`` clause and nothing else.
    """

    def add(self, class_name: str, name: str, fn: Callable) -> None:
        self[(class_name, name)] = fn

    def register(self, class_name: str, name: str | None = None):
        def deco(fn):
            self.add(class_name, name or fn.__name__, fn)
            return fn
        return deco


@dataclass(frozen=True)
class BuildProcedure:
    name: str
    needs: tuple[Need, ...]
    body: Callable


# -- trace --------------------------------------------------------------------

TRACE_EVENTS = ("build_start", "build_end", "store_hit", "store_miss", "invalidate")


@dataclass(frozen=True)
class TraceEvent:
    timestamp: int  # monotonic nanoseconds
    event: str
    path: str
    substate: str

    def to_line(self) -> str:
        return f"{self.timestamp}\t{self.event}\t{self.path}\t{self.substate}"

    @classmethod
    def from_line(cls, line: str) -> "TraceEvent":
        from .errors import MalformedTrace

        parts = line.rstrip("\n").split("\t")
        if len(parts) != 4 or parts[1] not in TRACE_EVENTS:
            raise MalformedTrace(f"bad trace line: {line!r}")
        try:
            ts = int(parts[0])
        except ValueError:
            raise MalformedTrace(f"bad timestamp in trace line: {line!r}") from None
        return cls(ts, parts[1], parts[2], parts[3])


class TraceLog(list):
    """Collected :class:`TraceEvent` objects, optionally echoed to a stream."""

    def __init__(self, stream=None):
        super().__init__()
        self.stream = stream

    def record(self, event: str, path: str, substate: str) -> None:
        ev = TraceEvent(time.monotonic_ns(), event, path, substate)
        self.append(ev)
        if self.stream is not None:
            self.stream.write(ev.to_line() + "\n")

    def lines(self) -> list[str]:
        return [ev.to_line() for ev in self]


# -- manager ------------------------------------------------------------------


@dataclass
class Counters:
    builds: int = 0
    store_hits: int = 0
    store_misses: int = 0

    def as_dict(self) -> dict[str, int]:
        return {"builds": self.builds, "store_hits": self.store_hits,
                "store_misses": self.store_misses}


@dataclass
class _Session:
    registry: Mapping[str, ClassSchema]
    tree: ProductionTree
    procedures: Mapping
    store: object
    schema_version: str
    conditions: dict = field(default_factory=dict)
    trace: TraceLog | None = None
    managers: dict = field(default_factory=dict)

    def record(self, event: str, path, substate: str) -> None:
        if self.trace is not None:
            self.trace.record(event, path_str(path), substate)


class ObjectManager:
    """Agent answering ``provide(sub-state)`` for one object of the tree."""

    def __init__(self, session: _Session, path: tuple[str, ...]):
        self.session = session
        self.path = path
        self.node = session.tree.nodes[path]
        self.schema = session.registry[self.node.class_name]
        self.tracked = tuple(session.tree.deps[path])
        self.status = {a: Status.NOT_READY for a in self.tracked
                       if not self.schema.attribute(a).is_parameter}
        self.memory: dict[str, object] = {}
        self.counters = {a: Counters() for a in self.tracked
                         if self.schema.attribute(a).is_internal}
        self.iteration_counter = 0
        session.managers[path] = self
        self.children: dict[str, list] = {}
        for a in self.tracked:
            attr = self.schema.attribute(a)
            if isinstance(attr.kind, Builder):
                self.children[a] = [
                    ObjectManager(session, p) if session.tree.nodes[p].kind != "parameter" else p
                    for p in session.tree.deps[path][a]
                ]

    @classmethod
    def create(cls, registry: Mapping[str, ClassSchema], root_class: str,
               target_substate: str | None = None, *, procedures: Mapping,
               store=None, parameters: Mapping | None = None, trace: TraceLog | None = None,
               schema_version: str | None = None) -> "ObjectManager":
        """Derive the tree for ``root_class`` and attach managers to it.

        ``target_substate=None`` builds the manager tree for the root's
        ground state, so any of its attributes can be provided.
        """
        tree = derive_production_tree(registry, root_class, target_substate)
        if schema_version is None:
            schema_version = getattr(store, "schema_version", "0")
        session = _Session(registry, tree, procedures, store, schema_version, trace=trace)
        if tree.nodes[tree.root].kind == "parameter":
            raise SchemaError(f"{root_class}.{target_substate} is a parameter; nothing to manage")
        root = cls(session, tree.root)
        for m in session.managers.values():
            for a in m.status:
                attr = m.schema.attribute(a)
                if isinstance(attr.kind, Internal) and (m.schema.name, attr.kind.procedure) not in procedures:
                    raise SchemaError(f"no build procedure {m.schema.name}.{attr.kind.procedure}")
        if parameters:
            root.read_parameters(parameters)
        return root

    # -- navigation ----------------------------------------------------------

    @property
    def tree(self) -> ProductionTree:
        return self.session.tree

    @property
    def name(self) -> str:
        return path_str(self.path)

    def qualified(self, attr: str) -> str:
        return f"{self.name}.{attr}" if self.path else attr

    def managers(self) -> Iterable["ObjectManager"]:
        """This manager and every manager below it, depth first."""
        yield self
        for kids in self.children.values():
            for k in kids:
                if isinstance(k, ObjectManager):
                    yield from k.managers()

    def procedure(self, attr_name: str) -> BuildProcedure:
        attr = self.schema.attribute(attr_name)
        if not isinstance(attr.kind, Internal):
            raise SchemaError(f"{self.schema.name}.{attr_name} is not internal")
        body = self.session.procedures[(self.schema.name, attr.kind.procedure)]
        return BuildProcedure(attr.kind.procedure, attr.needs, body)

    def _check_substate(self, substate: str):
        if substate not in self.tracked:
            raise UnknownSubState(self.schema.name, substate)
        return self.schema.attribute(substate)

    # -- provide -------------------------------------------------------------

    def _parameter(self, path: tuple[str, ...]):
        key = path_str(path)
        try:
            return self.session.conditions[key]
        except KeyError:
            raise MissingParameter([key]) from None

    def provide(self, substate: str):
        """Return the value of attribute ``substate``, building it if needed."""
        attr = self._check_substate(substate)
        if isinstance(attr.kind, Parameter):
            return self._parameter(self.path + (substate,))
        if isinstance(attr.kind, Builder):
            values = [
                k.provide(attr.kind.substate) if isinstance(k, ObjectManager) else self._parameter(k)
                for k in self.children[substate]
            ]
            self.status[substate] = Status.READY
            return values[0] if attr.kind.arity is None else values
        return self._provide_internal(substate, attr)

    def _provide_internal(self, substate: str, attr):
        state = self.status[substate]
        if state is Status.READY:
            return self.memory[substate]
        if state is Status.BUILDING:
            raise CycleDetected([(self.schema.name, substate), (self.schema.name, substate)])
        s = self.session
        counters = self.counters[substate]
        key = None
        if s.store is not None:
            key = derive_key(s.tree, self.path, substate, s.conditions, s.schema_version)
            cached = s.store.get(key)
            if cached is not None:
                counters.store_hits += 1
                s.record("store_hit", self.path, substate)
                self.memory[substate] = cached
                self.status[substate] = Status.READY
                return cached
        else:
            # without a store, a missing parameter must still be reported
            # before anything runs
            missing = [path_str(p) for p in s.tree.subtree(self.path, substate)
                       if s.tree.nodes[p].kind == "parameter" and path_str(p) not in s.conditions]
            if missing:
                raise MissingParameter(missing)
        counters.store_misses += 1
        s.record("store_miss", self.path, substate)
        self.status[substate] = Status.BUILDING
        counters.builds += 1
        s.record("build_start", self.path, substate)
        try:
            args = {n.attribute: self.provide(n.attribute) for n in attr.needs}
            proc = self.procedure(substate)
            try:
                value = proc.body(**args)
            except DopError:
                raise
            except Exception as e:
                raise BuildFailure(self.name, substate, e) from e
        except BaseException:
            self.status[substate] = Status.NOT_READY
            s.record("build_end", self.path, substate)
            raise
        s.record("build_end", self.path, substate)
        if key is not None:
            s.store.put(key, value)
        self.memory[substate] = value
        self.status[substate] = Status.READY
        return value

    # -- calculation conditions ---------------------------------------------

    def _leaf(self, leaf_path):
        path = parse_path(leaf_path)
        node = self.tree.nodes.get(path)
        if node is None or node.kind != "parameter":
            raise UnknownLeaf(path_str(path))
        return path, node

    def read_parameters(self, values: Mapping) -> None:
        """Ingest parameter values (the ``read`` context)."""
        for leaf_path, value in values.items():
            path, node = self._leaf(leaf_path)
            v = coerce_parameter(node.value_type, value, path_str(path))
            if path_str(path) in self.session.conditions:
                self._assign(path, v)
            else:
                self.session.conditions[path_str(path)] = v

    def set_parameter(self, leaf_path, value) -> None:
        """Change one parameter (the ``set`` context) and invalidate its ancestors."""
        path, node = self._leaf(leaf_path)
        v = coerce_parameter(node.value_type, value, path_str(path))
        self._assign(path, v)
        self.root.iteration_counter += 1

    def _assign(self, path, value) -> None:
        s = self.session
        s.conditions[path_str(path)] = value
        child = path
        parent = s.tree.parent(child)
        while parent is not None:
            m = s.managers[parent]
            for attr, deps in s.tree.deps[parent].items():
                if child in deps and attr in m.status:
                    m.invalidate(attr)
            child, parent = parent, s.tree.parent(parent)

    def invalidate(self, attr: str) -> None:
        self.status[attr] = Status.NOT_READY
        self.memory.pop(attr, None)
        self.session.record("invalidate", self.path, attr)

    @property
    def root(self) -> "ObjectManager":
        return self.session.managers[self.session.tree.root]

    def parameters(self) -> dict[str, object]:
        return dict(self.session.conditions)

    def is_not_ready(self, substate: str) -> bool:
        """True unless ``substate`` was built and nothing below it changed since."""
        attr = self._check_substate(substate)
        if isinstance(attr.kind, Parameter):
            return path_str(self.path + (substate,)) not in self.session.conditions
        return self.status[substate] is not Status.READY

    def not_ready_nodes(self) -> set[tuple[str, ...]]:
        """Object nodes whose requested sub-state is not ready.

        For a ground-state root (no requested sub-state) the root counts as not
        ready when any of its attributes is.
        """
        out = set()
        for m in self.managers():
            sub = m.node.substate
            if sub is None:
                if any(st is not Status.READY for st in m.status.values()):
                    out.add(m.path)
            elif m.status.get(sub, Status.READY) is not Status.READY:
                out.add(m.path)
        return out

    def total_builds(self) -> int:
        return sum(c.builds for m in self.managers() for c in m.counters.values())


def build_stats(manager: ObjectManager) -> dict[str, dict[str, int]]:
    """Per sub-state counters for ``manager`` and everything below it.

    Keys are slot-qualified (``vertices[1].position``); the manager's own
    attributes are unqualified.
    """
    out = {}
    base = len(manager.path)
    for m in manager.managers():
        for attr, c in m.counters.items():
            rel = path_str(m.path[base:])
            out[f"{rel}.{attr}" if rel else attr] = c.as_dict()
    return out


def totals(stats: Mapping[str, Mapping[str, int]]) -> dict[str, int]:
    out = {"builds": 0, "store_hits": 0, "store_misses": 0}
    for c in stats.values():
        for k in out:
            out[k] += c[k]
    return out


class IterationResult(NamedTuple):
    iteration: int
    value: object
    rebuilt: int


def iterate(manager: ObjectManager, target_substate: str, updates, max_iters: int):
    """Apply ``updates`` and provide ``target_substate``, ``max_iters`` times.

    ``updates`` is a sequence of ``(leaf_path, value)``; ``value`` may be a
    callable ``f(iteration, current_value)`` so a parameter can move between
    iterations.  ``rebuilt`` counts the build procedures that actually ran.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    updates = list(updates)
    results = []
    for i in range(1, max_iters + 1):
        try:
            for leaf, value in updates:
                if callable(value):
                    current = manager.session.conditions.get(path_str(parse_path(leaf)))
                    value = value(i, current)
                manager.set_parameter(leaf, value)
            before = manager.total_builds()
            value = manager.provide(target_substate)
            rebuilt = manager.total_builds() - before
        except DopError as e:
            raise IterationError(i, e) from e
        log.debug("iteration %d: %d build(s)", i, rebuilt)
        results.append(IterationResult(i, value, rebuilt))
    return results

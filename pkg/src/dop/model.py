"""Schemas, production trees and the static checks performed on them.

A class is described by a :class:`ClassSchema`: an ordered list of attributes,
each one *internal* (computed by a build procedure of the same class from
what its ``needs`` clause names), a *builder* (another object requested in a
named sub-state) or a *parameter* (a basic-typed value read from the input).

:func:`derive_production_tree` expands the ``needs`` relation from a root
class down to parameter leaves.  Nodes are identified by their slot path from
the root, e.g. ``("base", "vertices[2]", "x")``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Union

from .errors import (
    CycleDetected,
    NotInternal,
    SchemaError,
    UnknownClass,
    UnknownSubState,
    UnresolvedNeed,
)

BASIC_TYPES = ("BOOLEAN", "INTEGER", "REAL", "STRING")

#: Context name -> procedure suffix for the ``uses`` clause.
CONTEXT_SUFFIXES = (("build", "_build"), ("read", "_read"), ("set", "_set"))

TREE_FORMAT = "dop-tree 1"

_COLLECTION = re.compile(r"^\s*ARRAY\s*\[\s*([A-Za-z_][A-Za-z0-9_]*)\s*\]\s*$")


def element_type(type_name: str) -> str:
    """``"ARRAY[POINT]"`` -> ``"POINT"``; other names are returned unchanged."""
    m = _COLLECTION.match(type_name)
    return m.group(1) if m else type_name.strip()


def is_collection(type_name: str) -> bool:
    return _COLLECTION.match(type_name) is not None


def is_basic(type_name: str) -> bool:
    return element_type(type_name) in BASIC_TYPES


# -- attribute kinds ---------------------------------------------------------


@dataclass(frozen=True)
class Internal:
    procedure: str


@dataclass(frozen=True)
class Builder:
    substate: str
    arity: int | None = None  # None for a single object, n for ARRAY[...] of n


@dataclass(frozen=True)
class Parameter:
    basic_type: str
    collection: bool = False


AttributeKind = Union[Internal, Builder, Parameter]


def kind_name(kind: AttributeKind) -> str:
    if isinstance(kind, Internal):
        return "internal"
    if isinstance(kind, Builder):
        return "builder"
    return "parameter"


@dataclass(frozen=True)
class Need:
    attribute: str
    substate: str | None = None


@dataclass(frozen=True)
class Attribute:
    name: str
    type_name: str
    kind: AttributeKind
    needs: tuple[Need, ...] = ()
    uses: tuple[tuple[str, str], ...] = ()
    require: tuple[str, ...] = ()
    ensure: tuple[str, ...] = ()
    export: str = "ANY"

    @property
    def is_internal(self) -> bool:
        return isinstance(self.kind, Internal)

    @property
    def is_builder(self) -> bool:
        return isinstance(self.kind, Builder)

    @property
    def is_parameter(self) -> bool:
        return isinstance(self.kind, Parameter)


@dataclass(frozen=True)
class ClassSchema:
    name: str
    attributes: tuple[Attribute, ...] = ()
    invariant: tuple[str, ...] = ()
    contexts: tuple[tuple[str, str], ...] = CONTEXT_SUFFIXES

    def __contains__(self, attr_name: object) -> bool:
        return any(a.name == attr_name for a in self.attributes)

    def attribute(self, name: str) -> Attribute:
        for a in self.attributes:
            if a.name == name:
                return a
        raise UnknownSubState(self.name, name)

    @property
    def internals(self) -> tuple[Attribute, ...]:
        return tuple(a for a in self.attributes if a.is_internal)

    @property
    def externals(self) -> tuple[Attribute, ...]:
        """Builders and parameters: everything an internal may bottom out on."""
        return tuple(a for a in self.attributes if not a.is_internal)

    @property
    def substates(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes if a.export != "NONE")


@dataclass(frozen=True)
class SubState:
    owner_class: str
    name: str
    defining_attribute: str


def substates_of(schema: ClassSchema) -> list[SubState]:
    return [SubState(schema.name, s, s) for s in schema.substates]


def schema_problems(schema: ClassSchema) -> list[tuple[str, str, str]]:
    """Return ``(code, attribute, message)`` for every consistency violation."""
    problems = []
    seen = set()
    for a in schema.attributes:
        if a.name in seen:
            problems.append(("DuplicateAttribute", a.name, f"attribute {a.name!r} declared twice"))
        seen.add(a.name)
    for a in schema.attributes:
        if isinstance(a.kind, Parameter):
            if a.kind.basic_type not in BASIC_TYPES:
                problems.append(
                    ("ClassTypedParameter", a.name, f"parameter {a.name!r} must have a basic type")
                )
        elif isinstance(a.kind, Builder):
            if is_basic(a.type_name):
                problems.append(
                    ("BasicBuilder", a.name, f"builder {a.name!r} has basic type; declare it as a parameter")
                )
            if a.kind.arity is not None and a.kind.arity < 1:
                problems.append(("BadArity", a.name, f"builder {a.name!r} needs a positive count"))
            if is_collection(a.type_name) and a.kind.arity is None:
                problems.append(
                    ("UnknownArity", a.name, f"collection builder {a.name!r} has no count")
                )
        elif isinstance(a.kind, Internal):
            if not a.kind.procedure:
                problems.append(("NoProcedure", a.name, f"internal {a.name!r} names no build procedure"))
        if a.needs and not a.is_internal:
            problems.append(("NeedsOnExternal", a.name, f"only internal attributes take needs ({a.name!r})"))
        for n in a.needs:
            if n.attribute not in seen and n.attribute not in schema:
                problems.append(
                    ("UnresolvedNeed", a.name, f"{a.name!r} needs unknown attribute {n.attribute!r}")
                )
                continue
            target = schema.attribute(n.attribute)
            if n.substate is not None:
                if not isinstance(target.kind, Builder):
                    problems.append(
                        ("SubStateOnNonBuilder", a.name,
                         f"{a.name!r} requests sub-state {n.substate!r} of non-builder {n.attribute!r}")
                    )
                elif target.kind.substate != n.substate:
                    problems.append(
                        ("SubStateMismatch", a.name,
                         f"{a.name!r} needs {n.attribute}({n.substate!r}) but the builder "
                         f"declares {target.kind.substate!r}")
                    )
    return problems


def validate_schema(schema: ClassSchema) -> None:
    for code, attr, message in schema_problems(schema):
        if code == "UnresolvedNeed":
            need = next(n.attribute for n in schema.attribute(attr).needs if n.attribute not in schema)
            raise UnresolvedNeed(schema.name, attr, need)
        raise SchemaError(f"{schema.name}: {message}")


class Registry(dict):
    """Class name -> :class:`ClassSchema`; missing names raise ``UnknownClass``."""

    def __init__(self, schemas=()):
        super().__init__()
        for s in schemas:
            self.add(s)

    def add(self, schema: ClassSchema) -> None:
        from .errors import DuplicateClass

        if schema.name in self:
            raise DuplicateClass(f"class {schema.name!r} registered twice")
        self[schema.name] = schema

    def __missing__(self, key):
        raise UnknownClass(key)


# -- closures inside one class -----------------------------------------------


def attribute_closure(schema: ClassSchema, attr_name: str) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Internals and externals reached from ``attr_name`` through ``needs``.

    Both tuples are in depth-first, declaration order without repeats; the
    internals tuple includes ``attr_name`` itself when it is internal.
    """
    internals: list[str] = []
    externals: list[str] = []

    def visit(name: str, stack: list[str]) -> None:
        attr = schema.attribute(name)
        if not attr.is_internal:
            if name not in externals:
                externals.append(name)
            return
        if name in stack:
            cycle = stack[stack.index(name):] + [name]
            raise CycleDetected([(schema.name, s) for s in cycle])
        if name in internals:
            return
        for n in attr.needs:
            if n.attribute not in schema:
                raise UnresolvedNeed(schema.name, name, n.attribute)
            visit(n.attribute, stack + [name])
        internals.append(name)

    visit(attr_name, [])
    return tuple(internals), tuple(externals)


# -- production trees ---------------------------------------------------------

Path = tuple[str, ...]


def path_str(path: Path) -> str:
    return ".".join(path)


def parse_path(text) -> Path:
    if isinstance(text, tuple):
        return text
    text = text.strip()
    return tuple(text.split(".")) if text else ()


@dataclass(frozen=True)
class TreeNode:
    path: Path
    class_name: str
    substate: str | None
    kind: str
    value_type: str | None = None  # parameter leaves only

    @property
    def is_leaf_parameter(self) -> bool:
        return self.kind == "parameter"


@dataclass(frozen=True)
class ProductionTree:
    root: Path
    nodes: Mapping[Path, TreeNode]
    edges: Mapping[Path, tuple[Path, ...]]
    #: object node -> attribute -> child node paths that attribute depends on
    deps: Mapping[Path, Mapping[str, tuple[Path, ...]]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.nodes)

    def children(self, path: Path) -> tuple[Path, ...]:
        return self.edges.get(path, ())

    def parent(self, path: Path) -> Path | None:
        return self._parents.get(path)

    @property
    def _parents(self) -> dict[Path, Path]:
        try:
            return self.__dict__["_parent_cache"]
        except KeyError:
            parents = {c: p for p, cs in self.edges.items() for c in cs}
            object.__setattr__(self, "_parent_cache", parents)
            return parents

    def ancestors(self, path: Path) -> list[Path]:
        """Strict ancestors of ``path``, nearest first."""
        out = []
        p = self.parent(path)
        while p is not None:
            out.append(p)
            p = self.parent(p)
        return out

    def walk(self, start: Path | None = None) -> Iterator[tuple[int, TreeNode]]:
        """Depth-first pre-order, children in declaration order."""
        stack = [(0, self.root if start is None else start)]
        while stack:
            depth, p = stack.pop()
            yield depth, self.nodes[p]
            for c in reversed(self.children(p)):
                stack.append((depth + 1, c))

    def leaves(self) -> list[Path]:
        return [n.path for _, n in self.walk() if not self.children(n.path)]

    def depth(self) -> int:
        """Number of nodes on the longest root-to-leaf path."""
        return max(d for d, _ in self.walk()) + 1

    def subtree(self, path: Path, substate: str | None = None) -> list[Path]:
        """Paths under ``path``; restricted to what ``substate`` needs if given."""
        if substate is None or path not in self.deps:
            heads = self.children(path)
        else:
            heads = self.deps[path].get(substate, ())
        out = [path]
        for h in heads:
            out.extend(n.path for _, n in self.walk(h))
        return out

    def serialize(self, start: Path | None = None, substate: str | None = None,
                  relative: bool = False) -> str:
        """Canonical line-oriented form, one node per line.

        ``depth TAB slot_path TAB class TAB substate TAB kind``; the root's slot
        path is empty and a missing sub-state is written ``-``.
        """
        start = self.root if start is None else start
        base = len(start) if relative else 0
        wanted = set(self.subtree(start, substate))
        lines = [f"#{TREE_FORMAT}"]
        for depth, n in self.walk(start):
            if n.path not in wanted:
                continue
            lines.append(
                "\t".join(
                    (str(depth), path_str(n.path[base:]), n.class_name, n.substate or "-", n.kind)
                )
            )
        return "\n".join(lines) + "\n"


def _kind_of_request(schema: ClassSchema, substate: str | None) -> str:
    return "builder" if substate is None else kind_name(schema.attribute(substate).kind)


class _Deriver:
    def __init__(self, registry: Mapping[str, ClassSchema]):
        self.registry = registry
        self.nodes: dict[Path, TreeNode] = {}
        self.edges: dict[Path, tuple[Path, ...]] = {}
        self.deps: dict[Path, dict[str, tuple[Path, ...]]] = {}
        self.closures: dict[tuple[str, str], tuple[tuple[str, ...], tuple[str, ...]]] = {}

    def lookup(self, class_name: str) -> ClassSchema:
        try:
            return self.registry[class_name]
        except KeyError:
            raise UnknownClass(class_name) from None

    def closure(self, schema: ClassSchema, attr: str):
        key = (schema.name, attr)
        if key not in self.closures:
            self.closures[key] = attribute_closure(schema, attr)
        return self.closures[key]

    def expand(self, path: Path, schema: ClassSchema, substate: str | None, kind: str,
               stack: list[tuple[str, str | None]]) -> Path:
        here = (schema.name, substate)
        if here in stack:
            raise CycleDetected(stack[stack.index(here):] + [here])
        if substate is not None:
            attr = schema.attribute(substate)
            if isinstance(attr.kind, Parameter):
                return self._leaf(path, schema, attr)
        tracked = [a.name for a in schema.attributes] if substate is None else None
        if tracked is None:
            internals, externals = self.closure(schema, substate)
            tracked = list(internals) + [e for e in externals if e not in internals]
        child_paths: dict[str, tuple[Path, ...]] = {}
        node_deps: dict[str, tuple[Path, ...]] = {}
        order: list[Path] = []
        for name in [a.name for a in schema.attributes if a.name in tracked and not a.is_internal]:
            attr = schema.attribute(name)
            if isinstance(attr.kind, Parameter):
                kids = (self._leaf(path, schema, attr),)
            else:
                if is_collection(attr.type_name) and attr.kind.arity is None:
                    raise SchemaError(
                        f"{schema.name}.{name}: collection builder needs a count to expand")
                child_schema = self.lookup(element_type(attr.type_name))
                if attr.kind.substate not in child_schema:
                    raise UnknownSubState(child_schema.name, attr.kind.substate)
                segs = (
                    [name] if attr.kind.arity is None
                    else [f"{name}[{i}]" for i in range(1, attr.kind.arity + 1)]
                )
                kids = tuple(
                    self.expand(path + (seg,), child_schema, attr.kind.substate, "builder",
                                stack + [here])
                    for seg in segs
                )
            child_paths[name] = kids
        # children in the order the requested sub-state reaches them
        if substate is None:
            reach = [a.name for a in schema.attributes if not a.is_internal]
        else:
            reach = list(self.closure(schema, substate)[1])
        for name in reach:
            order.extend(child_paths[name])
        for name in tracked:
            if name in child_paths:
                node_deps[name] = child_paths[name]
            else:
                node_deps[name] = tuple(
                    p for e in self.closure(schema, name)[1] for p in child_paths[e]
                )
        self.nodes[path] = TreeNode(path, schema.name, substate, kind)
        self.edges[path] = tuple(order)
        self.deps[path] = node_deps
        return path

    def _leaf(self, parent: Path, schema: ClassSchema, attr: Attribute) -> Path:
        path = parent + (attr.name,)
        self.nodes[path] = TreeNode(path, schema.name, attr.name, "parameter", attr.type_name)
        self.edges[path] = ()
        return path


def derive_production_tree(registry: Mapping[str, ClassSchema], root_class: str,
                           target_substate: str | None = None) -> ProductionTree:
    """Expand the produced-by relation from ``root_class``.

    With ``target_substate=None`` the root is expanded to its ground state:
    every builder and parameter of the root class becomes a child.
    """
    d = _Deriver(registry)
    schema = d.lookup(root_class)
    if target_substate is not None and target_substate not in schema:
        raise UnknownSubState(root_class, target_substate)
    for a in schema.attributes:
        for n in a.needs:
            if n.attribute not in schema:
                raise UnresolvedNeed(schema.name, a.name, n.attribute)
    root = d.expand((), schema, target_substate, _kind_of_request(schema, target_substate), [])
    return ProductionTree(root=root, nodes=d.nodes, edges=d.edges, deps=d.deps)


def ground_state_leaves(tree: ProductionTree) -> list[Path]:
    """Every parameter leaf of ``tree``, in canonical order."""
    return [n.path for _, n in tree.walk() if n.kind == "parameter"]


@dataclass(frozen=True)
class CalculationConditions:
    """Values for exactly the parameter leaves of a tree."""

    assignments: Mapping[str, object]

    @classmethod
    def for_tree(cls, tree: ProductionTree, values: Mapping) -> "CalculationConditions":
        from .errors import MissingParameter, UnknownLeaf

        wanted = {path_str(p) for p in ground_state_leaves(tree)}
        given = {path_str(parse_path(k)): v for k, v in values.items()}
        extra = sorted(set(given) - wanted)
        if extra:
            raise UnknownLeaf(extra[0])
        missing = wanted - set(given)
        if missing:
            raise MissingParameter(missing)
        return cls({k: coerce_parameter(tree.nodes[parse_path(k)].value_type, v, k)
                    for k, v in given.items()})


_PY_TYPES = {"BOOLEAN": (bool,), "INTEGER": (int,), "REAL": (float, int), "STRING": (str,)}


def coerce_parameter(type_name: str | None, value, where: str = ""):
    """Check ``value`` against a basic type, widening INTEGER literals to REAL."""
    from .errors import TypeMismatch

    if type_name is None:
        return value
    base = element_type(type_name)
    if is_collection(type_name):
        if not isinstance(value, (list, tuple)):
            raise TypeMismatch(f"{where}: expected {type_name}, got {value!r}")
        return tuple(coerce_parameter(base, v, where) for v in value)
    ok = _PY_TYPES[base]
    if isinstance(value, bool) and base != "BOOLEAN" or not isinstance(value, ok):
        raise TypeMismatch(f"{where}: expected {base}, got {value!r}")
    if base == "REAL":
        return float(value)
    return value


# -- well-built check and internal trees -------------------------------------


@dataclass(frozen=True)
class WellBuiltReport:
    class_name: str
    well_built: bool
    leaf_clusters: tuple[frozenset, ...]
    #: internal attribute -> externals (builders and parameters) it needs
    needs: Mapping[str, frozenset]


def check_well_built(registry: Mapping[str, ClassSchema], class_name: str) -> WellBuiltReport:
    try:
        schema = registry[class_name]
    except KeyError:
        raise UnknownClass(class_name) from None
    full = frozenset(a.name for a in schema.externals)
    needs = {a.name: frozenset(attribute_closure(schema, a.name)[1]) for a in schema.internals}
    clusters: dict[frozenset, list[str]] = {}
    for ext in (a.name for a in schema.externals):
        users = frozenset(i for i, leaves in needs.items() if ext in leaves)
        clusters.setdefault(users, []).append(ext)
    return WellBuiltReport(
        class_name=class_name,
        well_built=all(leaves == full for leaves in needs.values()),
        leaf_clusters=tuple(frozenset(c) for c in clusters.values()),
        needs=needs,
    )


def internal_tree(registry: Mapping[str, ClassSchema], class_name: str, attribute: str) -> ProductionTree:
    """Tree of one internal attribute down to the builders it rests on."""
    try:
        schema = registry[class_name]
    except KeyError:
        raise UnknownClass(class_name) from None
    attr = schema.attribute(attribute)
    if not attr.is_internal:
        raise NotInternal(class_name, attribute)
    nodes: dict[Path, TreeNode] = {}
    edges: dict[Path, tuple[Path, ...]] = {}

    def visit(path: Path, a: Attribute, stack: list[str]) -> list[Path]:
        if isinstance(a.kind, Builder):
            segs = [a.name] if a.kind.arity is None else [
                f"{a.name}[{i}]" for i in range(1, a.kind.arity + 1)]
            out = []
            for seg in segs:
                p = path + (seg,)
                nodes[p] = TreeNode(p, element_type(a.type_name), a.kind.substate, "builder")
                edges[p] = ()
                out.append(p)
            return out
        p = path + (a.name,)
        if isinstance(a.kind, Parameter):
            nodes[p] = TreeNode(p, schema.name, a.name, "parameter", a.type_name)
            edges[p] = ()
            return [p]
        if a.name in stack:
            cycle = stack[stack.index(a.name):] + [a.name]
            raise CycleDetected([(schema.name, s) for s in cycle])
        nodes[p] = TreeNode(p, schema.name, a.name, "internal")
        kids: list[Path] = []
        for n in a.needs:
            if n.attribute not in schema:
                raise UnresolvedNeed(schema.name, a.name, n.attribute)
            kids.extend(visit(p, schema.attribute(n.attribute), stack + [a.name]))
        edges[p] = tuple(kids)
        return [p]

    (root,) = visit((), attr, [])
    return ProductionTree(root=root, nodes=nodes, edges=edges)

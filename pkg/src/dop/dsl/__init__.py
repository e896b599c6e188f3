"""Parsing and rendering of ``.dop`` class sources."""

from __future__ import annotations

import glob
import os

from ..model import Builder, Registry, element_type
from .lexer import SourceUnit, Span, Token, tokenize
from .parser import Diagnostic, has_errors, parse_class, parse_classes
from .render import render_interface

__all__ = [
    "Diagnostic",
    "SourceUnit",
    "Span",
    "Token",
    "expand_sources",
    "has_errors",
    "load_registry",
    "parse_class",
    "parse_classes",
    "render_interface",
    "tokenize",
]


def load_registry(sources) -> tuple[Registry | None, list[Diagnostic]]:
    """Parse ``sources`` and resolve builder types across them.

    Returns ``(None, diagnostics)`` when any error was found, so a registry is
    only ever handed out fully resolved.
    """
    diags: list[Diagnostic] = []
    registry = Registry()
    where: dict[str, Span] = {}
    for unit in sources:
        if isinstance(unit, str):
            unit = SourceUnit(unit)
        classes, ds = parse_classes(unit)
        diags.extend(ds)
        if not classes:
            diags.append(Diagnostic("error", "NoClass", "no class declaration found",
                                    Span(unit.origin, 1, 1, 1, 1, 0, 0)))
        for schema in classes:
            span = Span(unit.origin, 1, 1, 1, 1, 0, 0)
            if schema.name in registry:
                diags.append(Diagnostic(
                    "error", "DuplicateClass",
                    f"class {schema.name} already defined in {where[schema.name].origin}", span))
                continue
            registry[schema.name] = schema
            where[schema.name] = span
    for schema in registry.values():
        for a in schema.attributes:
            if isinstance(a.kind, Builder):
                target = element_type(a.type_name)
                if target not in registry:
                    diags.append(Diagnostic(
                        "error", "UnresolvedType",
                        f"{schema.name}.{a.name}: unresolved type {target}", where[schema.name]))
                elif a.kind.substate not in registry[target]:
                    diags.append(Diagnostic(
                        "error", "UnknownSubState",
                        f"{schema.name}.{a.name}: {target} has no sub-state {a.kind.substate!r}",
                        where[schema.name]))
    if has_errors(diags):
        return None, diags
    return registry, diags


def expand_sources(patterns) -> list[SourceUnit]:
    """Files named by globs, directories (all ``*.dop`` inside) or plain paths."""
    paths: list[str] = []
    for pat in patterns:
        if os.path.isdir(pat):
            found = sorted(glob.glob(os.path.join(pat, "*.dop")))
        else:
            found = sorted(glob.glob(pat)) or ([pat] if os.path.exists(pat) else [])
        if not found:
            raise FileNotFoundError(f"no class sources match {pat!r}")
        paths.extend(p for p in found if p not in paths)
    return [SourceUnit.from_path(p) for p in paths]

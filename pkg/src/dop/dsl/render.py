"""Render a schema back to source, showing builders and sub-states."""

from __future__ import annotations

from ..model import Attribute, Builder, ClassSchema, Internal

INDENT = "   "


def _need(n) -> str:
    return n.attribute if n.substate is None else f'{n.attribute}("{n.substate}")'


def _signature(a: Attribute) -> str:
    sig = f"{a.name} : {a.type_name}"
    if isinstance(a.kind, Internal):
        sig += f" internal ({a.kind.procedure})"
    elif isinstance(a.kind, Builder):
        sig += f' builder ("{a.kind.substate}")'
        if a.kind.arity is not None:
            sig += f" count ({a.kind.arity})"
    return sig


def _attribute_lines(a: Attribute) -> list[str]:
    lines = [INDENT + _signature(a)]
    body = []
    if a.needs:
        body.append("needs " + ", ".join(_need(n) for n in a.needs))
    if a.uses:
        body.append("uses (" + ", ".join(f"{c} : {p}" for c, p in a.uses) + ")")
    for keyword, text in (("require", a.require), ("ensure", a.ensure)):
        if text:
            body.append(keyword)
            body.extend(INDENT + t for t in text)
    if body:
        lines.extend(INDENT * 2 + b for b in body)
        lines.append(INDENT * 2 + f"end -- {a.name}")
    return lines


def render_interface(schema: ClassSchema) -> str:
    """Source text for ``schema``; parsing it gives back an equal schema."""
    out = [f"class {schema.name}", ""]
    export = None
    for a in schema.attributes:
        if a.export != export:
            export = a.export
            out.extend([f"feature {{{export}}}", ""])
        out.extend(_attribute_lines(a))
        out.append("")
    if schema.invariant:
        out.append("invariant")
        out.extend(INDENT + t for t in schema.invariant)
        out.append("")
    out.append(f"end -- class {schema.name}")
    return "\n".join(out) + "\n"

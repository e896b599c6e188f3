"""Recursive-descent parser for the extended class language.

The grammar covers what the runtime needs: ``class`` headers, ``feature``
blocks, attribute signatures carrying ``internal (proc)`` or
``builder ("sub-state")``, ``needs`` and ``uses`` clauses, and assertion
blocks kept as opaque text.  Routine bodies (``do ... end``) are skipped.

Errors never abort the parse: the parser records a :class:`Diagnostic` and
resynchronizes at the next ``end``.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..model import (
    CONTEXT_SUFFIXES,
    Attribute,
    Builder,
    ClassSchema,
    Internal,
    Need,
    Parameter,
    element_type,
    is_basic,
    is_collection,
    schema_problems,
)
from .lexer import SourceUnit, Span, Token, tokenize

_WARNING_PROBLEMS = {"UnknownArity"}

# tokens that open a block closed by ``end`` inside a routine body
_BLOCK_OPENERS = frozenset({"if", "from", "inspect", "check", "debug", "across"})
_BODY_STARTERS = frozenset({"is", "needs", "uses", "require", "local", "do", "once", "ensure", "deferred"})
_REQUIRE_STOP = frozenset({"needs", "uses", "local", "do", "once", "ensure", "end", "deferred"})
_CLASS_STOP = frozenset({"class", "eof"})


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    message: str
    span: Span

    def __str__(self) -> str:
        return f"{self.span}: {self.severity}: {self.message} [{self.code}]"


class _Resync(Exception):
    pass


class _Parser:
    def __init__(self, unit: SourceUnit):
        self.unit = unit
        self.toks = tokenize(unit)
        self.pos = 0
        self.diags: list[Diagnostic] = []

    # -- token helpers -------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def at(self, *texts: str) -> bool:
        t = self.tok
        return t.kind in ("keyword", "symbol") and t.text in texts

    def next(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.pos += 1
        return t

    def error(self, code: str, message: str, tok: Token | None = None, severity="error") -> None:
        span = (tok or self.tok).span
        self.diags.append(Diagnostic(severity, code, message, span))

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error("Syntax", f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
            raise _Resync
        return self.next()

    def expect_ident(self, what: str) -> Token:
        if self.tok.kind != "ident":
            self.error("Syntax", f"expected {what}, found {self.tok.text or 'end of input'!r}")
            raise _Resync
        return self.next()

    def expect_string(self) -> str:
        t = self.tok
        if t.kind != "string":
            self.error("Syntax", f"expected a quoted sub-state name, found {t.text or 'end of input'!r}")
            raise _Resync
        if not (t.text.endswith('"') and len(t.text) > 1 or t.text.endswith("''") and len(t.text) > 3):
            self.error("UnterminatedString", "unterminated string literal", t)
        self.next()
        return t.value or ""

    def resync(self) -> None:
        """Skip to just past the next ``end`` (or to a class-level keyword)."""
        while self.tok.kind != "eof":
            if self.at("end"):
                self.next()
                return
            if self.at("feature", "invariant", "class"):
                return
            self.next()

    def slice_text(self, start: int, stop: int) -> tuple[str, ...]:
        """Source between two token indexes as stripped, non-empty lines."""
        if stop <= start:
            return ()
        a = self.toks[start].span.start
        b = self.toks[stop].span.start
        raw = self.unit.text[a:b]
        return tuple(line.strip() for line in raw.splitlines() if line.strip())

    # -- grammar -------------------------------------------------------------

    def parse_file(self) -> list[ClassSchema]:
        classes = []
        while self.tok.kind != "eof":
            if self.at("class"):
                classes.append(self.parse_class())
            else:
                self.error("Syntax", f"expected 'class', found {self.tok.text!r}")
                while self.tok.kind != "eof" and not self.at("class"):
                    self.next()
        return classes

    def parse_class(self) -> ClassSchema:
        start_tok = self.expect_class_header()
        name = start_tok.text if start_tok is not None else ""
        if name and not name.isupper():
            self.error("ClassNameCase", f"class name {name!r} is not upper-case", start_tok, "warning")
        attributes: list[Attribute] = []
        spans: dict[str, Span] = {}
        invariant: tuple[str, ...] = ()
        export = "ANY"
        while True:
            t = self.tok
            if t.kind == "eof":
                self.error("MissingEnd", f"class {name} is not closed by 'end'", t, "warning")
                break
            if self.at("class"):
                self.error("MissingEnd", f"class {name} is not closed by 'end'", t, "warning")
                break
            if self.at("end"):
                self.next()
                break
            if self.at("feature"):
                self.next()
                export = self.parse_export()
                continue
            if self.at("invariant"):
                self.next()
                if self.at(":"):
                    self.next()
                begin = self.pos
                while not (self.at("end", "class") or self.tok.kind == "eof"):
                    self.next()
                invariant = self.slice_text(begin, self.pos)
                continue
            try:
                attr = self.parse_declaration(export)
            except _Resync:
                self.resync()
                continue
            if attr is not None:
                attributes.append(attr)
                spans.setdefault(attr.name, t.span)
        schema = ClassSchema(name=name, attributes=tuple(attributes), invariant=invariant)
        for code, attr_name, message in schema_problems(schema):
            sev = "warning" if code in _WARNING_PROBLEMS else "error"
            span = spans.get(attr_name, start_tok.span if start_tok else self.tok.span)
            self.diags.append(Diagnostic(sev, code, message, span))
        return schema

    def expect_class_header(self) -> Token | None:
        self.next()  # 'class'
        if self.tok.kind != "ident":
            self.error("Syntax", "expected a class name after 'class'")
            return None
        return self.next()

    def parse_export(self) -> str:
        if not self.at("{"):
            return "ANY"
        self.next()
        names = []
        while not self.at("}") and self.tok.kind != "eof":
            t = self.next()
            if t.kind == "ident":
                names.append(t.text)
            elif t.text != ",":
                self.error("Syntax", f"unexpected {t.text!r} in export list", t)
        if self.at("}"):
            self.next()
        else:
            self.error("Syntax", "unterminated export list")
        return ", ".join(names) if names else "ANY"

    def parse_type(self) -> str:
        t = self.expect_ident("a type name")
        text = t.text
        if self.at("["):
            self.next()
            parts = [self.parse_type()]
            while self.at(","):
                self.next()
                parts.append(self.parse_type())
            self.expect("]")
            text += "[" + ", ".join(parts) + "]"
        return text

    def parse_declaration(self, export: str) -> Attribute | None:
        name_tok = self.tok
        if name_tok.kind != "ident":
            self.error("Syntax", f"expected an attribute declaration, found {name_tok.text!r}")
            raise _Resync
        self.next()
        name = name_tok.text
        if self.at("("):
            # routine with formal arguments, e.g. ``make (points : ARRAY[POINT])``
            depth = 0
            while self.tok.kind != "eof":
                t = self.next()
                if t.text == "(":
                    depth += 1
                elif t.text == ")":
                    depth -= 1
                    if depth == 0:
                        break
            if self.at(":"):
                self.next()
                self.parse_type()
            self.parse_body()
            self.error("RoutineIgnored", f"routine {name!r} ignored; objects are created by their manager",
                       name_tok, "warning")
            return None
        if self.at("is") or not self.at(":"):
            if not self.at(":") and not self.at(*_BODY_STARTERS):
                self.error("Syntax", f"expected ':' after {name!r}")
                raise _Resync
            self.parse_body()
            self.error("RoutineIgnored", f"procedure {name!r} ignored", name_tok, "warning")
            return None
        self.next()  # ':'
        type_name = self.parse_type()
        kind = None
        if self.at("internal"):
            self.next()
            self.expect("(")
            kind = Internal(self.expect_ident("a build procedure name").text)
            self.expect(")")
        elif self.at("builder"):
            self.next()
            self.expect("(")
            substate = self.expect_string()
            self.expect(")")
            arity = None
            if self.at("count"):
                self.next()
                self.expect("(")
                num = self.tok
                if num.kind != "number" or not num.text.isdigit():
                    self.error("Syntax", "expected an integer count")
                    raise _Resync
                self.next()
                arity = int(num.text)
                self.expect(")")
            kind = Builder(substate, arity)
        body = self.parse_body() if self.at(*_BODY_STARTERS) else None
        needs, uses, require, ensure, computed = body or ((), (), (), (), False)
        if kind is None:
            build_proc = dict(uses).get("build")
            if needs or computed:
                kind = Internal(build_proc or f"{name}_build")
            elif is_basic(type_name):
                kind = Parameter(element_type(type_name), is_collection(type_name))
            else:
                self.error(
                    "UntypedAttribute",
                    f"attribute {name!r} of class type {type_name} must be declared internal or builder",
                    name_tok,
                )
                return None
        elif isinstance(kind, Internal):
            build_proc = dict(uses).get("build")
            if build_proc and build_proc != kind.procedure:
                self.error(
                    "ConflictingProcedure",
                    f"{name!r} is built by {kind.procedure} but uses names {build_proc}",
                    name_tok,
                )
        for ctx, proc in uses:
            suffix = dict(CONTEXT_SUFFIXES).get(ctx)
            if suffix is None:
                self.error("UnknownContext", f"unknown context {ctx!r} in uses clause", name_tok)
            elif not proc.endswith(suffix):
                self.error("ContextSuffix", f"{ctx} procedure {proc!r} should end with {suffix!r}",
                           name_tok, "warning")
        return Attribute(name, type_name, kind, tuple(needs), tuple(uses), tuple(require),
                         tuple(ensure), export)

    def parse_body(self):
        """Parse an attribute or routine body up to and including its ``end``."""
        needs: list[Need] = []
        uses: list[tuple[str, str]] = []
        require: tuple[str, ...] = ()
        ensure: tuple[str, ...] = ()
        computed = False
        if self.at("is"):
            self.next()
        while True:
            if self.at("end"):
                self.next()
                break
            if self.tok.kind == "eof" or self.at("class", "feature", "invariant"):
                self.error("MissingEnd", "body not closed by 'end'")
                break
            if self.at("needs"):
                self.next()
                needs.extend(self.parse_needs())
            elif self.at("uses"):
                self.next()
                uses.extend(self.parse_uses())
            elif self.at("require"):
                self.next()
                begin = self.pos
                while not (self.at(*_REQUIRE_STOP) or self.tok.kind == "eof"
                           or self.at("class", "feature", "invariant")):
                    self.next()
                require = self.slice_text(begin, self.pos)
            elif self.at("ensure"):
                self.next()
                begin = self.pos
                while not (self.at("end", "class", "feature", "invariant") or self.tok.kind == "eof"):
                    self.next()
                ensure = self.slice_text(begin, self.pos)
            elif self.at("local"):
                self.next()
                while not (self.at("do", "once", "end", "ensure", "class", "feature")
                           or self.tok.kind == "eof"):
                    self.next()
            elif self.at("do", "once", "deferred"):
                self.next()
                computed = True
                self.skip_compound()
            else:
                self.error("Syntax", f"unexpected {self.tok.text!r} in declaration body")
                raise _Resync
        return needs, uses, require, ensure, computed

    def skip_compound(self) -> None:
        depth = 0
        while self.tok.kind != "eof":
            if depth == 0 and self.at("end", "ensure", "rescue"):
                return
            if self.at("class", "feature") and depth == 0:
                return
            t = self.next()
            if t.kind == "keyword":
                if t.text in _BLOCK_OPENERS:
                    depth += 1
                elif t.text == "end":
                    depth -= 1

    def parse_need_item(self) -> Need:
        name = self.expect_ident("a needed attribute").text
        substate = None
        if self.at("("):
            self.next()
            substate = self.expect_string()
            self.expect(")")
        return Need(name, substate)

    def parse_needs(self) -> list[Need]:
        items = []
        if self.at("("):
            self.next()
            items.append(self.parse_need_item())
            while self.at(","):
                self.next()
                items.append(self.parse_need_item())
            self.expect(")")
            return items
        items.append(self.parse_need_item())
        while self.at(","):
            self.next()
            items.append(self.parse_need_item())
        return items

    def parse_uses(self) -> list[tuple[str, str]]:
        self.expect("(")
        items = []
        while True:
            ctx = self.tok
            if ctx.kind not in ("ident", "keyword"):
                self.error("Syntax", "expected a context name")
                raise _Resync
            self.next()
            self.expect(":")
            proc = self.expect_ident("a procedure name").text
            items.append((ctx.text, proc))
            if not self.at(","):
                break
            self.next()
        self.expect(")")
        return items


def parse_classes(source: SourceUnit) -> tuple[list[ClassSchema], list[Diagnostic]]:
    """Parse every class in ``source``."""
    p = _Parser(source)
    classes = p.parse_file()
    return classes, p.diags


def parse_class(source: SourceUnit | str) -> tuple[ClassSchema, list[Diagnostic]]:
    """Parse the first class of ``source``; never raises on malformed input."""
    if isinstance(source, str):
        source = SourceUnit(source)
    classes, diags = parse_classes(source)
    start = Span(source.origin, 1, 1, 1, 1, 0, 0)
    if not classes:
        diags.append(Diagnostic("error", "NoClass", "no class declaration found", start))
        return ClassSchema(name=""), diags
    if len(classes) > 1:
        diags.append(Diagnostic("warning", "ExtraClasses",
                                f"{len(classes) - 1} further class(es) ignored", start))
    return classes[0], diags


def has_errors(diags) -> bool:
    return any(d.severity == "error" for d in diags)

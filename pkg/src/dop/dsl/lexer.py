"""Tokenizer for ``.dop`` class sources.

Total by construction: every character ends up in some token, so arbitrary
input never raises.
"""

from __future__ import annotations

from dataclasses import dataclass

KEYWORDS = frozenset(
    """
    class feature end invariant needs uses internal builder count is do
    require ensure local once deferred rescue if then else elseif from until
    loop inspect when check debug across
    """.split()
)


@dataclass(frozen=True)
class Span:
    origin: str
    line: int
    column: int
    end_line: int
    end_column: int
    start: int
    end: int

    def __str__(self) -> str:
        return f"{self.origin}:{self.line}:{self.column}"


@dataclass(frozen=True)
class Token:
    kind: str  # ident, keyword, string, number, symbol, eof
    text: str
    span: Span
    value: str | None = None  # decoded string literal


@dataclass(frozen=True)
class SourceUnit:
    text: str
    origin: str = "<string>"

    @classmethod
    def from_path(cls, path) -> "SourceUnit":
        with open(path, encoding="utf-8", errors="replace") as f:
            return cls(f.read(), str(path))

    @classmethod
    def from_bytes(cls, data: bytes, origin: str = "<bytes>") -> "SourceUnit":
        return cls(data.decode("utf-8", errors="replace"), origin)


_SYMBOLS2 = ("/=", ":=", ">=", "<=", "->")


def tokenize(unit: SourceUnit) -> list[Token]:
    text = unit.text
    n = len(text)
    tokens: list[Token] = []
    i = 0
    line, col = 1, 1

    def advance(j: int) -> None:
        nonlocal i, line, col
        while i < j:
            if text[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    def emit(kind: str, j: int, value: str | None = None) -> None:
        sl, sc, start = line, col, i
        advance(j)
        tokens.append(Token(kind, text[start:j], Span(unit.origin, sl, sc, line, col, start, j), value))

    while i < n:
        c = text[i]
        if c.isspace():
            advance(i + 1)
        elif text.startswith("--", i):
            j = text.find("\n", i)
            advance(n if j < 0 else j)
        elif c.isalpha() or c == "_":
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            emit("keyword" if word in KEYWORDS else "ident", j)
        elif c.isdigit():
            j = i + 1
            while j < n and (text[j].isdigit() or text[j] in "._"):
                j += 1
            emit("number", j)
        elif c == '"':
            j = i + 1
            while j < n and text[j] != '"' and text[j] != "\n":
                j += 1
            value = text[i + 1:j]
            emit("string", min(j + 1, n) if j < n and text[j] == '"' else j, value)
        elif text.startswith("``", i):
            j = text.find("''", i + 2)
            nl = text.find("\n", i + 2)
            if j < 0 or (0 <= nl < j):
                end = n if nl < 0 else nl
                emit("string", end, text[i + 2:end])
            else:
                emit("string", j + 2, text[i + 2:j])
        else:
            two = text[i:i + 2]
            emit("symbol", i + 2 if two in _SYMBOLS2 else i + 1)
    tokens.append(Token("eof", "", Span(unit.origin, line, col, line, col, n, n)))
    return tokens

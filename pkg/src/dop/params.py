"""Parameter files: one ``slot_path = literal`` assignment per line.

Literals are JSON scalars or arrays (``1.5``, ``3``, ``true``, ``"text"``,
``[0.0, 1.0]``).  ``#`` starts a comment outside string literals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .model import ProductionTree, coerce_parameter, ground_state_leaves, parse_path, path_str


class ParameterFileError(ValueError):
    pass


def parse_literal(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        raise ParameterFileError(f"bad literal {text!r}") from None


def _strip_comment(line: str) -> str:
    in_str = False
    for i, c in enumerate(line):
        if c == '"' and (i == 0 or line[i - 1] != "\\"):
            in_str = not in_str
        elif c == "#" and not in_str:
            return line[:i]
    return line


@dataclass
class ParameterFile:
    assignments: dict[str, object]
    origin: str = "<parameters>"

    @classmethod
    def parse(cls, text: str, origin: str = "<parameters>") -> "ParameterFile":
        out: dict[str, object] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = _strip_comment(raw).strip()
            if not line:
                continue
            path, eq, literal = line.partition("=")
            if not eq or not path.strip():
                raise ParameterFileError(f"{origin}:{lineno}: expected 'slot_path = literal'")
            key = path_str(parse_path(path))
            if key in out:
                raise ParameterFileError(f"{origin}:{lineno}: {key} assigned twice")
            try:
                out[key] = parse_literal(literal)
            except ParameterFileError as e:
                raise ParameterFileError(f"{origin}:{lineno}: {e}") from None
        return cls(out, origin)

    @classmethod
    def read(cls, path) -> "ParameterFile":
        with open(path, encoding="utf-8") as f:
            return cls.parse(f.read(), str(path))

    def check(self, tree: ProductionTree) -> list[str]:
        """Paths that are not parameter leaves of ``tree`` (unknown paths)."""
        leaves = {path_str(p) for p in ground_state_leaves(tree)}
        return sorted(k for k in self.assignments if k not in leaves)

    def missing(self, tree: ProductionTree) -> list[str]:
        return sorted(path_str(p) for p in ground_state_leaves(tree)
                      if path_str(p) not in self.assignments)

    def typed(self, tree: ProductionTree) -> dict[str, object]:
        return {k: coerce_parameter(tree.nodes[parse_path(k)].value_type, v, k)
                for k, v in self.assignments.items()}

    @staticmethod
    def render(values) -> str:
        return "".join(f"{k} = {json.dumps(v)}\n" for k, v in values.items())

"""Exception hierarchy shared by every layer of the runtime."""

from __future__ import annotations


class DopError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(DopError):
    """A class schema is internally inconsistent."""


class UnknownClass(SchemaError, KeyError):
    def __init__(self, class_name: str):
        super().__init__(class_name)
        self.class_name = class_name

    def __str__(self) -> str:
        return f"unknown class {self.class_name!r}"


class UnknownSubState(SchemaError):
    def __init__(self, class_name: str, substate: str):
        super().__init__(class_name, substate)
        self.class_name = class_name
        self.substate = substate

    def __str__(self) -> str:
        return f"class {self.class_name!r} has no sub-state {self.substate!r}"


class UnresolvedNeed(SchemaError):
    def __init__(self, class_name: str, attribute: str, need: str):
        super().__init__(class_name, attribute, need)
        self.class_name = class_name
        self.attribute = attribute
        self.need = need

    def __str__(self) -> str:
        return (
            f"{self.class_name}.{self.attribute} needs {self.need!r}, "
            f"which is not an attribute of {self.class_name}"
        )


class NotInternal(SchemaError):
    def __init__(self, class_name: str, attribute: str):
        super().__init__(class_name, attribute)
        self.class_name = class_name
        self.attribute = attribute

    def __str__(self) -> str:
        return f"{self.class_name}.{self.attribute} is not an internal attribute"


class CycleDetected(DopError):
    """A (class, sub-state) pair was reached from itself.

    ``cycle`` lists the pairs from the first occurrence back to the repeat.
    """

    def __init__(self, cycle):
        self.cycle = [tuple(step) for step in cycle]
        super().__init__(self.cycle)

    def __str__(self) -> str:
        return "cycle: " + " -> ".join(f"{c}({s})" for c, s in self.cycle)


class UnresolvedType(SchemaError):
    def __init__(self, type_name: str, referenced_by: str = ""):
        super().__init__(type_name, referenced_by)
        self.type_name = type_name
        self.referenced_by = referenced_by

    def __str__(self) -> str:
        where = f" (referenced by {self.referenced_by})" if self.referenced_by else ""
        return f"unresolved type {self.type_name}{where}"


class DuplicateClass(SchemaError):
    pass


class MissingParameter(DopError):
    def __init__(self, paths):
        self.paths = sorted(paths)
        super().__init__(self.paths)

    def __str__(self) -> str:
        return "missing parameter(s): " + ", ".join(self.paths)


class UnknownLeaf(DopError, KeyError):
    def __init__(self, path: str):
        super().__init__(path)
        self.path = path

    def __str__(self) -> str:
        return f"{self.path!r} is not a parameter leaf of the production tree"


class TypeMismatch(DopError, TypeError):
    pass


class BuildFailure(DopError):
    def __init__(self, path: str, attribute: str, cause: BaseException):
        super().__init__(path, attribute, cause)
        self.path = path
        self.attribute = attribute
        self.cause = cause

    def __str__(self) -> str:
        where = f"{self.path}.{self.attribute}" if self.path else self.attribute
        return f"build of {where} failed: {self.cause!r}"


class IterationError(DopError):
    """Wraps an error raised while running iteration ``iteration`` (1-based)."""

    def __init__(self, iteration: int, cause: BaseException):
        super().__init__(iteration, cause)
        self.iteration = iteration
        self.cause = cause

    def __str__(self) -> str:
        return f"iteration {self.iteration}: {self.cause}"


class StoreError(DopError):
    pass


class StorageCorrupt(StoreError):
    pass


class StoreIOError(StoreError, OSError):
    pass


class FormatVersionMismatch(StoreError):
    pass


class MalformedTrace(DopError, ValueError):
    pass

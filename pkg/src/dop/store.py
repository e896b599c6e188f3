"""State keys and the on-disk value store.

A :class:`StateKey` is the SHA-256 digest of a canonical preimage: the
node's subtree (restricted to what the requested sub-state needs, with slot
paths made relative to the node), the parameter values on that subtree, the
sub-state name and a schema version.  Two branches of a tree never influence
each other's keys, and the same TRIANGLE gets the same key whether it is the
root of a tree or the ``base`` of a pyramid.

Layout::

    <root>/format                         text header, see FORMAT_HEADER
    <root>/objects/<2 hex>/<digest>.rec   one record per stored state

Record (big-endian)::

    magic "DOPR" | u16 format | 32-byte digest | u64 payload length
    | u32 CRC-32 of payload | payload (see :mod:`dop.codec`)
"""

from __future__ import annotations

import hashlib
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass
from typing import Mapping

from .codec import DecodeError, decode_value, encode_value
from .errors import FormatVersionMismatch, MissingParameter, StorageCorrupt, StoreIOError
from .model import CalculationConditions, ProductionTree, coerce_parameter, parse_path, path_str

FORMAT_VERSION = 1
KEY_VERSION = 1
FORMAT_HEADER = f"dop-store\nformat {FORMAT_VERSION}\nhash sha256\nchecksum crc32\n"

_MAGIC = b"DOPR"
_HEADER = struct.Struct(">4sH32sQI")


@dataclass(frozen=True)
class StateKey:
    digest: str  # 64 hex characters
    preimage: str

    def __str__(self) -> str:
        return self.digest


def _assignments(conditions) -> Mapping[str, object]:
    if isinstance(conditions, CalculationConditions):
        return conditions.assignments
    return {path_str(parse_path(k)): v for k, v in conditions.items()}


def key_preimage(tree: ProductionTree, node, substate: str | None, conditions,
                 schema_version: str = "0") -> str:
    path = parse_path(node) if not isinstance(node, tuple) else node
    n = tree.nodes[path]
    values = _assignments(conditions)
    restrict = substate if path in tree.deps else None
    lines = [
        f"dop-key {KEY_VERSION}",
        f"schema {schema_version}",
        f"class {n.class_name}",
        f"substate {substate if substate is not None else '-'}",
    ]
    # The node's own line is left out: how the node was reached (root or
    # builder slot) must not change its key.
    body = tree.serialize(path, restrict, relative=True).splitlines()
    lines.append(body[0])
    lines.extend(body[2:])
    lines.append("params")
    missing = []
    base = len(path)
    for p in tree.subtree(path, restrict):
        leaf = tree.nodes[p]
        if leaf.kind != "parameter":
            continue
        name = path_str(p)
        if name not in values:
            missing.append(name)
            continue
        v = coerce_parameter(leaf.value_type, values[name], name)
        lines.append(f"{path_str(p[base:])}\t{leaf.value_type}\t{encode_value(v).hex()}")
    if missing:
        raise MissingParameter(missing)
    return "\n".join(lines) + "\n"


def derive_key(tree: ProductionTree, node, substate: str | None, conditions,
               schema_version: str = "0") -> StateKey:
    """Key for ``node`` in ``substate`` under ``conditions``."""
    pre = key_preimage(tree, node, substate, conditions, schema_version)
    return StateKey(hashlib.sha256(pre.encode("utf-8")).hexdigest(), pre)


class MemoryStore:
    """Dict-backed store with the same interface as :class:`ValueStore`."""

    def __init__(self, schema_version: str = "0"):
        self.schema_version = schema_version
        self.records: dict[str, bytes] = {}
        self.hits = self.misses = self.writes = 0

    def get(self, key: StateKey):
        raw = self.records.get(key.digest)
        if raw is None:
            self.misses += 1
            return None
        self.hits += 1
        return decode_value(raw)

    def put(self, key: StateKey, value) -> None:
        self.records[key.digest] = encode_value(value)
        self.writes += 1

    def __contains__(self, key: StateKey) -> bool:
        return key.digest in self.records


class ValueStore:
    """Content-addressed records in a local directory.

    Records are published with an atomic rename, so a reader sees either no
    record or a complete one.  Corrupt records raise ``StorageCorrupt``.
    """

    def __init__(self, root: str, schema_version: str = "0"):
        self.root = os.fspath(root)
        self.schema_version = schema_version
        self.hits = self.misses = self.writes = 0

    def _path(self, digest: str) -> str:
        return os.path.join(self.root, "objects", digest[:2], digest + ".rec")

    def __contains__(self, key: StateKey) -> bool:
        return os.path.exists(self._path(key.digest))

    def get(self, key: StateKey):
        path = self._path(key.digest)
        try:
            with open(path, "rb") as f:
                data = f.read()
        except FileNotFoundError:
            self.misses += 1
            return None
        except OSError as e:
            raise StoreIOError(f"cannot read {path}: {e}") from e
        value = self._decode_record(data, key.digest, path)
        self.hits += 1
        return value

    @staticmethod
    def _decode_record(data: bytes, digest: str, path: str):
        if len(data) < _HEADER.size:
            raise StorageCorrupt(f"{path}: truncated header")
        magic, version, raw_digest, length, crc = _HEADER.unpack_from(data)
        if magic != _MAGIC:
            raise StorageCorrupt(f"{path}: bad magic")
        if version != FORMAT_VERSION:
            raise FormatVersionMismatch(f"{path}: record format {version}, expected {FORMAT_VERSION}")
        if raw_digest.hex() != digest:
            raise StorageCorrupt(f"{path}: record holds a different key")
        payload = data[_HEADER.size:]
        if len(payload) != length:
            raise StorageCorrupt(f"{path}: payload is {len(payload)} bytes, header says {length}")
        if zlib.crc32(payload) != crc:
            raise StorageCorrupt(f"{path}: checksum mismatch")
        try:
            return decode_value(payload)
        except DecodeError as e:
            raise StorageCorrupt(f"{path}: {e}") from None

    def put(self, key: StateKey, value) -> None:
        payload = encode_value(value)
        record = _HEADER.pack(_MAGIC, FORMAT_VERSION, bytes.fromhex(key.digest), len(payload),
                              zlib.crc32(payload)) + payload
        path = self._path(key.digest)
        folder = os.path.dirname(path)
        try:
            os.makedirs(folder, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=".rec")
            try:
                with os.fdopen(fd, "wb") as f:
                    f.write(record)
                    f.flush()
                    os.fsync(f.fileno())
                os.replace(tmp, path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
        except OSError as e:
            raise StoreIOError(f"cannot write {path}: {e}") from e
        self.writes += 1

    def __len__(self) -> int:
        objects = os.path.join(self.root, "objects")
        return sum(
            1 for _, _, files in os.walk(objects) for f in files
            if f.endswith(".rec") and not f.startswith(".tmp-")
        )


def open_store(path, schema_version: str = "0") -> ValueStore:
    """Open (creating if needed) the store at ``path``."""
    root = os.fspath(path)
    fmt = os.path.join(root, "format")
    try:
        os.makedirs(os.path.join(root, "objects"), exist_ok=True)
        if os.path.exists(fmt):
            with open(fmt, encoding="utf-8") as f:
                header = f.read()
            version = None
            for line in header.splitlines():
                if line.startswith("format "):
                    version = line.split()[1]
            if not header.startswith("dop-store") or version is None:
                raise FormatVersionMismatch(f"{fmt}: not a store format header")
            if version != str(FORMAT_VERSION):
                raise FormatVersionMismatch(
                    f"store at {root} has format {version}; this version reads {FORMAT_VERSION}")
        else:
            with open(fmt, "w", encoding="utf-8") as f:
                f.write(FORMAT_HEADER)
    except OSError as e:
        raise StoreIOError(f"cannot open store at {root}: {e}") from e
    return ValueStore(root, schema_version)

"""Canonical byte encodings for payloads, internal states and traces.

Everything that gets hashed or written to disk goes through here, so two
structurally equal values always produce the same bytes.
"""

from __future__ import annotations

import hashlib
import json
from functools import lru_cache
from typing import Any


def _dumps(obj: Any) -> str:
    return json.dumps(obj, separators=(",", ":"), sort_keys=True, ensure_ascii=False)


def to_jsonable(obj: Any) -> Any:
    """Map a value built from scalars, bytes, sequences, sets and dicts to plain JSON.

    Sets and dicts are sorted by the encoding of their members so the result
    does not depend on hash-iteration order.
    """
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, bytes):
        return {"$bytes": obj.hex()}
    if isinstance(obj, (tuple, list)):
        return [to_jsonable(x) for x in obj]
    if isinstance(obj, (set, frozenset)):
        return {"$set": sorted((to_jsonable(x) for x in obj), key=_dumps)}
    if isinstance(obj, dict):
        items = [[to_jsonable(k), to_jsonable(v)] for k, v in obj.items()]
        return {"$map": sorted(items, key=lambda kv: _dumps(kv[0]))}
    # floats are rejected: their text form is not stable enough to hash
    raise TypeError(f"cannot canonically encode {type(obj).__name__}")


def canonical_bytes(obj: Any) -> bytes:
    return _dumps(to_jsonable(obj)).encode("utf-8")


def digest(obj: Any) -> str:
    """Hex SHA-256 of the canonical encoding."""
    return hashlib.sha256(canonical_bytes(obj)).hexdigest()


def freeze(obj: Any) -> Any:
    """Turn decoded JSON lists into tuples, recursively."""
    if isinstance(obj, list):
        return tuple(freeze(x) for x in obj)
    return obj


def encode_payload(obj: Any) -> bytes:
    """Encode a payload made of ints, strings, None and nested lists/tuples."""
    return _dumps(obj).encode("utf-8")


@lru_cache(maxsize=16384)
def decode_payload(data: bytes) -> Any:
    """Inverse of encode_payload; lists come back as tuples.

    Cached because a broadcast hands the same bytes object to every receiver.
    """
    return freeze(json.loads(data.decode("utf-8")))


def value_key(v: Any) -> Any:
    """Total order over proposal/decision values: ints before strings, tuples elementwise."""
    if isinstance(v, tuple):
        return (2, tuple(value_key(x) for x in v))
    if isinstance(v, bool):
        return (0, int(v))
    if isinstance(v, int):
        return (0, v)
    if isinstance(v, str):
        return (1, v)
    if v is None:
        return (-1, 0)
    raise TypeError(f"unordered value type {type(v).__name__}")

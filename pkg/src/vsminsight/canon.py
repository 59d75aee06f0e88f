"""Canonical JSON serialization and the 64-bit FNV-1a hash built on it."""

import json

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def canonical_json_bytes(obj) -> bytes:
    """Serialize to sorted-key, compact, UTF-8 JSON. Stable across runs."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def fnv1a64_hex(data: bytes) -> str:
    """Lowercase 16-digit hex of the 64-bit FNV-1a hash."""
    return format(fnv1a64(data), "016x")

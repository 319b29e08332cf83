"""FNV-1a 64-bit hashing en canonieke JSON.

Integriteitscontrole, geen cryptografische beveiliging.
"""
import json

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

CHUNK_SIZE = 1 << 16


def fnv1a64(data, h=FNV_OFFSET):
    """FNV-1a over bytes; h maakt incrementeel hashen mogelijk."""
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def fnv1a_file(path):
    """Hash een bestand in blokken (geheugen begrensd door CHUNK_SIZE)."""
    h = FNV_OFFSET
    with open(path, "rb") as f:
        while True:
            chunk = f.read(CHUNK_SIZE)
            if not chunk:
                break
            h = fnv1a64(chunk, h)
    return h


def hex64(value):
    return f"{value:016x}"


def canonical_json(obj):
    """Deterministische JSON: gesorteerde keys, compacte separators."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def hash_json(obj):
    return hex64(fnv1a64(canonical_json(obj).encode("utf-8")))

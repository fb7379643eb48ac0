"""Deterministic seed derivation.

A child seed is the first 8 bytes (big-endian) of
``sha256(f"{master}:{part1}:{part2}:...")``. Pass seeds use
``derive_seed(master, stage, pass_index)`` and bootstrap replicates use
``derive_seed(master, "boot", replicate_index)``, so any implementation can
replay a run from its master seed.
"""
import hashlib


def derive_seed(master, *parts) -> int:
    key = ":".join(str(x) for x in (master, *parts))
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big")

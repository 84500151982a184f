"""Deterministic seed fan-out.

A master seed plus a stage label yields a platform-stable child seed, so any
stage (sampling, recovery, batching, Davidson starts) can be rerun in
isolation and still reproduce the full pipeline bit for bit.
"""

from __future__ import annotations

import hashlib


def derive_seed(master: int, label: str) -> int:
    digest = hashlib.sha256(f"{master}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")

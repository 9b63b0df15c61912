"""Deterministic fan-out from one master seed to per-stage child seeds.

child_seed(master, tag) is the top 63 bits of blake2b("{master}:{tag}"),
so any stage can be re-run in isolation and still see the stream it saw
inside a full pipeline run.
"""

from __future__ import annotations

import hashlib


def child_seed(master: int, tag: str) -> int:
    digest = hashlib.blake2b(f"{int(master)}:{tag}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1

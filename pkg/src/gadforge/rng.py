"""Counter-based random streams.

Every stochastic step draws from a Philox generator whose 128-bit key is derived
from ``(seed, tag, index)``. Streams never depend on call order or on how work is
split across workers, so any block of a computation can be regenerated alone.
"""

from __future__ import annotations

import hashlib

import numpy as np

DEFAULT_SEED = 20


def stream_key(seed: int, tag: str, index: int = 0) -> int:
    payload = f"{int(seed)}\x1f{tag}\x1f{int(index)}".encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=16).digest(), "little")


def stream(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Return an independent generator for ``(seed, tag, index)``."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, tag, index)))

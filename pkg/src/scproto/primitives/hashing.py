"""Keyed collision-resistant hashing used by the Merkle forest."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from scproto.primitives.schemes import Seed, seed_bytes


@dataclass(frozen=True)
class HashKey:
    key: bytes
    index: int

    def encode(self) -> bytes:
        return self.index.to_bytes(4, "big") + self.key

    @classmethod
    def decode(cls, raw: bytes) -> "HashKey":
        if len(raw) < 5:
            raise ValueError("hash key encoding too short")
        return cls(raw[4:], int.from_bytes(raw[:4], "big"))


def hgen(lam: int, index: int, seed: Seed = None) -> HashKey:
    """Sample the level-``index`` hash key for security parameter ``lam``."""
    raw = seed_bytes(seed, f"hgen/{index}")
    return HashKey(raw[: max(16, lam // 8)], index)


def crhf_hash(hk: HashKey, m: bytes, lam: int = 128) -> bytes:
    """Keyed BLAKE2b digest of ``m`` with ``lam``-bit output."""
    h = hashlib.blake2b(
        m,
        digest_size=lam // 8,
        key=hk.key[:64],
        person=hk.index.to_bytes(16, "big"),
    )
    return h.digest()

"""Thin wrappers over ``cryptography`` for SE, signing and PKE.

SE is AES-256-GCM and signatures are Ed25519. PKE is an X25519 +
ChaCha20-Poly1305 hybrid.
The PKE takes its randomness explicitly so that an encryption is a pure
function of ``(pk, m, r)``; RBE programs rely on that.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from typing import Literal, Optional, Union

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM, ChaCha20Poly1305

Scheme = Literal["SE", "SIG", "PKE"]
Seed = Union[bytes, int, str, None]

SECURITY_BITS = 128
KEY_BYTES = 32
SIG_BYTES = 64
PKE_PK_BYTES = 32
PKE_OVERHEAD = 32 + 16  # ephemeral point + AEAD tag
_NONCE_BYTES = 12
_RAW = serialization.Encoding.Raw
_RAW_PUB = serialization.PublicFormat.Raw


class DecryptionError(Exception):
    """Symmetric ciphertext failed authentication or is malformed."""


@dataclass(frozen=True)
class KeyMaterial:
    scheme: Scheme
    secret: bytes
    public: Optional[bytes] = None


def seed_bytes(seed: Seed, label: str) -> bytes:
    """Expand an arbitrary seed into 32 bytes bound to ``label``."""
    if seed is None:
        return os.urandom(KEY_BYTES)
    if isinstance(seed, int):
        seed = seed.to_bytes((seed.bit_length() + 8) // 8, "big", signed=True)
    elif isinstance(seed, str):
        seed = seed.encode()
    return hashlib.sha256(label.encode() + b"\x00" + seed).digest()


def sample_keys(scheme: Scheme, seed: Seed = None) -> KeyMaterial:
    """Sample fresh keys for ``scheme``; identical seeds give identical keys."""
    raw = seed_bytes(seed, f"keys/{scheme}")
    if scheme == "SE":
        return KeyMaterial("SE", raw)
    if scheme == "SIG":
        sk = Ed25519PrivateKey.from_private_bytes(raw)
        return KeyMaterial("SIG", raw, sk.public_key().public_bytes(_RAW, _RAW_PUB))
    if scheme == "PKE":
        sk = X25519PrivateKey.from_private_bytes(raw)
        return KeyMaterial("PKE", raw, sk.public_key().public_bytes(_RAW, _RAW_PUB))
    raise ValueError(f"unknown scheme {scheme!r}")


# -- symmetric encryption --------------------------------------------------


def se_enc(key: bytes, m: bytes, nonce: Optional[bytes] = None) -> bytes:
    if nonce is None:
        nonce = os.urandom(_NONCE_BYTES)
    return nonce + AESGCM(key).encrypt(nonce, m, None)


def se_dec(key: bytes, ct: bytes) -> bytes:
    if len(ct) < _NONCE_BYTES + 16:
        raise DecryptionError("ciphertext too short")
    try:
        return AESGCM(key).decrypt(ct[:_NONCE_BYTES], ct[_NONCE_BYTES:], None)
    except InvalidTag as exc:
        raise DecryptionError("authentication failed") from exc


# -- signatures ------------------------------------------------------------


def sign(sk: bytes, m: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(sk).sign(m)


def verify(vk: bytes, sigma: bytes, m: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(vk).verify(sigma, m)
    except (InvalidSignature, ValueError):
        return False
    return True


# -- public-key encryption ---------------------------------------------------


def _pke_key(shared: bytes, eph: bytes, pk: bytes) -> bytes:
    return hashlib.sha256(b"pke/kdf" + shared + eph + pk).digest()


def pke_enc(pk: bytes, m: bytes, r: bytes) -> bytes:
    """Encrypt ``m`` to ``pk`` using the 32-byte randomness ``r``."""
    if len(r) != KEY_BYTES:
        raise ValueError("PKE randomness must be 32 bytes")
    eph_sk = X25519PrivateKey.from_private_bytes(r)
    eph = eph_sk.public_key().public_bytes(_RAW, _RAW_PUB)
    shared = eph_sk.exchange(X25519PublicKey.from_public_bytes(pk))
    key = _pke_key(shared, eph, pk)
    # the key is fresh per (r, pk), so a fixed nonce is safe
    return eph + ChaCha20Poly1305(key).encrypt(bytes(_NONCE_BYTES), m, None)


def pke_dec(sk: bytes, ct: bytes) -> Optional[bytes]:
    """Return the plaintext, or ``None`` when ``ct`` does not open under ``sk``."""
    if not isinstance(ct, (bytes, bytearray)) or len(ct) < PKE_OVERHEAD:
        return None
    try:
        own = X25519PrivateKey.from_private_bytes(sk)
        pk = own.public_key().public_bytes(_RAW, _RAW_PUB)
        eph = bytes(ct[:32])
        shared = own.exchange(X25519PublicKey.from_public_bytes(eph))
        key = _pke_key(shared, eph, pk)
        return ChaCha20Poly1305(key).decrypt(bytes(_NONCE_BYTES), bytes(ct[32:]), None)
    except (InvalidTag, ValueError):
        return None

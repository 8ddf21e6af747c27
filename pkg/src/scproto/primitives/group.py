"""Symmetric bilinear groups behind one interface.

Two implementations:

``MockGroup``
    G1 is Z_q under addition with generator 1, the target group is stored
    by its discrete log, and ``pair(a, b) = a*b``. Bilinearity is exact and
    security is nil; it exists for fast algebraic property checks.

``CurveGroup``
    A real Type-1 pairing on y^2 = x^3 + x over a 60-bit prime field with a
    56-bit prime-order subgroup. Toy-sized, but every identity is checked by
    actual curve arithmetic. The field kernel is compiled when available.

Serialization is fixed width and big-endian: mock scalars take 32 bytes;
curve points take a flag byte plus 8-byte x and y; curve target elements
take 8 bytes per F_p2 coordinate.
"""

from __future__ import annotations

import hashlib
import os
import random
import secrets
from abc import ABC, abstractmethod
from typing import Any, Optional

from scproto.encoding import encode

if os.environ.get("SCPROTO_PURE_PYTHON"):
    from scproto.primitives import _pairing_py as kernel
else:
    try:
        from scproto.primitives import _pairing_core as kernel
    except ImportError:  # pragma: no cover - depends on the build
        from scproto.primitives import _pairing_py as kernel


class G1Element:
    __slots__ = ("group", "value")

    def __init__(self, group: "BilinearGroup", value: Any):
        self.group = group
        self.value = value

    def __add__(self, other: "G1Element") -> "G1Element":
        return G1Element(self.group, self.group._add(self.value, other.value))

    def __neg__(self) -> "G1Element":
        return G1Element(self.group, self.group._neg(self.value))

    def __sub__(self, other: "G1Element") -> "G1Element":
        return self + (-other)

    def __rmul__(self, k: int) -> "G1Element":
        if not isinstance(k, int):
            return NotImplemented
        return G1Element(self.group, self.group._mul(k % self.group.order, self.value))

    __mul__ = __rmul__

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, G1Element)
            and other.group.name == self.group.name
            and other.value == self.value
        )

    def __hash__(self) -> int:
        return hash((self.group.name, self.value))

    def __repr__(self) -> str:
        return f"G1({self.group.name}:{self.encode().hex()[:16]}...)"

    def is_zero(self) -> bool:
        return self == self.group.g1_zero

    def encode(self) -> bytes:
        return self.group._encode_g1(self.value)


class GTElement:
    __slots__ = ("group", "value")

    def __init__(self, group: "BilinearGroup", value: Any):
        self.group = group
        self.value = value

    def __mul__(self, other: "GTElement") -> "GTElement":
        return GTElement(self.group, self.group._gt_mul(self.value, other.value))

    def __truediv__(self, other: "GTElement") -> "GTElement":
        inv = self.group._gt_inv(other.value)
        return GTElement(self.group, self.group._gt_mul(self.value, inv))

    def __pow__(self, e: int) -> "GTElement":
        return GTElement(self.group, self.group._gt_pow(self.value, e % self.group.order))

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, GTElement)
            and other.group.name == self.group.name
            and other.value == self.value
        )

    def __hash__(self) -> int:
        return hash((self.group.name, "gt", self.value))

    def __repr__(self) -> str:
        return f"GT({self.group.name}:{self.encode().hex()[:16]}...)"

    def encode(self) -> bytes:
        return self.group._encode_gt(self.value)


class BilinearGroup(ABC):
    name: str
    order: int

    @property
    @abstractmethod
    def generator(self) -> G1Element: ...

    @property
    def g1_zero(self) -> G1Element:
        return G1Element(self, self._g1_zero)

    @property
    def gt_one(self) -> GTElement:
        return GTElement(self, self._gt_one)

    def pair(self, a: G1Element, b: G1Element) -> GTElement:
        return GTElement(self, self._pair(a.value, b.value))

    def hash_to_g1(self, tag: str, m: bytes) -> G1Element:
        """Hash ``m`` into G1; distinct tags (e.g. "H1", "H5") are independent."""
        return G1Element(self, self._hash_to_g1(tag.encode(), m))

    def hash_gt(self, g: GTElement, nbits: int) -> bytes:
        """Hash a target-group element to exactly ``nbits`` bits (big-endian)."""
        nbytes = (nbits + 7) // 8
        out = bytearray(hashlib.shake_256(b"H2" + g.encode()).digest(nbytes))
        spare = nbytes * 8 - nbits
        if spare:
            out[0] &= 0xFF >> spare
        return bytes(out)

    def random_scalar(self, rng: Optional[random.Random] = None) -> int:
        if rng is None:
            return secrets.randbelow(self.order - 1) + 1
        return rng.randrange(1, self.order)

    def decode_g1(self, raw: bytes) -> G1Element:
        return G1Element(self, self._decode_g1(raw))

    def decode_gt(self, raw: bytes) -> GTElement:
        return GTElement(self, self._decode_gt(raw))

    # backend hooks
    _g1_zero: Any
    _gt_one: Any

    @abstractmethod
    def _add(self, a, b): ...

    @abstractmethod
    def _neg(self, a): ...

    @abstractmethod
    def _mul(self, k, a): ...

    @abstractmethod
    def _gt_mul(self, a, b): ...

    @abstractmethod
    def _gt_inv(self, a): ...

    @abstractmethod
    def _gt_pow(self, a, e): ...

    @abstractmethod
    def _pair(self, a, b): ...

    @abstractmethod
    def _hash_to_g1(self, tag: bytes, m: bytes): ...

    @abstractmethod
    def _encode_g1(self, a) -> bytes: ...

    @abstractmethod
    def _decode_g1(self, raw: bytes): ...

    @abstractmethod
    def _encode_gt(self, a) -> bytes: ...

    @abstractmethod
    def _decode_gt(self, raw: bytes): ...


# secp256k1 group order; any large prime works for the mock
MOCK_ORDER = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141


class MockGroup(BilinearGroup):
    name = "mock"
    order = MOCK_ORDER
    _g1_zero = 0
    _gt_one = 0

    @property
    def generator(self) -> G1Element:
        return G1Element(self, 1)

    def _add(self, a, b):
        return (a + b) % self.order

    def _neg(self, a):
        return (-a) % self.order

    def _mul(self, k, a):
        return k * a % self.order

    def _gt_mul(self, a, b):
        return (a + b) % self.order

    def _gt_inv(self, a):
        return (-a) % self.order

    def _gt_pow(self, a, e):
        return a * e % self.order

    def _pair(self, a, b):
        return a * b % self.order

    def _hash_to_g1(self, tag, m):
        h = hashlib.sha512(encode([tag, m])).digest()
        return int.from_bytes(h, "big") % self.order

    def _encode_g1(self, a):
        return a.to_bytes(32, "big")

    def _decode_g1(self, raw):
        if len(raw) != 32:
            raise ValueError("mock G1 elements are 32 bytes")
        v = int.from_bytes(raw, "big")
        if v >= self.order:
            raise ValueError("scalar out of range")
        return v

    _encode_gt = _encode_g1
    _decode_gt = _decode_g1


class CurveGroup(BilinearGroup):
    name = "curve"
    order = kernel.Q_ORDER
    _g1_zero = None
    _gt_one = (1, 0)

    def __init__(self) -> None:
        self.kernel = kernel
        self._gen = self._hash_to_g1(b"generator", b"")

    @property
    def generator(self) -> G1Element:
        return G1Element(self, self._gen)

    def _add(self, a, b):
        return kernel.g1_add(a, b)

    def _neg(self, a):
        return kernel.g1_neg(a)

    def _mul(self, k, a):
        return kernel.g1_mul(k, a)

    def _gt_mul(self, a, b):
        return kernel.gt_mul(a, b)

    def _gt_inv(self, a):
        return kernel.gt_inv(a)

    def _gt_pow(self, a, e):
        return kernel.gt_pow(a, e)

    def _pair(self, a, b):
        return kernel.pair(a, b)

    def _hash_to_g1(self, tag, m):
        ctr = 0
        while True:
            h = hashlib.sha512(encode([tag, m, ctr])).digest()
            pt = kernel.lift_x(int.from_bytes(h, "big"))
            if pt is not None:
                pt = kernel.g1_mul(kernel.COFACTOR, pt)
                if pt is not None:
                    return pt
            ctr += 1

    def _encode_g1(self, a):
        if a is None:
            return bytes(17)
        return b"\x01" + a[0].to_bytes(8, "big") + a[1].to_bytes(8, "big")

    def _decode_g1(self, raw):
        if len(raw) != 17 or raw[0] not in (0, 1):
            raise ValueError("curve G1 elements are 17 bytes")
        if raw[0] == 0:
            return None
        pt = (int.from_bytes(raw[1:9], "big"), int.from_bytes(raw[9:], "big"))
        if not kernel.on_curve(pt) or max(pt) >= kernel.P_MOD:
            raise ValueError("point not on curve")
        return pt

    def _encode_gt(self, a):
        return a[0].to_bytes(8, "big") + a[1].to_bytes(8, "big")

    def _decode_gt(self, raw):
        if len(raw) != 16:
            raise ValueError("curve GT elements are 16 bytes")
        return (int.from_bytes(raw[:8], "big"), int.from_bytes(raw[8:], "big"))


_GROUPS = {"mock": MockGroup, "curve": CurveGroup}
_CACHE: dict[str, BilinearGroup] = {}


def get_group(name: str = "mock") -> BilinearGroup:
    if name not in _GROUPS:
        raise ValueError(f"unknown group {name!r}; choose from {sorted(_GROUPS)}")
    if name not in _CACHE:
        _CACHE[name] = _GROUPS[name]()
    return _CACHE[name]

"""Certificate-based encryption with on-chain transparent revocation.

Users ask a revocation contract to revoke their own certificates. The
contract keeps the certificate table; the CA reads the confirmed table at the
start of each period and issues reconfirmation certificates only to leaves
still covered by the complete-subtree cover of the non-revoked users.

Algebra, for a user with serial number b_1..b_m covered by the node
b_1..b_k::

    T_i    = H5(Q, i)
    P_k    = H1(b_1..b_k)
    Cert_i = s_C*T_i + x*P_k
    g      = e(Q, T_i) * e(p_B, H1(info))
    ct     = [rP, rP_1, ..., rP_m, M xor H2(g^r)]

and the receiver recovers g^r as e(rP, Cert_i + s_B*H1(info)) / e(xP, rP_k).
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

from scproto import encoding
from scproto.contract import (
    Bytecode,
    Call,
    Chain,
    ContractState,
    Opcode,
    Receipt,
    call_tx,
    deploy_tx,
)
from scproto.encoding import DecodeError, encode
from scproto.ledger import LedgerConfig, StateSnapshot, Transaction
from scproto.primitives.group import BilinearGroup, G1Element, get_group
from scproto.primitives.schemes import KeyMaterial, sample_keys

CODE_NAME = "cbe-revocation"
VALID = "valid"
REVOKED = "revoked"
TAG_BYTES = 16  # integrity tag appended to every plaintext block
EPOCH = _dt.date(1970, 1, 1)


class TreeFull(Exception):
    pass


# -- dates -------------------------------------------------------------------


def to_day(value: Union[_dt.date, str, int]) -> int:
    """Days since 1970-01-01. Strings are ISO dates."""
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        value = _dt.date.fromisoformat(value)
    return (value - EPOCH).days


def render_day(day: int) -> str:
    return (EPOCH + _dt.timedelta(days=day)).strftime("%b, %Y")


def month_end(year: int, month: int) -> int:
    nxt = _dt.date(year + month // 12, month % 12 + 1, 1)
    return to_day(nxt - _dt.timedelta(days=1))


# -- keys and parameters ---------------------------------------------------------


@dataclass(frozen=True)
class CbeParams:
    """Public system parameters, with xP published alongside."""

    group: BilinearGroup = field(repr=False)
    Q: G1Element
    xP: G1Element
    n_periods: int = 0

    @property
    def P(self) -> G1Element:
        return self.group.generator

    def H1(self, m: bytes) -> G1Element:
        return self.group.hash_to_g1("H1", m)

    def T(self, period: int) -> G1Element:
        return self.group.hash_to_g1("H5", encode([self.Q.encode(), period]))

    def encode(self) -> bytes:
        return encode([self.group.name, self.Q.encode(), self.xP.encode(), self.n_periods])

    @classmethod
    def decode(cls, raw: bytes) -> "CbeParams":
        name, q, xp, n = encoding.decode(raw, 4)
        group = get_group(name.decode())
        return cls(group, group.decode_g1(q), group.decode_g1(xp), encoding.decode_int(n))


@dataclass(frozen=True)
class CaKeys:
    msk: int
    Q: G1Element
    x: int
    xP: G1Element


def cbe_setup(
    group: Union[str, BilinearGroup] = "mock",
    n_periods: int = 0,
    rng: Optional[random.Random] = None,
) -> tuple[CaKeys, CbeParams]:
    if isinstance(group, str):
        group = get_group(group)
    s_c = group.random_scalar(rng)
    x = group.random_scalar(rng)
    P = group.generator
    ca = CaKeys(s_c, s_c * P, x, x * P)
    return ca, CbeParams(group, ca.Q, ca.xP, n_periods)


class SerialAllocator:
    """Hands out the leaves of an m-level tree left to right."""

    def __init__(self, m: int):
        if m < 1:
            raise ValueError("tree depth must be >= 1")
        self.m = m
        self.next = 0

    @property
    def capacity(self) -> int:
        return 1 << self.m

    def allocate(self) -> str:
        if self.next >= self.capacity:
            raise TreeFull(f"all {self.capacity} leaves are taken")
        sn = format(self.next, f"0{self.m}b")
        self.next += 1
        return sn


@dataclass(frozen=True)
class UserKeys:
    s_B: int
    p_B: G1Element
    info: bytes
    sn: str


def cbe_keygen(
    pms: CbeParams,
    info: bytes,
    allocator: SerialAllocator,
    rng: Optional[random.Random] = None,
) -> UserKeys:
    s_b = pms.group.random_scalar(rng)
    return UserKeys(s_b, s_b * pms.P, info, allocator.allocate())


# -- subset cover ------------------------------------------------------------------


def subset_cover(m: int, revoked: Iterable[str]) -> set[str]:
    """Complete-subtree cover of the leaves not in ``revoked``.

    Nodes are bit-string prefixes; the empty string is the root.
    """
    revoked = set(revoked)
    for sn in revoked:
        if len(sn) != m or set(sn) - {"0", "1"}:
            raise ValueError(f"bad serial number {sn!r} for depth {m}")
    if not revoked:
        return {""}
    cover: set[str] = set()

    def walk(prefix: str) -> None:
        if not any(sn.startswith(prefix) for sn in revoked):
            cover.add(prefix)
        elif len(prefix) < m:
            walk(prefix + "0")
            walk(prefix + "1")

    walk("")
    return cover


def cover_node(cover: Iterable[str], sn: str) -> Optional[str]:
    for node in cover:
        if sn.startswith(node):
            return node
    return None


# -- the revocation contract ----------------------------------------------------------


@dataclass(frozen=True)
class RevocationRow:
    number: int
    user: str
    state: str
    expiry: int
    owner: bytes = field(default=b"", repr=False)
    sn: str = ""

    def encode(self) -> bytes:
        return encode([self.number, self.user, self.state, self.expiry, self.owner, self.sn])

    @classmethod
    def decode(cls, raw: bytes) -> "RevocationRow":
        n, user, state, expiry, owner, sn = encoding.decode(raw, 6)
        return cls(
            encoding.decode_int(n),
            user.decode(),
            state.decode(),
            encoding.decode_int(expiry),
            owner,
            sn.decode(),
        )

    def line(self) -> str:
        return f"{self.number}\t{self.user}\t{self.state}\t{render_day(self.expiry)}"


def _row_key(number: int) -> bytes:
    return b"row:" + number.to_bytes(4, "big")


def _user_key(user: str) -> bytes:
    return b"user:" + user.encode()


@dataclass(frozen=True)
class RevocationTable:
    rows: tuple[RevocationRow, ...] = ()

    @classmethod
    def from_state(cls, state: Optional[ContractState]) -> "RevocationTable":
        if state is None:
            return cls()
        rows = [
            RevocationRow.decode(v) for k, v in sorted(state.data.items()) if k.startswith(b"row:")
        ]
        return cls(tuple(sorted(rows, key=lambda r: r.number)))

    def row(self, user: str) -> Optional[RevocationRow]:
        for r in self.rows:
            if r.user == user:
                return r
        return None

    def revoked_serials(self) -> set[str]:
        return {r.sn for r in self.rows if r.state == REVOKED}

    def lines(self) -> list[str]:
        return [r.line() for r in self.rows]

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class RevocationRequest:
    """The ``aux`` of a revocation transaction, e.g. ``[bob:revoked]``."""

    user: str
    expiry: int
    day: int
    state: str = REVOKED

    def encode(self) -> bytes:
        return encode([self.user, self.state, self.expiry, self.day])

    @classmethod
    def decode(cls, raw: bytes) -> "RevocationRequest":
        user, state, expiry, day = encoding.decode(raw, 4)
        return cls(user.decode(), encoding.decode_int(expiry), encoding.decode_int(day), state.decode())

    def __str__(self) -> str:
        return f"[{self.user}:{self.state}]"


@dataclass(frozen=True)
class Enrollment:
    number: int
    user: str
    expiry: int
    owner: bytes
    sn: str

    def encode(self) -> bytes:
        return encode([self.number, self.user, self.expiry, self.owner, self.sn])

    @classmethod
    def decode(cls, raw: bytes) -> "Enrollment":
        n, user, expiry, owner, sn = encoding.decode(raw, 5)
        return cls(
            encoding.decode_int(n), user.decode(), encoding.decode_int(expiry), owner, sn.decode()
        )


def _parse(kind, raw: bytes):
    try:
        return kind.decode(raw)
    except (DecodeError, UnicodeDecodeError):
        return None


def _enroll_guard(state: ContractState, tx: Transaction, call: Call) -> bool:
    e = _parse(Enrollment, call.aux)
    return (
        e is not None
        and tx.signer == state.owner
        and _user_key(e.user) not in state
        and _row_key(e.number) not in state
    )


def _enroll(state: ContractState, tx: Transaction, call: Call):
    e = Enrollment.decode(call.aux)
    data = dict(state.data)
    data[_row_key(e.number)] = RevocationRow(e.number, e.user, VALID, e.expiry, e.owner, e.sn).encode()
    data[_user_key(e.user)] = e.number.to_bytes(4, "big")
    return data, {"enroll": 1}


def _revoke_guard(state: ContractState, tx: Transaction, call: Call) -> bool:
    # identity authenticity, then the certificate expiry window
    req = _parse(RevocationRequest, call.aux)
    if req is None or req.state != REVOKED:
        return False
    number = state.get(_user_key(req.user))
    if number is None:
        return False
    row = RevocationRow.decode(state.get(_row_key(int.from_bytes(number, "big"))))
    return (
        row.state == VALID
        and tx.signer == row.owner
        and req.expiry == row.expiry
        and req.day <= row.expiry
    )


def _revoke(state: ContractState, tx: Transaction, call: Call):
    req = RevocationRequest.decode(call.aux)
    number = int.from_bytes(state.get(_user_key(req.user)), "big")
    row = RevocationRow.decode(state.get(_row_key(number)))
    data = dict(state.data)
    data[_row_key(number)] = RevocationRow(
        row.number, row.user, REVOKED, row.expiry, row.owner, row.sn
    ).encode()
    return data, {"revoke": 1}


REVOCATION_CODE = Bytecode(
    CODE_NAME,
    {
        "enroll": Opcode(_enroll, _enroll_guard),
        "revoke": Opcode(_revoke, _revoke_guard),
    },
)


def revocation_request(
    key: KeyMaterial,
    instance: bytes,
    user: str,
    expiry: int,
    day: int,
    nonce: int,
) -> Transaction:
    aux = RevocationRequest(user, expiry, day).encode()
    return call_tx(key, instance, "revoke", aux, nonce)


def enroll_request(key: KeyMaterial, instance: bytes, row: Enrollment, nonce: int) -> Transaction:
    return call_tx(key, instance, "enroll", row.encode(), nonce)


def revocation_update(chain: Chain, instance: bytes, tx: Transaction) -> RevocationTable:
    return RevocationTable.from_state(chain.transfer(instance, tx))


# -- certificates and encryption --------------------------------------------------------


@dataclass(frozen=True)
class ReconfirmationCert:
    period: int
    cert: G1Element
    level: int
    node: str


def cbe_cert(
    ca: CaKeys,
    pms: CbeParams,
    period: int,
    user: str,
    table: RevocationTable,
    m: int,
) -> Optional[ReconfirmationCert]:
    """Issue ``Cert_i`` for ``user``, or ``None`` if revoked or unknown."""
    row = table.row(user)
    if row is None or row.state != VALID:
        return None
    node = cover_node(subset_cover(m, table.revoked_serials()), row.sn)
    if node is None:
        return None
    if node == "":
        # the ciphertext carries no rP_0, so certify the root's child instead
        node = row.sn[:1]
    P_k = pms.H1(node.encode())
    return ReconfirmationCert(period, ca.msk * pms.T(period) + ca.x * P_k, len(node), node)


@dataclass(frozen=True)
class CbeCiphertext:
    period: int
    rP: G1Element
    rPj: tuple[G1Element, ...]
    V: bytes
    nbits: int

    def encode(self) -> bytes:
        points = encoding.encode_list([p.encode() for p in self.rPj])
        return encode([self.period, self.rP.encode(), points, self.V, self.nbits])

    @classmethod
    def decode(cls, raw: bytes, group: BilinearGroup) -> "CbeCiphertext":
        period, rp, points, v, nbits = encoding.decode(raw, 5)
        return cls(
            encoding.decode_int(period),
            group.decode_g1(rp),
            tuple(group.decode_g1(p) for p in encoding.decode_list(points)),
            v,
            encoding.decode_int(nbits),
        )


def _tag(message: bytes) -> bytes:
    return hashlib.sha256(b"cbe/tag" + message).digest()[:TAG_BYTES]


def _xor(a: bytes, b: bytes) -> bytes:
    return bytes(x ^ y for x, y in zip(a, b))


def cbe_enc(
    pms: CbeParams,
    info: bytes,
    p_B: G1Element,
    sn: str,
    period: int,
    message: bytes,
    r: Optional[int] = None,
) -> CbeCiphertext:
    group = pms.group
    if r is None:
        r = group.random_scalar()
    block = message + _tag(message)
    nbits = 8 * len(block)
    g = group.pair(pms.Q, pms.T(period)) * group.pair(p_B, pms.H1(info))
    V = _xor(block, group.hash_gt(g**r, nbits))
    rPj = tuple(r * pms.H1(sn[:j].encode()) for j in range(1, len(sn) + 1))
    return CbeCiphertext(period, r * pms.P, rPj, V, nbits)


def cbe_dec(
    keys: UserKeys,
    cert: Optional[ReconfirmationCert],
    pms: CbeParams,
    ct: CbeCiphertext,
) -> Optional[bytes]:
    """Recover the message, or ``None`` for a missing, stale or wrong certificate."""
    if cert is None or cert.period != ct.period:
        return None
    if not 1 <= cert.level <= len(ct.rPj):
        return None
    group = pms.group
    num = group.pair(ct.rP, cert.cert + keys.s_B * pms.H1(keys.info))
    den = group.pair(pms.xP, ct.rPj[cert.level - 1])
    block = _xor(ct.V, group.hash_gt(num / den, ct.nbits))
    message, tag = block[:-TAG_BYTES], block[-TAG_BYTES:]
    if len(block) < TAG_BYTES or _tag(message) != tag:
        return None
    return message


# -- protocol driver ----------------------------------------------------------------------

# the running example: (user, expiry year, expiry month, revoked)
EXAMPLE_USERS = (
    ("Alice", 2022, 12, False),
    ("Bob", 2021, 12, True),
    ("Tom", 2022, 1, True),
    ("Kate", 2022, 6, False),
    ("David", 2022, 11, False),
)


@dataclass
class CbeUser:
    name: str
    keys: UserKeys
    signing: KeyMaterial
    expiry: int


class CbeProtocol:
    """CA, users and the revocation contract wired to one chain."""

    name = "cbe"

    def __init__(
        self,
        config: LedgerConfig,
        group: Union[str, BilinearGroup] = "mock",
        m: int = 3,
        seed: int = 0,
        users: Sequence[tuple[str, int]] = (),
        owners: Optional[Mapping[str, KeyMaterial]] = None,
    ):
        """Deploy the contract and enroll ``users`` as ``(name, expiry)`` in one batch.

        ``owners`` overrides the signing key that owns a certificate; by
        default every user gets its own seeded key.
        """
        self.rng = random.Random(seed)
        self.seed = seed
        self.m = m
        self.chain = Chain(config, [REVOCATION_CODE])
        self.ca, self.pms = cbe_setup(group, rng=self.rng)
        self.ca_signing = sample_keys("SIG", f"cbe/ca/{seed}")
        self.allocator = SerialAllocator(m)
        self.users: dict[str, CbeUser] = {}
        self._ca_nonce = 0
        self._nonces: dict[bytes, int] = {}
        self.deploy_tx = deploy_tx(self.ca_signing, CODE_NAME, self._next_ca_nonce())
        self.instance = self.deploy_tx.id
        batch = [self.deploy_tx]
        for name, expiry in users:
            batch.append(self._enroll(name, expiry, (owners or {}).get(name)))
        self.chain.execute_many(batch)
        self.chain.deploy(self.deploy_tx)

    def _next_ca_nonce(self) -> int:
        self._ca_nonce += 1
        return self._ca_nonce

    def _enroll(self, name: str, expiry: int, signing: Optional[KeyMaterial]) -> Transaction:
        keys = cbe_keygen(self.pms, name.encode(), self.allocator, self.rng)
        if signing is None:
            signing = sample_keys("SIG", f"cbe/user/{self.seed}/{name}")
        user = CbeUser(name, keys, signing, expiry)
        self.users[name] = user
        row = Enrollment(len(self.users), name, expiry, signing.public, keys.sn)
        return enroll_request(self.ca_signing, self.instance, row, self._next_ca_nonce())

    def register(self, name: str, expiry: int, signing: Optional[KeyMaterial] = None) -> CbeUser:
        self.chain.execute(self._enroll(name, expiry, signing))
        return self.users[name]

    def next_nonce(self, key: KeyMaterial) -> int:
        self._nonces[key.public] = self._nonces.get(key.public, 0) + 1
        return self._nonces[key.public]

    def request(self, name: str, day: Optional[int] = None) -> Transaction:
        user = self.users[name]
        day = user.expiry if day is None else day
        nonce = self.next_nonce(user.signing)
        return revocation_request(user.signing, self.instance, name, user.expiry, day, nonce)

    def submit(self, tx: Transaction) -> Optional[Receipt]:
        return self.chain.execute(tx)

    def table(self) -> RevocationTable:
        return RevocationTable.from_state(self.chain.access(self.instance))

    def certify(self, period: int, name: str) -> Optional[ReconfirmationCert]:
        return cbe_cert(self.ca, self.pms, period, name, self.table(), self.m)

    def encrypt(self, name: str, period: int, message: bytes) -> CbeCiphertext:
        u = self.users[name]
        r = self.pms.group.random_scalar(self.rng)
        return cbe_enc(self.pms, u.keys.info, u.keys.p_B, u.keys.sn, period, message, r)

    def decrypt(self, name: str, cert: Optional[ReconfirmationCert], ct: CbeCiphertext):
        return cbe_dec(self.users[name].keys, cert, self.pms, ct)


def example_protocol(config: LedgerConfig, group="mock", seed: int = 0, request_day=None):
    """The five-user running example with Bob and Tom revoked."""
    users = [(name, month_end(year, month)) for name, year, month, _ in EXAMPLE_USERS]
    proto = CbeProtocol(config, group=group, m=3, seed=seed, users=users)
    day = to_day("2021-06-01") if request_day is None else request_day
    proto.chain.execute_many(
        proto.request(name, day) for name, _, _, revoked in EXAMPLE_USERS if revoked
    )
    return proto


def read_table(snapshot: StateSnapshot) -> RevocationTable:
    """Revocation table out of a snapshot returned by ``read_state``."""
    return RevocationTable.from_state(snapshot.value)


__all__ = [
    "CaKeys",
    "CbeCiphertext",
    "CbeParams",
    "CbeProtocol",
    "Enrollment",
    "REVOCATION_CODE",
    "ReconfirmationCert",
    "RevocationRequest",
    "RevocationRow",
    "RevocationTable",
    "SerialAllocator",
    "TreeFull",
    "UserKeys",
    "cbe_cert",
    "cbe_dec",
    "cbe_enc",
    "cbe_keygen",
    "cbe_setup",
    "cover_node",
    "enroll_request",
    "example_protocol",
    "read_table",
    "render_day",
    "revocation_request",
    "revocation_update",
    "subset_cover",
    "to_day",
]

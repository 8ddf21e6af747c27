"""Registration-based encryption with the contract as a transparent key curator.

Registrations append a one-leaf tree to a forest of full Merkle trees and
merge equal-depth trees until all depths differ, so after ``n``
registrations the depths are the set bits of ``n``. A depth-``d`` tree holds
``2**(d-1)`` identities. Hashing is level keyed::

    leaf (level 1):  Hash(hk_1, lp(id) || lp(pk))
    level j >= 2:    Hash(hk_j, h_left || h_right)

An opening for ``id`` in a depth-``d`` tree is
``[(id, pk), (h_1^0, h_1^1, b_1), ..., (h_{d-1}^0, h_{d-1}^1, b_{d-1}), rt]``
where ``h_j^{b_j}`` is the path node at level ``j`` and the other entry its
sibling.

Encryption emits one program per root. Programs are transparent objects
that carry their hardwired values in the clear; they stand in for
obfuscated circuits and hide nothing.
"""

from __future__ import annotations

import enum
import os
import random
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

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
from scproto.primitives.hashing import HashKey, crhf_hash, hgen
from scproto.primitives.schemes import (
    PKE_PK_BYTES,
    KeyMaterial,
    pke_dec,
    pke_enc,
    sample_keys,
    seed_bytes,
)

CODE_NAME = "rbe-key-curator"
DEFAULT_LAMBDA = 128


class UnknownId(KeyError):
    pass


class Verdict(enum.Enum):
    """Non-message decryption outcomes."""

    BOTTOM = "bottom"  # syntax error or no program accepts
    GET_UPD = "get-upd"  # the opening is stale: read state and update

    def __repr__(self) -> str:
        return f"Verdict.{self.name}"


BOTTOM = Verdict.BOTTOM
GET_UPD = Verdict.GET_UPD


# -- parameters ----------------------------------------------------------------


@dataclass(frozen=True)
class PublicParams:
    hks: tuple[HashKey, ...]
    roots: tuple[tuple[bytes, int], ...] = ()

    @property
    def lam(self) -> int:
        return len(self.hks)

    def hk(self, level: int) -> HashKey:
        return self.hks[level - 1]

    def encode(self) -> bytes:
        hks = encoding.encode_list([hk.encode() for hk in self.hks])
        roots = encoding.encode_list([encode([rt, d]) for rt, d in self.roots])
        return encode([hks, roots])

    @classmethod
    def decode(cls, raw: bytes) -> "PublicParams":
        hks, roots = encoding.decode(raw, 2)
        pairs = []
        for item in encoding.decode_list(roots):
            rt, d = encoding.decode(item, 2)
            pairs.append((rt, encoding.decode_int(d)))
        return cls(tuple(HashKey.decode(h) for h in encoding.decode_list(hks)), tuple(pairs))


def rbe_setup(lam: int = DEFAULT_LAMBDA, seed=None) -> tuple[bytes, PublicParams, "MerkleForest"]:
    """Return ``(crs, pp_0, empty forest)``."""
    crs = seed_bytes(seed, "rbe/crs") if seed is not None else os.urandom(32)
    hks = tuple(hgen(lam, index, encode([crs, index])) for index in range(1, lam + 1))
    return crs, PublicParams(hks), MerkleForest()


def rbe_keygen(seed=None) -> tuple[bytes, bytes]:
    keys = sample_keys("PKE", seed)
    return keys.public, keys.secret


# -- the forest ------------------------------------------------------------------------


def _hash(hk: HashKey, m: bytes) -> bytes:
    return crhf_hash(hk, m, 8 * len(hk.key))


def leaf_hash(hks: Sequence[HashKey], ident: bytes, pk: bytes) -> bytes:
    return _hash(hks[0], encode([ident, pk]))


def node_hash(hks: Sequence[HashKey], level: int, left: bytes, right: bytes) -> bytes:
    return _hash(hks[level - 1], left + right)


@dataclass(frozen=True)
class MerkleTree:
    """Full binary tree; ``levels[j-1]`` lists the level-``j`` hashes."""

    leaves: tuple[tuple[bytes, bytes], ...]
    levels: tuple[tuple[bytes, ...], ...]
    first: int  # registration index of the leftmost leaf

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def root(self) -> bytes:
        return self.levels[-1][0]

    @classmethod
    def single(cls, hks, ident: bytes, pk: bytes, first: int) -> "MerkleTree":
        return cls(((ident, pk),), ((leaf_hash(hks, ident, pk),),), first)

    @classmethod
    def join(cls, hks, left: "MerkleTree", right: "MerkleTree") -> "MerkleTree":
        d = left.depth
        levels = tuple(a + b for a, b in zip(left.levels, right.levels))
        top = node_hash(hks, d + 1, left.root, right.root)
        return cls(left.leaves + right.leaves, levels + ((top,),), min(left.first, right.first))

    def encode(self) -> bytes:
        leaves = encoding.encode_list([encode(pair) for pair in self.leaves])
        levels = encoding.encode_list([b"".join(lv) for lv in self.levels])
        return encode([leaves, levels, self.first])

    @classmethod
    def decode(cls, raw: bytes) -> "MerkleTree":
        leaves, levels, first = encoding.decode(raw, 3)
        pairs = tuple(tuple(encoding.decode(p, 2)) for p in encoding.decode_list(leaves))
        rows = []
        for flat in encoding.decode_list(levels):
            width = len(flat) // max(1, len(pairs) >> len(rows))
            rows.append(tuple(flat[i : i + width] for i in range(0, len(flat), width)))
        return cls(pairs, tuple(rows), encoding.decode_int(first))


@dataclass(frozen=True)
class MerkleForest:
    trees: tuple[MerkleTree, ...] = ()
    order: tuple[bytes, ...] = ()

    @property
    def depths(self) -> tuple[int, ...]:
        return tuple(t.depth for t in self.trees)

    def __contains__(self, ident: bytes) -> bool:
        return ident in self.order

    def locate(self, ident: bytes) -> tuple[int, int]:
        """``(tree index, leaf position)`` of ``ident``."""
        for ti, tree in enumerate(self.trees):
            for pos, (leaf_id, _) in enumerate(tree.leaves):
                if leaf_id == ident:
                    return ti, pos
        raise UnknownId(ident)

    def public_params(self, pp: PublicParams) -> PublicParams:
        return PublicParams(pp.hks, tuple((t.root, t.depth) for t in self.trees))

    def encode(self) -> bytes:
        return encode(
            [
                encoding.encode_list([t.encode() for t in self.trees]),
                encoding.encode_list(list(self.order)),
            ]
        )

    @classmethod
    def decode(cls, raw: bytes) -> "MerkleForest":
        trees, order = encoding.decode(raw, 2)
        return cls(
            tuple(MerkleTree.decode(t) for t in encoding.decode_list(trees)),
            tuple(encoding.decode_list(order)),
        )

    def render(self) -> str:
        """Indented text dump, one line per node, roots first."""
        out = []
        for ti, tree in enumerate(self.trees):
            out.append(f"tree {ti} depth {tree.depth} root {tree.root.hex()}")

            def walk(level: int, index: int, indent: int) -> None:
                pad = "  " * indent
                if level == 1:
                    ident, _ = tree.leaves[index]
                    out.append(f"{pad}leaf {ident.decode(errors='replace')}")
                    return
                out.append(f"{pad}node {tree.levels[level - 1][index].hex()[:16]}")
                walk(level - 1, 2 * index, indent + 1)
                walk(level - 1, 2 * index + 1, indent + 1)

            walk(tree.depth, 0, 1)
        return "\n".join(out)


def merge_forest(forest: MerkleForest, hks: Sequence[HashKey]) -> tuple[MerkleForest, int]:
    """Merge equal-depth trees until depths are distinct; return the merge count.

    The earlier-registered tree of each pair becomes the left subtree.
    """
    trees = list(forest.trees)
    merges = 0
    while True:
        pair = None
        seen: dict[int, int] = {}
        for i, t in enumerate(trees):
            if t.depth in seen:
                pair = (seen[t.depth], i)
                break
            seen[t.depth] = i
        if pair is None:
            break
        i, j = pair
        left, right = trees[i], trees[j]
        if left.first > right.first:
            left, right = right, left
        trees[i] = MerkleTree.join(hks, left, right)
        del trees[j]
        merges += 1
    trees.sort(key=lambda t: (-t.depth, t.first))
    return MerkleForest(tuple(trees), forest.order), merges


def identity_verify(forest: MerkleForest, ident: bytes) -> bool:
    """Accept iff ``ident`` has never been registered (exact bytes)."""
    return ident not in forest.order


def register(
    forest: MerkleForest, hks: Sequence[HashKey], ident: bytes, pk: bytes
) -> tuple[MerkleForest, int]:
    if not identity_verify(forest, ident):
        raise ValueError(f"identity {ident!r} already registered")
    tree = MerkleTree.single(hks, ident, pk, len(forest.order))
    grown = MerkleForest(forest.trees + (tree,), forest.order + (ident,))
    return merge_forest(grown, hks)


# -- openings ------------------------------------------------------------------------


@dataclass(frozen=True)
class MerkleOpening:
    leaf: tuple[bytes, bytes]
    path: tuple[tuple[bytes, bytes, int], ...]
    root: bytes
    tree_index: int = 0

    @property
    def ident(self) -> bytes:
        return self.leaf[0]

    @property
    def pk(self) -> bytes:
        return self.leaf[1]

    @property
    def depth(self) -> int:
        return len(self.path) + 1

    def encode(self) -> bytes:
        path = encoding.encode_list([encode([h0, h1, b]) for h0, h1, b in self.path])
        return encode([self.leaf[0], self.leaf[1], path, self.root, self.tree_index])

    @classmethod
    def decode(cls, raw: bytes) -> "MerkleOpening":
        ident, pk, path, root, ti = encoding.decode(raw, 5)
        steps = []
        for item in encoding.decode_list(path):
            h0, h1, b = encoding.decode(item, 3)
            steps.append((h0, h1, encoding.decode_int(b)))
        return cls((ident, pk), tuple(steps), root, encoding.decode_int(ti))


def rbe_update(forest: MerkleForest, ident: bytes) -> MerkleOpening:
    ti, pos = forest.locate(ident)
    tree = forest.trees[ti]
    path = []
    for j in range(1, tree.depth):
        index = pos >> (j - 1)
        base = index & ~1
        level = tree.levels[j - 1]
        path.append((level[base], level[base + 1], index & 1))
    return MerkleOpening(tree.leaves[pos], tuple(path), tree.root, ti)


def path_root(hks: Sequence[HashKey], pth: MerkleOpening) -> Optional[bytes]:
    """Recompute the root the opening commits to, or ``None`` if a level fails."""
    if len(pth.path) + 1 > len(hks):
        return None
    cur = leaf_hash(hks, pth.leaf[0], pth.leaf[1])
    for j, (h0, h1, b) in enumerate(pth.path, start=1):
        if b not in (0, 1) or (h0, h1)[b] != cur:
            return None
        cur = node_hash(hks, j + 1, h0, h1)
    return cur


def verify_opening(pp: PublicParams, tree_index: int, ident: bytes, pth: MerkleOpening) -> bool:
    if not 0 <= tree_index < len(pp.roots):
        return False
    rt, d = pp.roots[tree_index]
    if pth.root != rt or pth.depth != d or pth.ident != ident:
        return False
    return path_root(pp.hks[:d], pth) == rt


# -- encryption -------------------------------------------------------------------------


@dataclass(frozen=True)
class EncProgram:
    """Transparent stand-in for an obfuscated encryption circuit."""

    crs: bytes
    rt: bytes
    d: int
    hks: tuple[HashKey, ...]
    m: bytes
    ident: bytes
    r: bytes

    def __call__(self, pth: MerkleOpening) -> Optional[bytes]:
        return eval_program(self, pth)

    def encode(self) -> bytes:
        hks = encoding.encode_list([hk.encode() for hk in self.hks])
        return encode([self.crs, self.rt, self.d, hks, self.m, self.ident, self.r])

    @classmethod
    def decode(cls, raw: bytes) -> "EncProgram":
        crs, rt, d, hks, m, ident, r = encoding.decode(raw, 7)
        keys = tuple(HashKey.decode(h) for h in encoding.decode_list(hks))
        return cls(crs, rt, encoding.decode_int(d), keys, m, ident, r)


def eval_program(prog: EncProgram, pth: MerkleOpening) -> Optional[bytes]:
    if not isinstance(pth, MerkleOpening):
        return None
    if pth.root != prog.rt or pth.ident != prog.ident or pth.depth != prog.d:
        return None
    if path_root(prog.hks, pth) != prog.rt:
        return None
    try:
        return pke_enc(pth.pk, prog.m, prog.r)
    except ValueError:
        return None


@dataclass(frozen=True)
class RbeCiphertext:
    pp: PublicParams
    programs: tuple[EncProgram, ...]

    def encode(self) -> bytes:
        return encode([self.pp.encode(), encoding.encode_list([p.encode() for p in self.programs])])

    @classmethod
    def decode(cls, raw: bytes) -> "RbeCiphertext":
        pp, programs = encoding.decode(raw, 2)
        return cls(
            PublicParams.decode(pp),
            tuple(EncProgram.decode(p) for p in encoding.decode_list(programs)),
        )


def rbe_enc(
    crs: bytes, pp: PublicParams, ident: bytes, m: bytes, r: Optional[bytes] = None
) -> RbeCiphertext:
    if r is None:
        r = os.urandom(32)
    programs = tuple(EncProgram(crs, rt, d, pp.hks[:d], m, ident, r) for rt, d in pp.roots)
    return RbeCiphertext(pp, programs)


def rbe_dec(
    sk: bytes, u: MerkleOpening, ct: Union[RbeCiphertext, bytes]
) -> Union[bytes, Verdict]:
    """Return the message, :data:`GET_UPD` for a stale opening, else :data:`BOTTOM`."""
    if isinstance(ct, (bytes, bytearray)):
        try:
            ct = RbeCiphertext.decode(bytes(ct))
        except (DecodeError, ValueError):
            return BOTTOM
    if not isinstance(ct, RbeCiphertext) or not isinstance(u, MerkleOpening):
        return BOTTOM
    for prog in ct.programs:
        c = eval_program(prog, u)
        if c is not None:
            m = pke_dec(sk, c)
            if m is not None:
                return m
    roots = {rt for rt, _ in ct.pp.roots}
    if u.root not in roots and path_root(ct.pp.hks, u) == u.root:
        return GET_UPD
    return BOTTOM


# -- the key-curator contract -----------------------------------------------------------


@dataclass(frozen=True)
class Registration:
    """The ``aux`` of a registration transaction."""

    ident: bytes
    pk: bytes

    def encode(self) -> bytes:
        return encode([self.ident, self.pk])

    @classmethod
    def decode(cls, raw: bytes) -> "Registration":
        ident, pk = encoding.decode(raw, 2)
        return cls(ident, pk)


KEY_PP = b"pp"
KEY_FOREST = b"forest"
KEY_CRS = b"crs"


def _id_key(ident: bytes) -> bytes:
    return b"id:" + ident


def state_pp(state: Optional[ContractState]) -> Optional[PublicParams]:
    if state is None or KEY_PP not in state:
        return None
    return PublicParams.decode(state.get(KEY_PP))


def state_forest(state: Optional[ContractState]) -> MerkleForest:
    if state is None or KEY_FOREST not in state:
        return MerkleForest()
    return MerkleForest.decode(state.get(KEY_FOREST))


def _setup_guard(state: ContractState, tx: Transaction, call: Call) -> bool:
    if tx.signer != state.owner or KEY_PP in state:
        return False
    try:
        crs, pp = encoding.decode(call.aux, 2)
        PublicParams.decode(pp)
    except (DecodeError, ValueError):
        return False
    return True


def _setup(state: ContractState, tx: Transaction, call: Call):
    crs, pp = encoding.decode(call.aux, 2)
    data = {KEY_CRS: crs, KEY_PP: pp, KEY_FOREST: MerkleForest().encode()}
    return data, {"setup": 1}


def _register_guard(state: ContractState, tx: Transaction, call: Call) -> bool:
    if KEY_PP not in state:
        return False
    try:
        reg = Registration.decode(call.aux)
    except DecodeError:
        return False
    if len(reg.pk) != PKE_PK_BYTES:
        return False
    # the id index mirrors forest.order, so this is identity_verify
    return _id_key(reg.ident) not in state


def _register(state: ContractState, tx: Transaction, call: Call):
    reg = Registration.decode(call.aux)
    pp = state_pp(state)
    forest, merges = register(state_forest(state), pp.hks, reg.ident, reg.pk)
    data = dict(state.data)
    data[KEY_FOREST] = forest.encode()
    data[KEY_PP] = forest.public_params(pp).encode()
    data[_id_key(reg.ident)] = reg.pk
    return data, {"register-base": 1, "merge": merges}


RBE_CODE = Bytecode(
    CODE_NAME,
    {
        "setup": Opcode(_setup, _setup_guard),
        "register": Opcode(_register, _register_guard),
    },
)


def register_tx(key: KeyMaterial, instance: bytes, ident: bytes, pk: bytes, nonce: int) -> Transaction:
    return call_tx(key, instance, "register", Registration(ident, pk).encode(), nonce)


def register_onchain(chain: Chain, instance: bytes, tx: Transaction) -> tuple[PublicParams, MerkleForest]:
    state = chain.transfer(instance, tx)
    return state_pp(state), state_forest(state)


# -- protocol driver -----------------------------------------------------------------------


@dataclass
class RbeUser:
    ident: bytes
    pk: bytes
    sk: bytes
    signing: KeyMaterial


class RbeProtocol:
    """Key curator contract plus registered users on one chain."""

    name = "rbe"

    def __init__(self, config: LedgerConfig, seed: int = 0, lam: int = DEFAULT_LAMBDA):
        self.seed = seed
        self.rng = random.Random(seed)
        self.chain = Chain(config, [RBE_CODE])
        self.crs, self.pp0, _ = rbe_setup(lam, seed=f"rbe/{seed}")
        self.kc_signing = sample_keys("SIG", f"rbe/kc/{seed}")
        self.users: dict[bytes, RbeUser] = {}
        self._nonces: dict[bytes, int] = {}
        self.deploy_tx = deploy_tx(self.kc_signing, CODE_NAME, self.next_nonce(self.kc_signing))
        self.instance = self.deploy_tx.id
        self.setup_tx = call_tx(
            self.kc_signing,
            self.instance,
            "setup",
            encode([self.crs, self.pp0.encode()]),
            self.next_nonce(self.kc_signing),
        )
        self.chain.execute_many([self.deploy_tx, self.setup_tx])

    def next_nonce(self, key: KeyMaterial) -> int:
        self._nonces[key.public] = self._nonces.get(key.public, 0) + 1
        return self._nonces[key.public]

    def new_user(self, ident: Union[str, bytes], signing: Optional[KeyMaterial] = None) -> RbeUser:
        if isinstance(ident, str):
            ident = ident.encode()
        pk, sk = rbe_keygen(f"rbe/user/{self.seed}/{ident.hex()}")
        if signing is None:
            signing = sample_keys("SIG", f"rbe/signer/{self.seed}/{ident.hex()}")
        user = RbeUser(ident, pk, sk, signing)
        self.users[ident] = user
        return user

    def request(self, ident: bytes) -> Transaction:
        u = self.users[ident]
        return register_tx(u.signing, self.instance, u.ident, u.pk, self.next_nonce(u.signing))

    def register(self, idents: Iterable[Union[str, bytes]]) -> list[Optional[Receipt]]:
        """Register each identity in its own block, in order."""
        receipts = []
        for ident in idents:
            user = self.new_user(ident)
            receipts.append(self.chain.execute(self.request(user.ident)))
        return receipts

    def register_batch(self, idents: Iterable[Union[str, bytes]]) -> list[Optional[Receipt]]:
        """Register all identities in a single block."""
        return self.chain.execute_many(self.request(self.new_user(i).ident) for i in idents)

    def state(self) -> ContractState:
        return self.chain.access(self.instance)

    def pp(self) -> PublicParams:
        return state_pp(self.state())

    def forest(self) -> MerkleForest:
        return state_forest(self.state())

    def update(self, ident: bytes) -> MerkleOpening:
        return rbe_update(self.forest(), ident)

    def encrypt(self, ident: bytes, m: bytes) -> RbeCiphertext:
        r = self.rng.getrandbits(256).to_bytes(32, "big")
        return rbe_enc(self.crs, self.pp(), ident, m, r)

    def decrypt(self, ident: bytes, opening: MerkleOpening, ct) -> Union[bytes, Verdict]:
        return rbe_dec(self.users[ident].sk, opening, ct)


def read_params(snapshot: StateSnapshot) -> tuple[Optional[PublicParams], MerkleForest]:
    """``(pp, forest)`` out of a snapshot returned by ``read_state``."""
    return state_pp(snapshot.value), state_forest(snapshot.value)


def root_history(
    n: int, lam: int = DEFAULT_LAMBDA, seed=0
) -> tuple[list[tuple[int, ...]], list[int], dict[bytes, int]]:
    """Register ``n`` identities off-chain.

    Returns the depth tuple after each registration, the merge count of each
    registration, and how often each identity's containing root changed.
    """
    _, pp, forest = rbe_setup(lam, seed=seed)
    depths, merges = [], []
    changes: dict[bytes, int] = {}
    where: dict[bytes, bytes] = {}
    for i in range(n):
        ident = f"user-{i}".encode()
        forest, count = register(forest, pp.hks, ident, bytes(PKE_PK_BYTES))
        depths.append(forest.depths)
        merges.append(count)
        for tree in forest.trees:
            for leaf_id, _ in tree.leaves:
                prev = where.get(leaf_id)
                changes.setdefault(leaf_id, 0)
                if prev is not None and prev != tree.root:
                    changes[leaf_id] += 1
                where[leaf_id] = tree.root
    return depths, merges, changes

"""Replicated smart-contract state machine on top of :mod:`scproto.ledger`.

A contract is a :class:`Bytecode`: named opcode procedures, each guarded by
exactly one reqcode predicate. Procedures are registered natively; there is
no interpreter. Transactions address contracts through a :class:`Call`
payload. The ledger replays every confirmed transaction through
:class:`ContractEngine` at every player, so all honest players hold the same
contract states and the same receipts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Callable, Iterable, Mapping, Optional

from scproto import encoding
from scproto.encoding import DecodeError, digest, encode
from scproto.ledger import (
    Ledger,
    LedgerConfig,
    LedgerError,
    NotConfirmed,
    StateSnapshot,
    Transaction,
)
from scproto.primitives.schemes import KeyMaterial

DEPLOY = "deploy"


class UnknownInstance(LedgerError):
    pass


class UnknownOpcode(LedgerError):
    pass


@dataclass(frozen=True)
class Call:
    """Transaction payload: ``metadata`` says what to run, ``aux`` carries the data."""

    contract: bytes
    op: str
    aux: bytes = b""

    @property
    def metadata(self) -> bytes:
        return encode([self.contract, self.op])

    def encode(self) -> bytes:
        return encode([self.contract, self.op, self.aux])

    @classmethod
    def decode(cls, raw: bytes) -> "Call":
        contract, op, aux = encoding.decode(raw, 3)
        return cls(contract, op.decode("utf-8"), aux)


class ContractState:
    """Immutable flat byte map plus the bookkeeping the engine needs."""

    __slots__ = ("code", "owner", "_data", "_nonces", "_digest", "_encoded")

    def __init__(
        self,
        code: str,
        owner: bytes,
        data: Optional[Mapping[bytes, bytes]] = None,
        nonces: Optional[Mapping[bytes, int]] = None,
    ):
        self.code = code
        self.owner = owner
        self._data = dict(data or {})
        self._nonces = dict(nonces or {})
        self._digest: Optional[bytes] = None
        self._encoded: Optional[bytes] = None

    @property
    def data(self) -> Mapping[bytes, bytes]:
        return MappingProxyType(self._data)

    @property
    def nonces(self) -> Mapping[bytes, int]:
        return MappingProxyType(self._nonces)

    def get(self, key: bytes, default: Optional[bytes] = None) -> Optional[bytes]:
        return self._data.get(key, default)

    def __contains__(self, key: bytes) -> bool:
        return key in self._data

    def __len__(self) -> int:
        return len(self._data)

    def replace(
        self, data: Mapping[bytes, bytes], nonces: Optional[Mapping[bytes, int]] = None
    ) -> "ContractState":
        return ContractState(self.code, self.owner, data, self._nonces if nonces is None else nonces)

    def encode(self) -> bytes:
        if self._encoded is None:
            pairs = [encode([k, v]) for k, v in sorted(self._data.items())]
            nonces = [encode([s, n]) for s, n in sorted(self._nonces.items())]
            self._encoded = encode(
                [self.code, self.owner, encoding.encode_list(pairs), encoding.encode_list(nonces)]
            )
        return self._encoded

    @classmethod
    def decode(cls, raw: bytes) -> "ContractState":
        code, owner, pairs, nonces = encoding.decode(raw, 4)
        data = {}
        for item in encoding.decode_list(pairs):
            k, v = encoding.decode(item, 2)
            data[k] = v
        nmap = {}
        for item in encoding.decode_list(nonces):
            s, n = encoding.decode(item, 2)
            nmap[s] = encoding.decode_int(n)
        return cls(code.decode(), owner, data, nmap)

    def digest(self) -> bytes:
        if self._digest is None:
            self._digest = digest("contract-state", self.encode())
        return self._digest

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ContractState) and other.encode() == self.encode()

    def __hash__(self) -> int:
        return hash(self.digest())

    def __repr__(self) -> str:
        return f"ContractState({self.code}, {len(self._data)} keys, {self.digest().hex()[:12]})"


Guard = Callable[[ContractState, Transaction, Call], bool]
# a procedure returns the new data map and the op counts charged for it
Procedure = Callable[[ContractState, Transaction, Call], tuple[Mapping[bytes, bytes], Mapping[str, int]]]


@dataclass(frozen=True)
class Opcode:
    procedure: Procedure
    reqcode: Guard


@dataclass(frozen=True)
class Bytecode:
    name: str
    opcodes: Mapping[str, Opcode]

    def __post_init__(self) -> None:
        if DEPLOY in self.opcodes:
            raise ValueError(f"opcode name {DEPLOY!r} is reserved")
        object.__setattr__(self, "opcodes", MappingProxyType(dict(self.opcodes)))


@dataclass(frozen=True)
class Receipt:
    tx: bytes
    contract: bytes
    op: str
    outcome: str  # applied | guard-failed | error
    pre_state_digest: bytes
    post_state_digest: bytes
    reason: str = ""
    ops: tuple = ()

    @property
    def applied(self) -> bool:
        return self.outcome == "applied"

    def encode(self) -> bytes:
        ops = encoding.encode_list([encode([name, n]) for name, n in self.ops])
        return encode(
            [
                self.tx,
                self.contract,
                self.op,
                self.outcome,
                self.pre_state_digest,
                self.post_state_digest,
                self.reason,
                ops,
            ]
        )

    @classmethod
    def decode(cls, raw: bytes) -> "Receipt":
        tx, c, op, outcome, pre, post, reason, ops = encoding.decode(raw, 8)
        pairs = []
        for item in encoding.decode_list(ops):
            name, n = encoding.decode(item, 2)
            pairs.append((name.decode(), encoding.decode_int(n)))
        return cls(tx, c, op.decode(), outcome.decode(), pre, post, reason.decode(), tuple(pairs))


_EMPTY = digest("contract-state", b"")


class ContractEngine:
    """Ledger state machine whose global state maps contract ids to states."""

    def __init__(self, codes: Iterable[Bytecode] = ()):
        self.codes = {code.name: code for code in codes}

    def register(self, code: Bytecode) -> None:
        self.codes[code.name] = code

    def initial_state(self) -> Mapping[bytes, ContractState]:
        return MappingProxyType({})

    def state_digest(self, state: Mapping[bytes, ContractState]) -> bytes:
        return digest("world", *(f for cid in sorted(state) for f in (cid, state[cid].digest())))

    def view(self, state, tx: Transaction) -> tuple[bytes, Any]:
        try:
            call = Call.decode(tx.payload)
        except (DecodeError, UnicodeDecodeError):
            return b"", None
        cid = tx.id if call.op == DEPLOY else call.contract
        contract = state.get(cid)
        if contract is None:
            return b"", None
        return encode([cid, contract.encode()]), contract

    def apply(self, state, tx: Transaction):
        try:
            call = Call.decode(tx.payload)
        except (DecodeError, UnicodeDecodeError):
            return state, Receipt(tx.id, b"", "", "error", _EMPTY, _EMPTY, "malformed-payload")

        if call.op == DEPLOY:
            code = call.aux.decode("utf-8", "replace")
            if code not in self.codes:
                return state, Receipt(tx.id, tx.id, DEPLOY, "error", _EMPTY, _EMPTY, "unknown-code")
            if tx.id in state:
                return state, Receipt(tx.id, tx.id, DEPLOY, "error", _EMPTY, _EMPTY, "duplicate")
            fresh = ContractState(code, tx.signer)
            new = dict(state)
            new[tx.id] = fresh
            receipt = Receipt(
                tx.id, tx.id, DEPLOY, "applied", _EMPTY, fresh.digest(), ops=(("deploy", 1),)
            )
            return MappingProxyType(new), receipt

        contract = state.get(call.contract)
        if contract is None:
            return state, Receipt(
                tx.id, call.contract, call.op, "error", _EMPTY, _EMPTY, "unknown-instance"
            )
        pre = contract.digest()
        opcode = self.codes[contract.code].opcodes.get(call.op)
        if opcode is None:
            return state, Receipt(tx.id, call.contract, call.op, "error", pre, pre, "unknown-opcode")
        if contract.nonces.get(tx.signer, -1) >= tx.nonce:
            return state, Receipt(
                tx.id, call.contract, call.op, "guard-failed", pre, pre, "stale-nonce"
            )
        if not opcode.reqcode(contract, tx, call):
            return state, Receipt(tx.id, call.contract, call.op, "guard-failed", pre, pre, "reqcode")
        data, ops = opcode.procedure(contract, tx, call)
        nonces = dict(contract.nonces)
        nonces[tx.signer] = tx.nonce
        updated = contract.replace(data, nonces)
        new = dict(state)
        new[call.contract] = updated
        receipt = Receipt(
            tx.id,
            call.contract,
            call.op,
            "applied",
            pre,
            updated.digest(),
            ops=tuple(sorted(ops.items())),
        )
        return MappingProxyType(new), receipt


def deploy_tx(key: KeyMaterial, code: str, nonce: int) -> Transaction:
    return Transaction.create(key, Call(b"", DEPLOY, code.encode()).encode(), nonce)


def call_tx(key: KeyMaterial, contract: bytes, op: str, aux: bytes, nonce: int) -> Transaction:
    return Transaction.create(key, Call(contract, op, aux).encode(), nonce)


@dataclass
class Chain:
    """A ledger running the contract engine, with Deploy/Transfer/Access/Inspect."""

    config: LedgerConfig
    codes: Iterable[Bytecode] = ()
    engine: ContractEngine = field(init=False)
    ledger: Ledger = field(init=False)

    def __post_init__(self) -> None:
        self.engine = ContractEngine(self.codes)
        self.ledger = Ledger(self.config, self.engine)
        # users of the facade hand their transactions to an honest player
        honest = self.config.honest_players
        self.entry: Optional[int] = honest[0] if honest else None

    def execute(self, tx: Transaction) -> Optional[Receipt]:
        """Submit ``tx`` and advance until it is confirmed; return its receipt."""
        return self.execute_many([tx])[0]

    def execute_many(self, txs: Iterable[Transaction]) -> list[Optional[Receipt]]:
        """Submit a batch in one round and wait until all of it is confirmed."""
        txs = list(txs)
        for tx in txs:
            result = self.ledger.submit(tx, entry=self.entry)
            if not result:
                raise LedgerError(f"submission rejected: {result.reason}")
        for tx in txs:
            self.ledger.confirm(tx)
        return [self.ledger.receipt(tx) for tx in txs]

    def _require_confirmed(self, tx: Transaction) -> None:
        if not self.ledger.is_confirmed(tx):
            raise NotConfirmed(f"tx {tx.id.hex()[:12]} is not confirmed")

    def deploy(self, tx: Transaction) -> tuple[bytes, ContractState]:
        self._require_confirmed(tx)
        receipt = self.ledger.receipt(tx)
        if receipt is None or not receipt.applied:
            reason = receipt.reason if receipt is not None else "no receipt"
            raise LedgerError(f"deployment failed: {reason}")
        return tx.id, self.ledger.read_state(tx).value

    def transfer(self, instance: bytes, tx: Transaction) -> ContractState:
        self._require_confirmed(tx)
        receipt = self.ledger.receipt(tx)
        if receipt is not None and receipt.outcome == "error":
            if receipt.reason == "unknown-opcode":
                raise UnknownOpcode(Call.decode(tx.payload).op)
            raise UnknownInstance(receipt.reason)
        call = Call.decode(tx.payload)
        if call.contract != instance:
            raise UnknownInstance("transaction addresses a different contract")
        return self.ledger.read_state(tx).value

    def access(
        self, instance: bytes, query_tx: Optional[Transaction] = None, player: Optional[int] = None
    ) -> ContractState:
        """Confirmed state of ``instance``; queries are unauthenticated reads."""
        ledger = self.ledger
        k = ledger.config.k
        views = ledger.views if player is None else [ledger.view(player)]
        tally: dict[ContractState, int] = {}
        for v in views:
            if not v.honest and v.tamper and player is None:
                continue
            contract = v.states[v.confirmed_height(k)].get(instance)
            if contract is not None:
                tally[contract] = tally.get(contract, 0) + 1
        if player is not None:
            if not tally:
                raise UnknownInstance(instance.hex())
            return next(iter(tally))
        for contract, support in tally.items():
            if ledger._enough(support):
                return contract
        raise UnknownInstance(instance.hex())

    def receipt(self, tx: Transaction) -> Optional[Receipt]:
        return self.ledger.receipt(tx)

    def inspect(self, tx: Transaction) -> bool:
        """Public legality check: the tx is confirmed and its guard held."""
        ledger = self.ledger
        if not ledger.is_confirmed(tx):
            return False
        if "no-signature-check" not in ledger.config.faults and not tx.verify():
            return False
        receipt = ledger.receipt(tx)
        return receipt is not None and receipt.applied

    def read_state(self, tx: Transaction, player: Optional[int] = None) -> StateSnapshot:
        return self.ledger.read_state(tx, player)

    def read_tx(self, snap: StateSnapshot, player: Optional[int] = None) -> Transaction:
        return self.ledger.read_tx(snap, player)

    def receipt_lines(self, player: int) -> list[str]:
        view = self.ledger.view(player)
        out = []
        for block in view.chain:
            for tx in block.txs:
                r = view.receipts.get(tx.id)
                if isinstance(r, Receipt):
                    out.append(r.encode().hex())
        return out

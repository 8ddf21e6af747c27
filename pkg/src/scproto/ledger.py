"""Deterministic multi-player ledger with k-deep confirmation.

Consensus is an idealized round-based quorum: every round each honest
player appends one block holding all of its pending transactions in
``(nonce, id)`` order. Honest players therefore build identical chains and
the robustness properties (persistence, liveness) hold exactly rather than
with high probability. Adversarial players follow one scripted behaviour:

``withhold``
    never append blocks.
``censor``
    append blocks but drop a seeded subset of transactions.
``equivocate``
    append honest blocks but report tampered states to readers.

The robust read interface (:meth:`Ledger.read_state`, :meth:`Ledger.read_tx`)
only returns answers that more than an ``epsilon`` fraction of all players
hold at least ``k`` blocks deep. Named ``faults`` switch individual
assumptions off so that the security games have negative controls.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Protocol, Union

from scproto import encoding
from scproto.config import ConfigError, int_set, read_kv, reject_unknown, take
from scproto.encoding import digest, encode
from scproto.primitives.schemes import KeyMaterial, sample_keys, sign, verify

STRATEGIES = ("honest", "withhold", "censor", "equivocate")
FAULTS = ("no-replication", "no-confirmation", "no-signature-check")
ZERO = bytes(encoding.DIGEST_SIZE)


class LedgerError(Exception):
    pass


class NotConfirmed(LedgerError):
    pass


class UnknownState(LedgerError):
    pass


class UnknownPlayer(LedgerError):
    pass


# -- transactions and blocks -------------------------------------------------


@dataclass(frozen=True)
class Transaction:
    payload: bytes
    signature: bytes
    signer: bytes
    nonce: int
    id: bytes = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "id", digest("tx", self.payload, self.signature, self.signer, self.nonce)
        )

    @staticmethod
    def signing_bytes(payload: bytes, signer: bytes, nonce: int) -> bytes:
        return encode(["tx/sign", payload, signer, nonce])

    @classmethod
    def create(cls, key: KeyMaterial, payload: bytes, nonce: int) -> "Transaction":
        sigma = sign(key.secret, cls.signing_bytes(payload, key.public, nonce))
        return cls(payload, sigma, key.public, nonce)

    def verify(self) -> bool:
        return verify(
            self.signer, self.signature, self.signing_bytes(self.payload, self.signer, self.nonce)
        )

    def encode(self) -> bytes:
        return encode([self.payload, self.signature, self.signer, self.nonce, self.id])

    @classmethod
    def decode(cls, raw: bytes) -> "Transaction":
        payload, sigma, signer, nonce, tx_id = encoding.decode(raw, 5)
        tx = cls(payload, sigma, signer, encoding.decode_int(nonce))
        if tx.id != tx_id:
            raise encoding.DecodeError("transaction id does not match its fields")
        return tx


@dataclass(frozen=True)
class Block:
    height: int
    parent: bytes
    txs: tuple[Transaction, ...]
    state_root: bytes
    digest: bytes = field(init=False, compare=False)

    def __post_init__(self) -> None:
        ids = encoding.encode_list([tx.id for tx in self.txs])
        object.__setattr__(
            self, "digest", digest("block", self.height, self.parent, ids, self.state_root)
        )


@dataclass(frozen=True)
class StateSnapshot:
    """State exposed by the transaction at ``(height, index)``."""

    height: int
    index: int
    data: bytes
    value: Any = field(default=None, compare=False, repr=False)

    @property
    def digest(self) -> bytes:
        return digest("state", self.data)

    @property
    def key(self) -> bytes:
        return digest("snapshot", self.height, self.index, self.data)

    def encode(self) -> bytes:
        return encode([self.height, self.index, self.data])

    @classmethod
    def decode(cls, raw: bytes) -> "StateSnapshot":
        h, i, data = encoding.decode(raw, 3)
        return cls(encoding.decode_int(h), encoding.decode_int(i), data)


@dataclass(frozen=True)
class SubmitResult:
    accepted: bool
    reason: Optional[str] = None

    def __bool__(self) -> bool:
        return self.accepted


class StateMachine(Protocol):
    """What the ledger needs from the replicated application."""

    def initial_state(self) -> Any: ...

    def apply(self, state: Any, tx: Transaction) -> tuple[Any, Any]:
        """Return ``(new_state, receipt)``."""

    def state_digest(self, state: Any) -> bytes: ...

    def view(self, state: Any, tx: Transaction) -> tuple[bytes, Any]:
        """Return ``(canonical bytes, decoded value)`` of the state ``tx`` touched."""


class LogMachine:
    """Default application: an append-only map from tx id to payload."""

    def initial_state(self) -> tuple:
        return ()

    def apply(self, state, tx):
        return state + ((tx.id, tx.payload),), None

    def state_digest(self, state) -> bytes:
        return digest("log", *(f for pair in state for f in pair))

    def view(self, state, tx):
        data = encoding.encode_list([encode(pair) for pair in state])
        return data, state


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class LedgerConfig:
    total_players: int = 5
    adversary_players: frozenset = frozenset()
    k: int = 3
    delta: int = 6
    epsilon: float = 0.5
    seed: int = 0
    strategy: str = "honest"
    faults: frozenset = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "adversary_players", frozenset(self.adversary_players))
        object.__setattr__(self, "faults", frozenset(self.faults))
        if self.total_players < 1:
            raise ConfigError("need at least one player", field="total_players")
        if not self.adversary_players <= set(range(self.total_players)):
            raise ConfigError("adversary ids out of range", field="adversary_players")
        if self.k < 1:
            raise ConfigError("k must be >= 1", field="k")
        if self.delta < 1:
            raise ConfigError("delta must be >= 1", field="delta")
        if not 0 <= self.epsilon <= 1:
            raise ConfigError("epsilon must lie in [0, 1]", field="epsilon")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}", field="strategy")
        unknown = self.faults - set(FAULTS)
        if unknown:
            raise ConfigError(f"unknown faults {sorted(unknown)}", field="faults")

    @property
    def honest_players(self) -> list[int]:
        return [p for p in range(self.total_players) if p not in self.adversary_players]

    @property
    def honest_majority(self) -> bool:
        return len(self.adversary_players) / self.total_players < self.epsilon

    KEYS = (
        "total_players",
        "adversary_players",
        "k",
        "delta",
        "epsilon",
        "seed",
        "strategy",
        "faults",
    )

    @classmethod
    def from_entries(cls, entries: dict, prefix: str = "") -> "LedgerConfig":
        d = cls()

        def get(name, conv, default):
            return take(entries, prefix + name, conv, default)

        try:
            return cls(
                total_players=get("total_players", int, d.total_players),
                adversary_players=get("adversary_players", int_set, d.adversary_players),
                k=get("k", int, d.k),
                delta=get("delta", int, d.delta),
                epsilon=get("epsilon", float, d.epsilon),
                seed=get("seed", int, d.seed),
                strategy=get("strategy", str, d.strategy),
                faults=get("faults", lambda v: frozenset(v.replace(",", " ").split()), d.faults),
            )
        except ConfigError as exc:
            if exc.line is None and exc.field and prefix + exc.field in entries:
                raise ConfigError(
                    str(exc).split(": ", 1)[-1],
                    line=entries[prefix + exc.field][1],
                    field=prefix + exc.field,
                ) from exc
            raise

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "LedgerConfig":
        entries = read_kv(path)
        reject_unknown(entries, cls.KEYS)
        return cls.from_entries(entries)


# -- per-player views ----------------------------------------------------------


@dataclass
class LedgerView:
    player: int
    honest: bool
    chain: list[Block]
    pending: dict[bytes, Transaction] = field(default_factory=dict)
    appended: list[int] = field(default_factory=lambda: [0])
    positions: dict[bytes, tuple[int, int]] = field(default_factory=dict)
    snapshots: dict[bytes, StateSnapshot] = field(default_factory=dict)
    triggers: dict[bytes, Transaction] = field(default_factory=dict)
    receipts: dict[bytes, Any] = field(default_factory=dict)
    states: list[Any] = field(default_factory=list)
    tamper: bool = False
    # adversary scripts may plant lies here; honest views leave them empty
    state_overrides: dict[bytes, StateSnapshot] = field(default_factory=dict)
    trigger_overrides: dict[bytes, tuple[Transaction, int]] = field(default_factory=dict)

    @property
    def tip(self) -> int:
        return self.chain[-1].height

    def depth(self, tx_id: bytes) -> Optional[int]:
        pos = self.positions.get(tx_id)
        if pos is None:
            return None
        return self.tip - pos[0]

    def holds(self, tx_id: bytes, k: int) -> bool:
        d = self.depth(tx_id)
        return d is not None and d >= k

    def reported_state(self, tx_id: bytes, k: int) -> Optional[StateSnapshot]:
        """The state this player reports for ``tx_id`` if it is ``k`` deep."""
        if tx_id in self.state_overrides:
            return self.state_overrides[tx_id]
        if not self.holds(tx_id, k):
            return None
        snap = self.snapshots[tx_id]
        if self.tamper:
            snap = StateSnapshot(
                snap.height, snap.index, encode(["divergent", self.player, snap.data])
            )
        return snap

    def reported_trigger(self, snap: StateSnapshot, k: int) -> Optional[Transaction]:
        planted = self.trigger_overrides.get(snap.key)
        if planted is not None:
            tx, depth = planted
            return tx if depth >= k else None
        tx = self.triggers.get(snap.key)
        if tx is None or not self.holds(tx.id, k):
            return None
        if self.reported_state(tx.id, k) != snap:
            return None
        return tx

    def confirmed_height(self, k: int) -> int:
        return max(self.tip - k, 0)

    def confirmed_digest(self, k: int) -> bytes:
        return self.chain[self.confirmed_height(k)].digest

    def confirmed_pairs(self, k: int) -> frozenset:
        out = []
        for tx_id in self.positions:
            snap = self.reported_state(tx_id, k)
            if snap is not None:
                out.append((tx_id, snap.digest))
        return frozenset(out)

    def find_tx(self, k: int) -> list[Transaction]:
        out = []
        for block in self.chain[1 : self.tip - k + 1]:
            out.extend(block.txs)
        return out

    def round_when_deep(self, tx_id: bytes, k: int) -> Optional[int]:
        pos = self.positions.get(tx_id)
        if pos is None or pos[0] + k > self.tip:
            return None
        return self.appended[pos[0] + k]


# -- traces --------------------------------------------------------------------


@dataclass(frozen=True)
class RoundRecord:
    round: int
    player: int
    tip: bytes
    confirmed: bytes
    accepted: frozenset = field(compare=False, repr=False)

    def encode(self) -> bytes:
        return encode([self.round, self.player, self.tip, self.confirmed])


@dataclass
class ExecutionTrace:
    config: LedgerConfig
    submissions: dict[bytes, tuple[int, bool]] = field(default_factory=dict)
    records: list[RoundRecord] = field(default_factory=list)

    @property
    def last_round(self) -> int:
        return self.records[-1].round if self.records else 0

    def lines(self) -> list[str]:
        return [r.encode().hex() for r in self.records]

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text("".join(line + "\n" for line in self.lines()))


@dataclass(frozen=True)
class AuditResult:
    passed: bool
    violations: tuple = ()

    def __bool__(self) -> bool:
        return self.passed


def _first_acceptance(trace: ExecutionTrace) -> dict[tuple, dict[int, int]]:
    first: dict[tuple, dict[int, int]] = {}
    for rec in trace.records:
        for pair in rec.accepted:
            first.setdefault(pair, {}).setdefault(rec.player, rec.round)
    return first


def audit_persistence(trace: ExecutionTrace) -> AuditResult:
    """Every (tx, state) an honest player holds k deep is held by more than
    an epsilon fraction of all players within delta rounds."""
    cfg = trace.config
    honest = set(cfg.honest_players)
    violations = []
    for (tx_id, state), firsts in _first_acceptance(trace).items():
        for player, start in firsts.items():
            if player not in honest:
                continue
            support = sum(1 for r in firsts.values() if r <= start + cfg.delta)
            if support / cfg.total_players <= cfg.epsilon:
                violations.append((tx_id, player, start))
    return AuditResult(not violations, tuple(sorted(violations)))


def audit_liveness(trace: ExecutionTrace, delta: Optional[int] = None) -> AuditResult:
    """Every honest submission reaches an above-epsilon acceptance fraction
    within ``delta`` rounds. Submissions too recent for the trace to decide
    are skipped."""
    cfg = trace.config
    delta = cfg.delta if delta is None else delta
    by_tx: dict[bytes, list[dict[int, int]]] = {}
    for (tx_id, _), firsts in _first_acceptance(trace).items():
        by_tx.setdefault(tx_id, []).append(firsts)
    violations = []
    for tx_id, (submitted, honest) in trace.submissions.items():
        if not honest:
            continue
        deadline = submitted + delta
        if deadline > trace.last_round:
            continue
        ok = any(
            sum(1 for r in firsts.values() if r <= deadline) / cfg.total_players > cfg.epsilon
            for firsts in by_tx.get(tx_id, [])
        )
        if not ok:
            violations.append(tx_id)
    return AuditResult(not violations, tuple(sorted(violations)))


# -- the ledger ------------------------------------------------------------------


class Ledger:
    def __init__(self, config: LedgerConfig, machine: Optional[StateMachine] = None):
        self.config = config
        self.machine = machine if machine is not None else LogMachine()
        self.rng = random.Random(config.seed)
        self.round = 0
        self.seen: set[tuple[bytes, int]] = set()
        self.censored: set[bytes] = set()
        self.trace = ExecutionTrace(config)
        self._memo: dict[tuple, tuple] = {}

        state0 = self.machine.initial_state()
        genesis = Block(0, ZERO, (), self.machine.state_digest(state0))
        self.views = []
        for p in range(config.total_players):
            honest = p not in config.adversary_players
            view = LedgerView(p, honest, [genesis], states=[state0])
            view.tamper = not honest and config.strategy == "equivocate"
            self.views.append(view)

    # -- writing

    def submit(
        self, tx: Transaction, entry: Optional[int] = None, honest: bool = True
    ) -> SubmitResult:
        cfg = self.config
        if "no-signature-check" not in cfg.faults and not tx.verify():
            return SubmitResult(False, "bad-signature")
        key = (tx.signer, tx.nonce)
        if key in self.seen:
            return SubmitResult(False, "replayed-nonce")
        self.seen.add(key)
        self.trace.submissions[tx.id] = (self.round, honest)
        if cfg.strategy == "censor" and self.rng.random() < 0.5:
            self.censored.add(tx.id)
        if "no-replication" in cfg.faults:
            if entry is None:
                entry = self.rng.randrange(cfg.total_players)
            targets = [self.views[entry]]
        else:
            targets = self.views
        for view in targets:
            view.pending[tx.id] = tx
        return SubmitResult(True)

    def _build(self, view: LedgerView, txs: list[Transaction]):
        parent = view.chain[-1]
        memo_key = (parent.digest, tuple(tx.id for tx in txs))
        hit = self._memo.get(memo_key)
        if hit is not None:
            return hit
        state = view.states[-1]
        height = parent.height + 1
        rows = []
        for index, tx in enumerate(txs):
            state, receipt = self.machine.apply(state, tx)
            data, value = self.machine.view(state, tx)
            rows.append((tx, StateSnapshot(height, index, data, value), receipt))
        block = Block(height, parent.digest, tuple(txs), self.machine.state_digest(state))
        result = (block, state, rows)
        self._memo[memo_key] = result
        return result

    def _append(self, view: LedgerView, txs: list[Transaction]) -> Block:
        block, state, rows = self._build(view, txs)
        view.chain.append(block)
        view.states.append(state)
        view.appended.append(self.round)
        for tx, snap, receipt in rows:
            view.positions[tx.id] = (snap.height, snap.index)
            view.snapshots[tx.id] = snap
            view.triggers[snap.key] = tx
            view.receipts[tx.id] = receipt
            view.pending.pop(tx.id, None)
        return block

    def advance_round(self) -> list[Optional[Block]]:
        self.round += 1
        cfg = self.config
        out: list[Optional[Block]] = []
        for view in self.views:
            txs = sorted(view.pending.values(), key=lambda t: (t.nonce, t.id))
            if not view.honest:
                if cfg.strategy == "withhold":
                    out.append(None)
                    continue
                if cfg.strategy == "censor":
                    txs = [t for t in txs if t.id not in self.censored]
            out.append(self._append(view, txs))
        k = cfg.k
        for view in self.views:
            self.trace.records.append(
                RoundRecord(
                    self.round,
                    view.player,
                    view.chain[-1].digest,
                    view.confirmed_digest(k),
                    view.confirmed_pairs(k),
                )
            )
        return out

    def run(self, rounds: int) -> None:
        for _ in range(rounds):
            self.advance_round()

    def confirm(self, tx: Transaction, max_rounds: Optional[int] = None) -> None:
        """Advance rounds until ``tx`` is confirmed, or raise :class:`NotConfirmed`."""
        limit = self.config.delta if max_rounds is None else max_rounds
        for _ in range(limit + 1):
            if self.is_confirmed(tx):
                return
            self.advance_round()
        if not self.is_confirmed(tx):
            raise NotConfirmed(f"tx {tx.id.hex()[:12]} not confirmed in {limit} rounds")

    # -- acceptance rules

    def _min_depth(self) -> int:
        return 0 if "no-confirmation" in self.config.faults else self.config.k

    def _enough(self, support: int) -> bool:
        faults = self.config.faults
        if "no-replication" in faults or "no-confirmation" in faults:
            return support >= 1
        return support / self.config.total_players > self.config.epsilon

    def view(self, player: int) -> LedgerView:
        if not 0 <= player < len(self.views):
            raise UnknownPlayer(player)
        return self.views[player]

    @property
    def honest_players(self) -> list[int]:
        return self.config.honest_players

    def is_confirmed(self, tx: Transaction) -> bool:
        k = self._min_depth()
        return self._enough(sum(1 for v in self.views if v.holds(tx.id, k)))

    def _state_support(self, tx: Transaction) -> dict[StateSnapshot, int]:
        k = self._min_depth()
        tally: dict[StateSnapshot, int] = {}
        for v in self.views:
            snap = v.reported_state(tx.id, k)
            if snap is not None:
                tally[snap] = tally.get(snap, 0) + 1
        return tally

    def accepts_state(self, tx: Transaction, snap: StateSnapshot) -> bool:
        return self._enough(self._state_support(tx).get(snap, 0))

    def accepts_trigger(self, snap: StateSnapshot, tx: Transaction) -> bool:
        k = self._min_depth()
        support = sum(1 for v in self.views if v.reported_trigger(snap, k) == tx)
        return self._enough(support)

    # -- reading

    def read_state(self, tx: Transaction, player: Optional[int] = None) -> StateSnapshot:
        """Confirmed state produced by ``tx``.

        With ``player`` set this is that player's local report; otherwise it
        is the state an above-epsilon fraction of players agree on.
        """
        if player is not None:
            snap = self.view(player).reported_state(tx.id, self.config.k)
            if snap is None:
                raise NotConfirmed(f"tx not {self.config.k} deep at player {player}")
            return snap
        tally = self._state_support(tx)
        best = None
        for snap, support in tally.items():
            if self._enough(support) and (best is None or support > tally[best]):
                best = snap
        if best is None:
            raise NotConfirmed("no state for tx is confirmed by the quorum")
        return best

    def read_tx(self, snap: StateSnapshot, player: Optional[int] = None) -> Transaction:
        k = self._min_depth()
        if player is not None:
            tx = self.view(player).reported_trigger(snap, self.config.k)
            if tx is None:
                raise UnknownState("state not confirmed at this player")
            return tx
        tally: dict[Transaction, int] = {}
        for v in self.views:
            tx = v.reported_trigger(snap, k)
            if tx is not None:
                tally[tx] = tally.get(tx, 0) + 1
        for tx, support in sorted(tally.items(), key=lambda kv: -kv[1]):
            if self._enough(support):
                return tx
        raise UnknownState("no confirmed transaction produced this state")

    def receipt(self, tx: Transaction) -> Any:
        """Receipt the quorum recorded for ``tx``, or ``None``."""
        k = self._min_depth()
        tally: dict[Any, int] = {}
        for v in self.views:
            if v.holds(tx.id, k) and tx.id in v.receipts:
                r = v.receipts[tx.id]
                tally[r] = tally.get(r, 0) + 1
        for r, support in tally.items():
            if self._enough(support):
                return r
        return None

    def find_player(
        self, tx: Transaction, k: Optional[int] = None, delta: Optional[int] = None
    ) -> list[int]:
        """Players holding ``tx`` at least ``k`` deep within ``delta`` rounds of submission."""
        k = self.config.k if k is None else k
        delta = self.config.delta if delta is None else delta
        sub = self.trace.submissions.get(tx.id)
        if sub is None:
            return []
        deadline = sub[0] + delta
        out = []
        for v in self.views:
            r = v.round_when_deep(tx.id, k)
            if r is not None and r <= deadline:
                out.append(v.player)
        return out

    def find_tx(self, player: int, k: Optional[int] = None) -> list[Transaction]:
        k = self.config.k if k is None else k
        return self.view(player).find_tx(k)

    def honest_prefixes_agree(self) -> bool:
        k = self.config.k
        honest = [self.views[p] for p in self.honest_players]
        if not honest:
            return True
        limit = min(v.tip for v in honest) - k
        if limit < 0:
            return True
        ref = honest[0].chain[: limit + 1]
        return all(
            [b.digest for b in v.chain[: limit + 1]] == [b.digest for b in ref] for v in honest
        )



# -- seeded workloads --------------------------------------------------------------


def simulate(config: LedgerConfig, n_txs: int = 8, rounds: Optional[int] = None) -> Ledger:
    """Drive a ledger with ``n_txs`` honest submissions spread over the run.

    The run lasts long enough for the last submission to pass its liveness
    deadline, so both audits can decide every transaction.
    """
    ledger = Ledger(config)
    rng = random.Random(config.seed ^ 0x5EED)
    signers = [sample_keys("SIG", f"sim/{config.seed}/{i}") for i in range(3)]
    active = max(1, n_txs // 2)
    if rounds is None:
        rounds = active + config.delta + 1
    nonces = [0] * len(signers)
    schedule: dict[int, int] = {}
    for _ in range(n_txs):
        r = rng.randrange(active)
        schedule[r] = schedule.get(r, 0) + 1
    for r in range(rounds):
        for _ in range(schedule.get(r, 0)):
            i = rng.randrange(len(signers))
            nonces[i] += 1
            payload = rng.randbytes(12)
            ledger.submit(Transaction.create(signers[i], payload, nonces[i]))
        ledger.advance_round()
    return ledger

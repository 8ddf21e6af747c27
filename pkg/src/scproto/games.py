"""Executable non-equivocation, non-repudiation and non-frameability games.

Each trial builds a fresh world (ledger, contract, keys) from a trial seed,
runs the game's steps and asks the adversary for candidate answers. A trial
is a win when any candidate satisfies the game's return condition:

``neqv``
    ``s* not in L1 and s* != s and Inspect(Tx)``, and the ledger accepts
    ``s*`` as the state of ``Tx``.
``nrep``
    ``Tx* not in L2 and Tx* != Tx and Inspect(Tx*)``, and the ledger accepts
    ``Tx*`` as the trigger of ``s'``.
``nfrm``
    ``Tx* not in Set(Tx) and Inspect(Tx*)``, with ``Tx*`` carrying the
    honest user's verification key.

The acceptance conjuncts make the answer a *valid* state or transaction; a
bare inequality would be won by any fabricated byte string.

Ledger faults turn off one assumption each and act as negative controls:
``no-replication`` for ``neqv``, ``no-confirmation`` for ``nrep`` and
``no-signature-check`` for ``nfrm``.
"""

from __future__ import annotations

import random
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Union

from scproto import cbe, rbe
from scproto.config import ConfigError
from scproto.contract import Call, Chain
from scproto.encoding import digest, encode
from scproto.ledger import (
    LedgerConfig,
    LedgerError,
    NotConfirmed,
    StateSnapshot,
    Transaction,
    UnknownState,
)
from scproto.primitives.schemes import SIG_BYTES, KeyMaterial, sample_keys

GAMES = ("neqv", "nrep", "nfrm")
PROTOCOLS = ("cbe", "rbe")
CAPABILITIES = frozenset({"control-minority", "divergent-state", "mutate-tx", "random-forge"})
CONTROL_FAULT = {
    "neqv": "no-replication",
    "nrep": "no-confirmation",
    "nfrm": "no-signature-check",
}
LEDGER_BEHAVIOURS = ("equivocate", "withhold", "censor")
HONEST_ENTRY = 0  # honest users hand their transactions to player 0


class ConfigurationError(ConfigError):
    pass


# -- oracles -------------------------------------------------------------------


class BlockchainOracle:
    """ReadState / ReadTx with the L1 and L2 bookkeeping sets."""

    def __init__(self, chain: Chain):
        self.chain = chain
        self.L1: dict[bytes, tuple[Transaction, StateSnapshot]] = {}
        self.L2: dict[bytes, tuple[StateSnapshot, Transaction]] = {}
        self.ledger_hits = 0
        self.log: list[tuple[str, Any]] = []

    def read_state(self, tx: Transaction) -> StateSnapshot:
        self.log.append(("ReadState", tx))
        hit = self.L1.get(tx.id)
        if hit is not None:
            return hit[1]
        self.ledger_hits += 1
        state = self.chain.read_state(tx)
        self.L1[tx.id] = (tx, state)
        return state

    def read_tx(self, state: StateSnapshot) -> Transaction:
        self.log.append(("ReadTx", state))
        hit = self.L2.get(state.key)
        if hit is not None:
            return hit[1]
        self.ledger_hits += 1
        tx = self.chain.read_tx(state)
        self.L2[state.key] = (state, tx)
        return tx

    def states(self) -> frozenset:
        return frozenset(s for _, s in self.L1.values())

    def txs(self) -> frozenset:
        return frozenset(t for _, t in self.L2.values())


class UserOracle:
    """Signs metadata on behalf of an honest user and remembers Set(Tx)."""

    def __init__(self, key: KeyMaterial, nonce: Callable[[], int]):
        self.key = key
        self._nonce = nonce
        self.set_tx: dict[bytes, Transaction] = {}

    def sign(self, metadata: bytes) -> Transaction:
        tx = self.set_tx.get(metadata)
        if tx is None:
            tx = Transaction.create(self.key, metadata, self._nonce())
            self.set_tx[metadata] = tx
        return tx

    def txs(self) -> frozenset:
        return frozenset(self.set_tx.values())


# -- adversaries -------------------------------------------------------------------


@dataclass(frozen=True)
class AdversaryStrategy:
    name: str
    capabilities: frozenset
    players: int = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "capabilities", frozenset(self.capabilities))

    def check(self, total_players: int, epsilon: float) -> None:
        unknown = self.capabilities - CAPABILITIES
        if unknown:
            raise ConfigurationError(f"unknown capabilities {sorted(unknown)}")
        needs_players = {"divergent-state", "mutate-tx"} & self.capabilities
        if needs_players and "control-minority" not in self.capabilities:
            raise ConfigurationError(f"{sorted(needs_players)} require control-minority")
        if "control-minority" in self.capabilities:
            if self.players < 1:
                raise ConfigurationError("control-minority needs at least one player")
            if self.players / total_players >= epsilon:
                raise ConfigurationError(
                    f"{self.players}/{total_players} players is not a minority below {epsilon}"
                )

    @property
    def controls(self) -> bool:
        return "control-minority" in self.capabilities


STRATEGIES = {
    "divergent-state": AdversaryStrategy(
        "divergent-state", frozenset({"control-minority", "divergent-state"})
    ),
    "mutate-tx": AdversaryStrategy("mutate-tx", frozenset({"control-minority", "mutate-tx"})),
    "random-forge": AdversaryStrategy("random-forge", frozenset({"random-forge"}), players=0),
    "full": AdversaryStrategy("full", CAPABILITIES),
}


def get_strategy(strategy: Union[str, AdversaryStrategy]) -> AdversaryStrategy:
    if isinstance(strategy, AdversaryStrategy):
        return strategy
    try:
        return STRATEGIES[strategy]
    except KeyError:
        raise ConfigurationError(f"unknown strategy {strategy!r}") from None


# -- protocol worlds ---------------------------------------------------------------


class World(ABC):
    """One protocol deployment with an honest user and an adversarial user."""

    chain: Chain
    honest: KeyMaterial
    adversary: KeyMaterial

    @abstractmethod
    def payload(self, role: str, variant: int) -> bytes:
        """Call payload for request number ``variant`` owned by ``role``."""

    @abstractmethod
    def encrypt(self, state: StateSnapshot) -> Any: ...

    @abstractmethod
    def decrypt(self, state: StateSnapshot, ct: Any) -> Any: ...

    @abstractmethod
    def next_nonce(self, key: KeyMaterial) -> int: ...

    def key(self, role: str) -> KeyMaterial:
        return self.honest if role == "honest" else self.adversary

    def request(self, role: str, variant: int) -> Transaction:
        key = self.key(role)
        return Transaction.create(key, self.payload(role, variant), self.next_nonce(key))

    def run(self, txs, entry: Optional[int] = HONEST_ENTRY) -> list[Transaction]:
        """Submit ``txs`` and advance until the accepted ones are confirmed."""
        ledger = self.chain.ledger
        accepted = [tx for tx in txs if ledger.submit(tx, entry=entry)]
        for _ in range(ledger.config.k + 1):
            ledger.advance_round()
        return accepted


VARIANTS = 3  # requests available per role


class CbeWorld(World):
    def __init__(self, config: LedgerConfig, seed: int, group: str = "mock"):
        self.honest = sample_keys("SIG", f"game/cbe/honest/{seed}")
        self.adversary = sample_keys("SIG", f"game/cbe/adversary/{seed}")
        expiry = cbe.month_end(2030, 12)
        self.day = cbe.to_day("2026-01-01")
        users, owners = [], {}
        for role, key in (("honest", self.honest), ("adversary", self.adversary)):
            for v in range(VARIANTS):
                users.append((f"{role}-{v}", expiry))
                owners[f"{role}-{v}"] = key
        users.append(("bystander", expiry))
        self.proto = cbe.CbeProtocol(config, group=group, m=3, seed=seed, users=users, owners=owners)
        self.chain = self.proto.chain
        self.expiry = expiry
        self.message = digest("msg", seed)[:16]

    def next_nonce(self, key: KeyMaterial) -> int:
        return self.proto.next_nonce(key)

    def payload(self, role: str, variant: int) -> bytes:
        req = cbe.RevocationRequest(f"{role}-{variant}", self.expiry, self.day)
        return Call(self.proto.instance, "revoke", req.encode()).encode()

    def encrypt(self, state: StateSnapshot):
        return self.proto.encrypt("bystander", 1, self.message)

    def decrypt(self, state: StateSnapshot, ct):
        table = cbe.read_table(state)
        cert = cbe.cbe_cert(self.proto.ca, self.proto.pms, 1, "bystander", table, self.proto.m)
        return self.proto.decrypt("bystander", cert, ct)


class RbeWorld(World):
    def __init__(self, config: LedgerConfig, seed: int, lam: int = 32):
        self.proto = rbe.RbeProtocol(config, seed=seed, lam=lam)
        self.chain = self.proto.chain
        self.honest = sample_keys("SIG", f"game/rbe/honest/{seed}")
        self.adversary = sample_keys("SIG", f"game/rbe/adversary/{seed}")
        for role in ("honest", "adversary"):
            for v in range(VARIANTS):
                self.proto.new_user(f"{role}-{v}", self.key(role))
        self.message = digest("msg", seed)[:16]

    def next_nonce(self, key: KeyMaterial) -> int:
        return self.proto.next_nonce(key)

    def payload(self, role: str, variant: int) -> bytes:
        u = self.proto.users[f"{role}-{variant}".encode()]
        aux = rbe.Registration(u.ident, u.pk).encode()
        return Call(self.proto.instance, "register", aux).encode()

    # the recipient is the first identity the state has registered

    def encrypt(self, state: StateSnapshot):
        pp, forest = rbe.read_params(state)
        if pp is None or not forest.order:
            return None
        return rbe.rbe_enc(self.proto.crs, pp, forest.order[0], self.message)

    def decrypt(self, state: StateSnapshot, ct):
        _, forest = rbe.read_params(state)
        if not forest.order or ct is None:
            return rbe.BOTTOM
        recipient = forest.order[0]
        opening = rbe.rbe_update(forest, recipient)
        return self.proto.decrypt(recipient, opening, ct)


def build_world(protocol: str, config: LedgerConfig, seed: int) -> World:
    if protocol == "cbe":
        return CbeWorld(config, seed)
    if protocol == "rbe":
        return RbeWorld(config, seed)
    raise ConfigurationError(f"unknown protocol {protocol!r}")


# -- witnesses and transcripts --------------------------------------------------------


@dataclass(frozen=True)
class Witness:
    """A winning tuple plus what is needed to re-evaluate it."""

    game: str
    trial: int
    candidate: Any  # s* for neqv, Tx* otherwise
    reference: Any  # s for neqv, Tx for nrep, None for nfrm
    anchor: Any  # Tx for neqv, s' for nrep, honest vk for nfrm
    seen: frozenset  # L1 states, L2 transactions, or Set(Tx)
    chain: Chain = field(compare=False, repr=False)

    def digest(self) -> bytes:
        def enc(x) -> bytes:
            if x is None:
                return b""
            if isinstance(x, bytes):
                return x
            return x.encode()

        return digest(
            "witness", self.game, self.trial, enc(self.candidate), enc(self.reference), enc(self.anchor)
        )


def _win_neqv(chain: Chain, s_star, s, tx, l1) -> bool:
    return (
        isinstance(s_star, StateSnapshot)
        and s_star not in l1
        and s_star != s
        and chain.inspect(tx)
        and chain.ledger.accepts_state(tx, s_star)
    )


def _win_nrep(chain: Chain, tx_star, tx, s_prime, l2) -> bool:
    return (
        isinstance(tx_star, Transaction)
        and tx_star not in l2
        and tx_star != tx
        and chain.inspect(tx_star)
        and chain.ledger.accepts_trigger(s_prime, tx_star)
    )


def _win_nfrm(chain: Chain, tx_star, vk, set_tx) -> bool:
    return (
        isinstance(tx_star, Transaction)
        and tx_star not in set_tx
        and tx_star.signer == vk
        and chain.inspect(tx_star)
    )


def recheck_witness(w: Witness) -> bool:
    """Re-evaluate the game's return condition for ``w`` against its ledger."""
    if w.game == "neqv":
        return _win_neqv(w.chain, w.candidate, w.reference, w.anchor, w.seen)
    if w.game == "nrep":
        return _win_nrep(w.chain, w.candidate, w.reference, w.anchor, w.seen)
    if w.game == "nfrm":
        return _win_nfrm(w.chain, w.candidate, w.anchor, w.seen)
    return False


@dataclass
class GameTranscript:
    game: str
    protocol: str
    strategy: str
    seed: int
    faults: frozenset = frozenset()
    trials: int = 0
    wins: int = 0
    witnesses: list[Witness] = field(default_factory=list)
    records: list[tuple[int, bool, bytes]] = field(default_factory=list)
    decryptions: int = 0  # trials whose honest decryption succeeded

    def add(self, trial: int, witness: Optional[Witness], decrypted: bool) -> None:
        self.trials += 1
        self.decryptions += int(decrypted)
        if witness is None:
            self.records.append((trial, False, b""))
            return
        self.wins += 1
        self.witnesses.append(witness)
        self.records.append((trial, True, witness.digest()))

    @property
    def win_rate(self) -> float:
        return self.wins / self.trials if self.trials else 0.0

    def lines(self) -> list[str]:
        return [
            encode([self.game, trial, int(win), wd]).hex() for trial, win, wd in self.records
        ]

    def summary(self) -> dict:
        return {
            "game": self.game,
            "protocol": self.protocol,
            "strategy": self.strategy,
            "seed": self.seed,
            "faults": sorted(self.faults),
            "trials": self.trials,
            "wins": self.wins,
            "decryptions": self.decryptions,
        }


# -- the games ---------------------------------------------------------------------------


def _controlled(chain: Chain):
    return [chain.ledger.views[p] for p in sorted(chain.ledger.config.adversary_players)]


def _tip_depth(chain: Chain) -> int:
    return max(v.tip for v in chain.ledger.views)


def _trial_seed(seed: int, game: str, protocol: str, trial: int) -> int:
    return int.from_bytes(digest("trial", seed, game, protocol, trial)[:8], "big")


def _is_message(result, expected: bytes) -> bool:
    return isinstance(result, bytes) and result == expected


def _play_neqv(world: World, adv: AdversaryStrategy, rng: random.Random, trial: int):
    chain = world.chain
    tx = world.request("adversary", 0)
    world.run([tx])
    s = chain.read_state(tx)
    ct = world.encrypt(s)
    oracle = BlockchainOracle(chain)
    oracle.read_state(tx)

    candidates: list[StateSnapshot] = []
    if "divergent-state" in adv.capabilities:
        views = _controlled(chain)
        for view in views:
            own = view.reported_state(tx.id, 0)
            if own is not None:
                candidates.append(own)
        # serve one fabricated state from a single controlled player
        fake = StateSnapshot(s.height, s.index, encode([b"forged", rng.randbytes(16), s.data]))
        views[0].state_overrides[tx.id] = fake
        candidates.append(fake)

    decrypted = _is_message(world.decrypt(s, ct), world.message)
    for s_star in candidates:
        world.decrypt(s_star, ct)
    l1 = oracle.states()
    for s_star in candidates:
        if _win_neqv(chain, s_star, s, tx, l1):
            return Witness("neqv", trial, s_star, s, tx, l1, chain), decrypted
    return None, decrypted


def _play_nrep(world: World, adv: AdversaryStrategy, rng: random.Random, trial: int):
    chain = world.chain
    tx = world.request("adversary", 0)
    other = world.request("adversary", 1)
    world.run([tx, other])
    s = chain.read_state(tx)
    ct = world.encrypt(s)
    s_prime = chain.read_state(tx)
    oracle = BlockchainOracle(chain)
    oracle.read_tx(s_prime)

    candidates: list[Transaction] = []
    if "mutate-tx" in adv.capabilities:
        # same request, fresh nonce: a replay the contract should refuse
        replay = Transaction.create(world.adversary, tx.payload, world.next_nonce(world.adversary))
        world.run([replay])
        candidates.append(replay)
        # claim a different, genuinely applied request triggered s'
        _controlled(chain)[0].trigger_overrides[s_prime.key] = (other, _tip_depth(chain))
        candidates.append(other)

    decrypted = _is_message(world.decrypt(s, ct), world.message)
    l2 = oracle.txs()
    for tx_star in candidates:
        if _win_nrep(chain, tx_star, tx, s_prime, l2):
            return Witness("nrep", trial, tx_star, tx, s_prime, l2, chain), decrypted
    return None, decrypted


def _play_nfrm(world: World, adv: AdversaryStrategy, rng: random.Random, trial: int):
    chain = world.chain
    user = UserOracle(world.honest, lambda: world.next_nonce(world.honest))
    queried = [user.sign(world.payload("honest", v)) for v in range(VARIANTS - 1)]

    candidates: list[Transaction] = []
    if "random-forge" in adv.capabilities:
        target = world.payload("honest", VARIANTS - 1)
        candidates.append(
            Transaction(target, rng.randbytes(SIG_BYTES), world.honest.public, rng.getrandbits(32))
        )
        for q in queried:
            candidates.append(Transaction(q.payload, q.signature, q.signer, q.nonce + 1))
            candidates.append(Transaction(target, q.signature, q.signer, q.nonce))
    honest_tx = queried[0]
    world.run([honest_tx])
    if candidates:
        world.run(candidates, entry=None)

    s = chain.read_state(honest_tx)
    ct = world.encrypt(s)
    s_prime = chain.read_state(honest_tx)
    decrypted = _is_message(world.decrypt(s_prime, ct), world.message)
    set_tx = user.txs()
    vk = world.honest.public
    for tx_star in candidates:
        if _win_nfrm(chain, tx_star, vk, set_tx):
            return Witness("nfrm", trial, tx_star, None, vk, set_tx, chain), decrypted
    return None, decrypted


_PLAY = {"neqv": _play_neqv, "nrep": _play_nrep, "nfrm": _play_nfrm}


def game_config(
    adv: AdversaryStrategy,
    trial: int,
    seed: int,
    faults=frozenset(),
    total_players: int = 5,
    k: int = 3,
    delta: int = 6,
    epsilon: float = 0.5,
) -> LedgerConfig:
    adv.check(total_players, epsilon)
    players = frozenset(range(total_players - adv.players, total_players)) if adv.controls else frozenset()
    if not players:
        behaviour = "honest"
    elif "divergent-state" in adv.capabilities and adv.name != "full":
        behaviour = "equivocate"
    elif adv.name == "full":
        behaviour = LEDGER_BEHAVIOURS[trial % len(LEDGER_BEHAVIOURS)]
    else:
        behaviour = "honest"
    return LedgerConfig(
        total_players=total_players,
        adversary_players=players,
        k=k,
        delta=delta,
        epsilon=epsilon,
        seed=seed,
        strategy=behaviour,
        faults=frozenset(faults),
    )


def run_game(
    game: str,
    protocol: str,
    strategy: Union[str, AdversaryStrategy] = "full",
    trials: int = 1000,
    seed: int = 0,
    faults=frozenset(),
    keep_witnesses: bool = True,
) -> GameTranscript:
    if game not in GAMES:
        raise ConfigurationError(f"unknown game {game!r}")
    if protocol not in PROTOCOLS:
        raise ConfigurationError(f"unknown protocol {protocol!r}")
    adv = get_strategy(strategy)
    transcript = GameTranscript(game, protocol, adv.name, seed, frozenset(faults))
    play = _PLAY[game]
    for trial in range(trials):
        tseed = _trial_seed(seed, game, protocol, trial)
        config = game_config(adv, trial, tseed, faults)
        world = build_world(protocol, config, tseed)
        try:
            witness, decrypted = play(world, adv, random.Random(tseed), trial)
        except (LedgerError, NotConfirmed, UnknownState):
            witness, decrypted = None, False
        if witness is not None and not keep_witnesses:
            witness = Witness(
                witness.game, trial, witness.candidate, witness.reference, witness.anchor,
                witness.seen, None,
            )
        transcript.add(trial, witness, decrypted)
    return transcript

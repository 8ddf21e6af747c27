import dataclasses

import pytest

from scproto import games
from scproto.encoding import decode, decode_int
from scproto.games import (
    CONTROL_FAULT,
    AdversaryStrategy,
    BlockchainOracle,
    ConfigurationError,
    UserOracle,
    build_world,
    game_config,
    recheck_witness,
    run_game,
)
from scproto.ledger import LedgerConfig, StateSnapshot, Transaction, UnknownState


@pytest.fixture(scope="module")
def world():
    w = build_world("cbe", LedgerConfig(seed=3), 3)
    txs = [w.request("adversary", 0), w.request("honest", 0)]
    w.run(txs)
    return w, txs


# -- oracles


def test_read_state_cache(world):
    w, (a, b) = world
    oracle = BlockchainOracle(w.chain)
    s1 = oracle.read_state(a)
    s2 = oracle.read_state(a)
    assert s1 == s2 and oracle.ledger_hits == 1 and len(oracle.L1) == 1
    oracle.read_state(b)
    assert len(oracle.L1) == 2


def test_read_tx_cache(world):
    w, (a, b) = world
    oracle = BlockchainOracle(w.chain)
    s = w.chain.read_state(a)
    assert oracle.read_tx(s) == oracle.read_tx(s) == a
    assert oracle.ledger_hits == 1 and len(oracle.L2) == 1
    with pytest.raises(UnknownState):
        oracle.read_tx(StateSnapshot(1, 0, b"nothing"))
    assert len(oracle.L2) == 1


def test_oracle_sets_equal_replay_of_log(world):
    w, (a, b) = world
    oracle = BlockchainOracle(w.chain)
    for t in (a, b, a, b, a):
        oracle.read_state(t)
    oracle.read_tx(w.chain.read_state(b))
    fresh = BlockchainOracle(w.chain)
    for kind, arg in oracle.log:
        (fresh.read_state if kind == "ReadState" else fresh.read_tx)(arg)
    assert fresh.states() == oracle.states() and fresh.txs() == oracle.txs()
    # order does not matter
    rev = BlockchainOracle(w.chain)
    for kind, arg in reversed(oracle.log):
        (rev.read_state if kind == "ReadState" else rev.read_tx)(arg)
    assert rev.states() == oracle.states()


def test_user_oracle(world):
    w, _ = world
    user = UserOracle(w.honest, lambda: w.next_nonce(w.honest))
    t1 = user.sign(b"meta-1")
    assert user.sign(b"meta-1") == t1 and len(user.set_tx) == 1
    user.sign(b"meta-2")
    assert len(user.set_tx) == 2
    assert all(t.verify() and t.signer == w.honest.public for t in user.txs())


# -- strategies


def test_capability_bounds():
    with pytest.raises(ConfigurationError):
        AdversaryStrategy("big", {"control-minority"}, players=3).check(5, 0.5)
    with pytest.raises(ConfigurationError):
        AdversaryStrategy("loose", {"divergent-state"}).check(5, 0.5)
    with pytest.raises(ConfigurationError):
        AdversaryStrategy("odd", {"time-travel"}).check(5, 0.5)
    with pytest.raises(ConfigurationError):
        run_game("neqv", "cbe", AdversaryStrategy("big", {"control-minority"}, players=3), trials=1)
    with pytest.raises(ConfigurationError):
        run_game("nope", "cbe", trials=1)
    with pytest.raises(ConfigurationError):
        run_game("neqv", "ibe", trials=1)


def test_full_strategy_cycles_ledger_behaviour():
    adv = games.get_strategy("full")
    seen = {game_config(adv, t, 0).strategy for t in range(3)}
    assert seen == {"equivocate", "withhold", "censor"}
    cfg = game_config(adv, 0, 0)
    assert cfg.adversary_players == frozenset({3, 4}) and cfg.honest_majority


# -- games


@pytest.mark.parametrize("protocol", ["cbe", "rbe"])
@pytest.mark.parametrize("game", ["neqv", "nrep", "nfrm"])
def test_no_wins_under_robust_ledger(game, protocol):
    t = run_game(game, protocol, trials=12, seed=1)
    assert t.wins == 0 and t.witnesses == []
    assert t.decryptions == t.trials == 12


@pytest.mark.parametrize("protocol", ["cbe", "rbe"])
@pytest.mark.parametrize("game", ["neqv", "nrep", "nfrm"])
def test_broken_assumption_controls_win(game, protocol):
    t = run_game(game, protocol, trials=6, seed=2, faults={CONTROL_FAULT[game]})
    assert t.wins > 0
    assert all(recheck_witness(w) for w in t.witnesses)
    assert sum(win for _, win, _ in t.records) == t.wins


def test_random_forge_strategy_alone():
    t = run_game("nfrm", "rbe", strategy="random-forge", trials=20, seed=4)
    assert t.wins == 0


def test_mutated_witness_fails_recheck():
    t = run_game("nfrm", "cbe", trials=3, seed=5, faults={"no-signature-check"})
    w = t.witnesses[0]
    honest = next(iter(w.seen))
    assert not recheck_witness(dataclasses.replace(w, candidate=honest))
    neqv = run_game("neqv", "cbe", trials=3, seed=5, faults={"no-replication"}).witnesses[0]
    assert not recheck_witness(dataclasses.replace(neqv, candidate=neqv.reference))
    nrep = run_game("nrep", "rbe", trials=3, seed=5, faults={"no-confirmation"}).witnesses[0]
    assert not recheck_witness(dataclasses.replace(nrep, candidate=nrep.reference))
    assert not recheck_witness(dataclasses.replace(w, game="other"))


def test_transcript_export_and_determinism():
    a = run_game("nrep", "cbe", trials=4, seed=9, faults={"no-confirmation"})
    b = run_game("nrep", "cbe", trials=4, seed=9, faults={"no-confirmation"})
    assert a.lines() == b.lines()
    for line, (trial, win, wd) in zip(a.lines(), a.records):
        g, tr, flag, digest = decode(bytes.fromhex(line), 4)
        assert (g, decode_int(tr), bool(decode_int(flag)), digest) == (b"nrep", trial, win, wd)
    assert a.summary()["wins"] == a.wins and 0 < a.win_rate <= 1


def test_witnesses_can_be_dropped():
    t = run_game("nfrm", "cbe", trials=2, seed=1, faults={"no-signature-check"}, keep_witnesses=False)
    assert t.wins and all(w.chain is None for w in t.witnesses)
    assert isinstance(t.witnesses[0].candidate, Transaction)

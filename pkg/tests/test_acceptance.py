"""Acceptance suite: one PASS/FAIL line per primary criterion.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are
printed even when output capture is on.
"""

import dataclasses
import itertools
import random
import time

import pytest

from scproto import cbe
from scproto.cbe import (
    SerialAllocator,
    cbe_cert,
    cbe_dec,
    cbe_enc,
    cbe_keygen,
    cbe_setup,
    subset_cover,
)
from scproto.cli import ScenarioConfig, run_scenario
from scproto.games import CONTROL_FAULT, GAMES, recheck_witness, run_game
from scproto.ledger import LedgerConfig, audit_liveness, audit_persistence, simulate
from scproto.primitives import get_group
from scproto.rbe import (
    GET_UPD,
    MerkleOpening,
    RbeProtocol,
    rbe_setup,
    rbe_update,
    register,
    root_history,
    verify_opening,
)


@pytest.fixture
def verdict(capsys, request):
    def emit(ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {request.node.name}"
        if detail:
            line += f"  ({detail})"
        with capsys.disabled():
            print("\n" + line)
        assert ok, detail

    return emit


def test_ledger_robustness(verdict):
    start = time.perf_counter()
    failures = []
    for strategy in ("withhold", "censor", "equivocate"):
        for seed in range(1000):
            cfg = LedgerConfig(5, {3, 4}, k=3, delta=6, epsilon=0.5, seed=seed, strategy=strategy)
            trace = simulate(cfg).trace
            if not (audit_persistence(trace) and audit_liveness(trace)):
                failures.append((strategy, seed))
    elapsed = time.perf_counter() - start
    caught = {}
    for strategy in ("withhold", "censor", "equivocate"):
        for seed in range(10):
            cfg = LedgerConfig(5, {3, 4}, seed=seed, strategy=strategy, faults={"no-replication"})
            trace = simulate(cfg).trace
            if not (audit_persistence(trace) and audit_liveness(trace)):
                caught[strategy] = seed
                break
    ok = not failures and len(caught) == 3 and elapsed < 60
    verdict(ok, f"3000 runs in {elapsed:.1f}s, failures={failures[:3]}, controls caught at {caught}")


def _identity_holds(g, s_c, x, s_b, r, T, P_k, P_b):
    P = g.generator
    left = g.pair(r * P, s_c * T + x * P_k + s_b * P_b)
    right = (g.pair(s_c * P, T) ** r) * (g.pair(s_b * P, P_b) ** r) * g.pair(x * P, r * P_k)
    return left == right


def test_cbe_algebra(verdict):
    start = time.perf_counter()
    g = get_group("mock")
    T, P_k, P_b = (g.hash_to_g1("H1", t) for t in (b"T", b"Pk", b"Pb"))
    exhaustive = all(
        _identity_holds(g, *s, T, P_k, P_b) for s in itertools.product(range(1, 6), repeat=4)
    )
    rng = random.Random(2024)
    randomised = all(
        _identity_holds(
            g,
            *(g.random_scalar(rng) for _ in range(4)),
            *(g.hash_to_g1("H1", f"{i}/{j}".encode()) for j in range(3)),
        )
        for i in range(1000)
    )

    ca, pms = cbe_setup("mock", rng=rng)
    alloc = SerialAllocator(4)
    users = [cbe_keygen(pms, f"u{i}".encode(), alloc, rng) for i in range(16)]
    revoked = {3, 9, 12}
    rows = tuple(
        cbe.RevocationRow(i + 1, f"u{i}", cbe.REVOKED if i in revoked else cbe.VALID, 0, b"", u.sn)
        for i, u in enumerate(users)
    )
    table = cbe.RevocationTable(rows)
    valid = [i for i in range(16) if i not in revoked]
    trips = 0
    for trial in range(100):
        i = valid[trial % len(valid)]
        period = 1 + rng.randrange(12)
        msg = rng.randbytes(rng.randrange(0, 64))
        cert = cbe_cert(ca, pms, period, f"u{i}", table, 4)
        ct = cbe_enc(pms, users[i].info, users[i].p_B, users[i].sn, period, msg, g.random_scalar(rng))
        trips += cbe_dec(users[i], cert, pms, ct) == msg
    bottoms = all(
        cbe_cert(ca, pms, period, f"u{i}", table, 4) is None
        and cbe_dec(
            users[i], None, pms, cbe_enc(pms, users[i].info, users[i].p_B, users[i].sn, period, b"x")
        ) is None
        for i in revoked
        for period in range(1, 13)
    )
    elapsed = time.perf_counter() - start
    ok = exhaustive and randomised and trips == 100 and bottoms and elapsed < 30
    verdict(ok, f"exhaustive={exhaustive} random={randomised} round trips {trips}/100 "
                f"revoked-bottom={bottoms} in {elapsed:.1f}s")


def test_subset_cover(verdict):
    leaves = ["".join(b) for b in itertools.product("01", repeat=3)]
    bad = []
    for mask in range(256):
        revoked = {leaf for i, leaf in enumerate(leaves) if mask >> i & 1}
        cover = subset_cover(3, revoked)
        covered = [leaf for leaf in leaves if any(leaf.startswith(p) for p in cover)]
        # brute force: each leaf covered exactly once, revoked leaves never
        exact = sorted(covered) == sorted(set(leaves) - revoked) and len(covered) == len(set(covered))
        if not exact:
            bad.append(mask)
    verdict(not bad, f"256 subsets, mismatches={bad}")


def test_rbe_forest_law(verdict):
    _, pp, forest = rbe_setup(32, seed=0)
    bad = []
    merges = 0
    for n in range(1, 257):
        forest, m = register(forest, pp.hks, f"id-{n}".encode(), n.to_bytes(32, "big"))
        merges += m
        # a set bit at position b is a tree of 2^b leaves, b + 1 levels deep
        bits = sorted((b + 1 for b in range(n.bit_length()) if n >> b & 1), reverse=True)
        if sorted(forest.depths, reverse=True) != bits or merges != n - bin(n).count("1"):
            bad.append(n)
    verdict(not bad, f"n=1..256, mismatches={bad[:5]}")


def test_rbe_update_bound(verdict):
    start = time.perf_counter()
    _, _, changes = root_history(1024, lam=32)
    elapsed = time.perf_counter() - start
    worst = max(changes.values())
    verdict(worst <= 10 and len(changes) == 1024 and elapsed < 120, f"max changes {worst} in {elapsed:.1f}s")


def test_rbe_end_to_end(verdict):
    proto = RbeProtocol(LedgerConfig(seed=16), seed=16, lam=32)
    idents = [f"u{i}".encode() for i in range(16)]
    stale = []
    fresh_ok = True
    for i, ident in enumerate(idents):
        proto.register([ident])
        # openings taken now go stale whenever a later merge moves their root
        stale.extend((prev, proto.update(prev)) for prev in idents[: i + 1])
        fresh_ok &= all(
            proto.decrypt(x, proto.update(x), proto.encrypt(x, b"m" + x)) == b"m" + x
            for x in idents[: i + 1]
        )
    pp = proto.pp()
    current = {root for root, _ in pp.roots}
    getupd = recovered = 0
    pre_merge = [(x, op) for x, op in stale if op.root not in current]
    for x, op in pre_merge:
        ct = proto.encrypt(x, b"later")
        getupd += proto.decrypt(x, op, ct) is GET_UPD
        recovered += proto.decrypt(x, proto.update(x), ct) == b"later"

    rng = random.Random(10_000)
    forest = proto.forest()
    accepted = 0
    for trial in range(10_000):
        ident = rng.choice(idents) if trial % 2 else rng.randbytes(rng.randrange(1, 8))
        ti = rng.randrange(len(pp.roots))
        depth = pp.roots[ti][1]
        if trial % 3 == 0:
            honest = rbe_update(forest, rng.choice(idents))
            path = list(honest.path)
            if path:
                j = rng.randrange(len(path))
                h0, h1, b = path[j]
                path[j] = (rng.randbytes(len(h0)), h1, b)
            forged = dataclasses.replace(honest, leaf=(ident, rng.randbytes(32)), path=tuple(path))
        else:
            path = tuple(
                (rng.randbytes(4), rng.randbytes(4), rng.randrange(2)) for _ in range(depth - 1)
            )
            forged = MerkleOpening((ident, rng.randbytes(32)), path, pp.roots[ti][0], ti)
        accepted += verify_opening(pp, ti, ident, forged)
    ok = fresh_ok and pre_merge and getupd == recovered == len(pre_merge) and accepted == 0
    verdict(bool(ok), f"fresh ok={fresh_ok}, {len(pre_merge)} stale openings: GetUpd {getupd}, "
                      f"recovered {recovered}; forged accepted {accepted}/10000")


def test_security_games(verdict):
    start = time.perf_counter()
    wins = 0
    undecrypted = 0
    runs = 0
    for seed in range(10):
        for protocol in ("cbe", "rbe"):
            for game in GAMES:
                t = run_game(game, protocol, trials=1000, seed=seed, keep_witnesses=False)
                wins += t.wins
                undecrypted += t.trials - t.decryptions
                runs += t.trials
    controls = {}
    for protocol in ("cbe", "rbe"):
        for game in GAMES:
            t = run_game(game, protocol, trials=10, seed=0, faults={CONTROL_FAULT[game]})
            controls[f"{protocol}/{game}"] = t.wins if all(map(recheck_witness, t.witnesses)) else 0
    elapsed = time.perf_counter() - start
    ok = wins == 0 and undecrypted == 0 and runs == 60_000 and all(v >= 1 for v in controls.values())
    verdict(ok, f"{runs} trials, wins={wins}, controls={controls}, {elapsed:.0f}s")


def test_gas_arithmetic(verdict):
    report = run_scenario(ScenarioConfig(protocol="rbe", registrations=16))
    merges = report.gas["merges_per_block"]
    users = report.gas["users_per_block"]
    ok = report.gas["block_gas_limit"] == 12_134_453 and merges == 30 and abs(users - 14) <= 1
    verdict(ok, f"merges per block {merges}, users per block {users}")

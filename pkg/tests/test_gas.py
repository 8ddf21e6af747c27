import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scproto.config import ConfigError
from scproto.gas import (
    BLOCK_GAS_LIMIT,
    DEFAULT_COSTS,
    MERGE_COST,
    GasTable,
    gas_estimate,
    read_trace,
    registration_gas,
    users_per_block,
    write_trace,
)


def brute_users(limit, base, merge):
    # replay registrations one by one against an empty forest
    spent, sizes, users = 0, [], 0
    while True:
        cost = base
        sizes.append(1)
        while len(sizes) > 1 and sizes[-1] == sizes[-2]:
            sizes[-2:] = [sizes[-1] * 2]
            cost += merge
        if spent + cost > limit:
            return users
        spent += cost
        users += 1


def test_default_table_affords_thirty_merges():
    assert BLOCK_GAS_LIMIT == 12_134_453
    assert gas_estimate([]).merges_per_block == 30
    assert BLOCK_GAS_LIMIT // MERGE_COST == 30


def test_spec_example_cost_rounds_down_to_29():
    table = GasTable(costs={**DEFAULT_COSTS, "merge": 404_482})
    assert gas_estimate([], table).merges_per_block == 29


def test_users_per_block_near_fourteen():
    table = GasTable()
    users = users_per_block(table)
    assert abs(users - 14) <= 1
    assert users == brute_users(BLOCK_GAS_LIMIT, MERGE_COST, MERGE_COST)


@pytest.mark.parametrize("base,merge", [(1, 1), (3, 5), (10, 1), (7, 7)])
def test_users_per_block_matches_replay(base, merge):
    table = GasTable(200, {"register-base": base, "merge": merge})
    assert users_per_block(table) == brute_users(200, base, merge)


def test_registration_gas_counts_merges():
    table = GasTable(10**9, {"register-base": 1, "merge": 100})
    for u in range(1, 70):
        assert registration_gas(u, table) == u + 100 * (u - bin(u).count("1"))


def test_zero_length_trace():
    est = gas_estimate([])
    assert est.per_block == () and est.total == 0 and dict(est.ops) == {}


ops = st.dictionaries(st.sampled_from(sorted(DEFAULT_COSTS)), st.integers(0, 40), max_size=5)


@given(st.lists(ops, max_size=10))
@settings(max_examples=200, deadline=None)
def test_gas_is_additive(trace):
    table = GasTable()
    est = gas_estimate(trace, table)
    for block, g in zip(trace, est.per_block):
        assert g == sum(DEFAULT_COSTS[op] * n for op, n in block.items())
    assert est.total == sum(est.per_block)
    halves = gas_estimate(trace[: len(trace) // 2]).total + gas_estimate(trace[len(trace) // 2 :]).total
    assert halves == est.total
    assert est.over_limit == tuple(h for h, g in enumerate(est.per_block, 1) if g > BLOCK_GAS_LIMIT)


def test_table_validation():
    with pytest.raises(ConfigError):
        GasTable(costs={"merge": 0})
    with pytest.raises(ConfigError):
        GasTable(10, {"merge": 11})
    with pytest.raises(ConfigError):
        GasTable().cost("teleport")


def test_table_from_file(tmp_path):
    path = tmp_path / "gas.conf"
    path.write_text("block_gas_limit = 2000000\nmerge = 20000\nregister-base = 5\n")
    table = GasTable.from_file(path)
    assert table.block_gas_limit == 2_000_000 and table.cost("merge") == 20_000
    assert gas_estimate([], table).merges_per_block == 100
    path.write_text("merge = 1\nread = -3\n")
    with pytest.raises(ConfigError) as err:
        GasTable.from_file(path)
    assert err.value.line == 2 and err.value.field == "read"


def test_trace_round_trip(tmp_path):
    trace = [{"merge": 3, "register-base": 4}, {}, {"read": 2}]
    path = tmp_path / "t.trace"
    write_trace(trace, path)
    assert read_trace(path) == trace
    path.write_text('{"block": 1}\n')
    with pytest.raises(ConfigError) as err:
        read_trace(path)
    assert err.value.line == 1

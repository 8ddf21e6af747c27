"""Gas accounting for contract executions.

Gas is bookkeeping only: nothing halts when a block runs over the limit.
Costs come from a :class:`GasTable`; the default table is calibrated so
that one block affords thirty tree merges, not measured on a real chain.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Optional, Sequence, Union

from scproto.config import ConfigError, read_kv, take

BLOCK_GAS_LIMIT = 12_134_453
# largest cost with floor(limit / cost) == 30
MERGE_COST = BLOCK_GAS_LIMIT // 30

DEFAULT_COSTS = {
    "deploy": 1_250_000,
    "setup": 160_000,
    "enroll": 66_000,
    "revoke": 44_000,
    "register-base": MERGE_COST,
    "merge": MERGE_COST,
    "read": 2_600,
}


@dataclass(frozen=True)
class GasTable:
    block_gas_limit: int = BLOCK_GAS_LIMIT
    costs: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_COSTS))

    def __post_init__(self) -> None:
        object.__setattr__(self, "costs", MappingProxyType(dict(self.costs)))
        for op, cost in self.costs.items():
            if cost <= 0:
                raise ConfigError("cost must be positive", field=op)
        if self.block_gas_limit <= 0:
            raise ConfigError("limit must be positive", field="block_gas_limit")
        if self.costs and self.block_gas_limit < max(self.costs.values()):
            raise ConfigError("limit below the largest single cost", field="block_gas_limit")

    def cost(self, op: str) -> int:
        try:
            return self.costs[op]
        except KeyError:
            raise ConfigError(f"no gas cost for op {op!r}", field=op) from None

    def block_gas(self, ops: Mapping[str, int]) -> int:
        return sum(self.cost(op) * n for op, n in ops.items())

    @classmethod
    def from_entries(cls, entries: dict) -> "GasTable":
        costs = dict(DEFAULT_COSTS)
        for key, (_, lineno) in entries.items():
            if key == "block_gas_limit":
                continue
            costs[key] = take(entries, key, int, 0)
        limit = take(entries, "block_gas_limit", int, BLOCK_GAS_LIMIT)
        try:
            return cls(limit, costs)
        except ConfigError as exc:
            if exc.field in entries:
                raise ConfigError(
                    str(exc).split(": ", 1)[-1], line=entries[exc.field][1], field=exc.field
                ) from exc
            raise

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "GasTable":
        return cls.from_entries(read_kv(path))

    def to_dict(self) -> dict:
        return {"block_gas_limit": self.block_gas_limit, "costs": dict(sorted(self.costs.items()))}


# -- op traces -------------------------------------------------------------------
#
# A trace is one op-count map per block, in height order.

OpTrace = Sequence[Mapping[str, int]]


def trace_lines(trace: OpTrace) -> list[str]:
    return [
        json.dumps({"block": h, "ops": dict(sorted(ops.items()))}, sort_keys=True)
        for h, ops in enumerate(trace, start=1)
    ]


def write_trace(trace: OpTrace, path: Union[str, Path]) -> None:
    Path(path).write_text("".join(line + "\n" for line in trace_lines(trace)))


def read_trace(path: Union[str, Path]) -> list[dict[str, int]]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            ops = {str(k): int(v) for k, v in record["ops"].items()}
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise ConfigError(f"bad trace record ({exc})", line=lineno) from exc
        out.append(ops)
    return out


def chain_trace(chain, player: Optional[int] = None) -> list[dict[str, int]]:
    """Per-block op counts from the receipts at one honest player."""
    if player is None:
        player = chain.ledger.honest_players[0]
    view = chain.ledger.view(player)
    trace = []
    for block in view.chain[1:]:
        ops: dict[str, int] = {}
        for tx in block.txs:
            receipt = view.receipts.get(tx.id)
            if receipt is None or not receipt.applied:
                continue
            for op, n in receipt.ops:
                ops[op] = ops.get(op, 0) + n
        trace.append(ops)
    return trace


# -- capacity ------------------------------------------------------------------------


def registration_gas(users: int, table: GasTable) -> int:
    """Gas for ``users`` registrations into an empty forest.

    Registering the i-th identity merges once per trailing one bit of
    ``i - 1``, so ``u`` registrations cost ``u - popcount(u)`` merges.
    """
    merges = users - bin(users).count("1")
    return users * table.cost("register-base") + merges * table.cost("merge")


def users_per_block(table: GasTable) -> int:
    users = 0
    while registration_gas(users + 1, table) <= table.block_gas_limit:
        users += 1
    return users


@dataclass(frozen=True)
class GasEstimate:
    per_block: tuple[int, ...]
    ops: Mapping[str, int]
    merges_per_block: int
    users_per_block: int
    block_gas_limit: int

    @property
    def total(self) -> int:
        return sum(self.per_block)

    @property
    def over_limit(self) -> tuple[int, ...]:
        return tuple(h for h, g in enumerate(self.per_block, start=1) if g > self.block_gas_limit)

    def to_dict(self) -> dict:
        return {
            "per_block": list(self.per_block),
            "total": self.total,
            "ops": dict(sorted(self.ops.items())),
            "merges_per_block": self.merges_per_block,
            "users_per_block": self.users_per_block,
            "block_gas_limit": self.block_gas_limit,
            "over_limit": list(self.over_limit),
        }


def gas_estimate(trace: Iterable[Mapping[str, int]], table: Optional[GasTable] = None) -> GasEstimate:
    table = GasTable() if table is None else table
    per_block = []
    totals: dict[str, int] = {}
    for ops in trace:
        per_block.append(table.block_gas(ops))
        for op, n in ops.items():
            totals[op] = totals.get(op, 0) + n
    return GasEstimate(
        tuple(per_block),
        MappingProxyType(totals),
        table.block_gas_limit // table.cost("merge"),
        users_per_block(table),
        table.block_gas_limit,
    )

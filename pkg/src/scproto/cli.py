"""Scenario runner and command line front end.

Three subcommands::

    scproto run   --config scenario.conf [--seed N] [--out report.json]
    scproto games --config scenario.conf [--seed N] [--out report.json]
    scproto gas   [--config gas.conf] [--trace run.trace] [--out report.json]

Exit status is 0 on success, 1 when an invariant check fails and 2 for a
bad configuration.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from scproto import cbe, rbe
from scproto.config import ConfigError, read_kv, reject_unknown, str_list, take
from scproto.games import GAMES, STRATEGIES, run_game
from scproto.gas import (
    GasTable,
    chain_trace,
    gas_estimate,
    read_trace,
    trace_lines,
    write_trace,
)
from scproto.ledger import FAULTS, LedgerConfig, audit_liveness, audit_persistence

PROTOCOLS = ("cbe", "rbe")
SCENARIO_KEYS = (
    "protocol",
    "users",
    "revoke",
    "periods",
    "registrations",
    "games",
    "game_protocols",
    "game_trials",
    "game_strategy",
    "game_faults",
    "gas",
    "output",
    "seed",
    "group",
    "m",
)
DEFAULT_EXPIRY = cbe.to_day("2030-12-31")


@dataclass(frozen=True)
class ScenarioConfig:
    protocol: str = "cbe"
    ledger: LedgerConfig = field(default_factory=LedgerConfig)
    users: int = 0
    revoke: int = 0
    periods: int = 1
    registrations: int = 0
    games: tuple[str, ...] = ()
    game_protocols: tuple[str, ...] = PROTOCOLS
    game_trials: int = 20
    game_strategy: str = "full"
    game_faults: frozenset = frozenset()
    gas: Optional[str] = None
    output: Optional[str] = None
    seed: int = 0
    group: str = "mock"
    m: Optional[int] = None

    def __post_init__(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}", field="protocol")
        for name in ("users", "revoke", "periods", "registrations", "game_trials"):
            if getattr(self, name) < 0:
                raise ConfigError("count must be >= 0", field=name)
        if self.revoke > self.users:
            raise ConfigError("cannot revoke more users than exist", field="revoke")
        if self.gas is not None and not Path(self.gas).is_file():
            raise ConfigError(f"gas table {self.gas!r} does not exist", field="gas")
        if self.m is not None and self.m < 1:
            raise ConfigError("m must be >= 1", field="m")
        for name, allowed in (("games", GAMES), ("game_protocols", PROTOCOLS)):
            unknown = set(getattr(self, name)) - set(allowed)
            if unknown:
                raise ConfigError(f"unknown entries {sorted(unknown)}", field=name)
        if self.game_strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.game_strategy!r}", field="game_strategy")
        unknown = set(self.game_faults) - set(FAULTS)
        if unknown:
            raise ConfigError(f"unknown faults {sorted(unknown)}", field="game_faults")
        if self.group not in ("mock", "curve"):
            raise ConfigError("group must be mock or curve", field="group")

    @property
    def tree_depth(self) -> int:
        if self.m is not None:
            return self.m
        return max(1, (max(self.users, 1) - 1).bit_length())

    def gas_table(self) -> GasTable:
        return GasTable() if self.gas is None else GasTable.from_file(self.gas)

    def canonical(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, LedgerConfig):
                value = {
                    k: sorted(v) if isinstance(v, frozenset) else v
                    for k, v in dataclasses.asdict(value).items()
                }
            elif isinstance(value, (frozenset, tuple)):
                value = sorted(value) if isinstance(value, frozenset) else list(value)
            out[f.name] = value
        return out

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_entries(cls, entries: dict, base: Optional[Path] = None) -> "ScenarioConfig":
        reject_unknown(entries, set(SCENARIO_KEYS) | {"ledger." + k for k in LedgerConfig.KEYS})
        d = cls()

        def get(name, conv):
            return take(entries, name, conv, getattr(d, name))

        def optional_path(value: str) -> Optional[str]:
            if not value:
                return None
            path = Path(value)
            if base is not None and not path.is_absolute():
                path = base / path
            return str(path)

        seed = get("seed", int)
        ledger = LedgerConfig.from_entries(entries, prefix="ledger.")
        if "ledger.seed" not in entries:
            ledger = dataclasses.replace(ledger, seed=seed)
        try:
            return cls(
                protocol=get("protocol", str),
                ledger=ledger,
                users=get("users", int),
                revoke=get("revoke", int),
                periods=get("periods", int),
                registrations=get("registrations", int),
                games=get("games", str_list),
                game_protocols=get("game_protocols", str_list),
                game_trials=get("game_trials", int),
                game_strategy=get("game_strategy", str),
                game_faults=get("game_faults", lambda v: frozenset(str_list(v))),
                gas=take(entries, "gas", optional_path, None),
                output=take(entries, "output", optional_path, None),
                seed=seed,
                group=get("group", str),
                m=take(entries, "m", int, None),
            )
        except ConfigError as exc:
            if exc.line is None and exc.field in entries:
                raise ConfigError(
                    str(exc).split(": ", 1)[-1], line=entries[exc.field][1], field=exc.field
                ) from exc
            raise

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ScenarioConfig":
        return cls.from_entries(read_kv(path), base=Path(path).parent)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return dataclasses.replace(self, seed=seed, ledger=dataclasses.replace(self.ledger, seed=seed))


@dataclass
class Report:
    scenario: str
    protocol: str
    seed: int
    ops: dict[str, int] = field(default_factory=dict)
    blocks: list[dict] = field(default_factory=list)
    gas: dict = field(default_factory=dict)
    state: dict = field(default_factory=dict)
    games: list[dict] = field(default_factory=list)
    verdicts: dict[str, bool] = field(default_factory=dict)
    trace: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def text(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.text().encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "Report":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown report fields {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def parse(cls, text: str) -> "Report":
        return cls.from_dict(json.loads(text))


def emit_report(report: Report, path: Union[str, Path]) -> Path:
    """Write ``report`` as sorted, indented JSON; raises ``OSError`` on failure."""
    path = Path(path)
    path.write_text(report.text())
    return path


def load_report(path: Union[str, Path]) -> Report:
    return Report.parse(Path(path).read_text())


# -- scenarios ------------------------------------------------------------------------------


def _cbe_users(n: int) -> list[tuple[str, int, bool]]:
    out = []
    for i in range(n):
        if i < len(cbe.EXAMPLE_USERS):
            name, year, month, flagged = cbe.EXAMPLE_USERS[i]
            out.append((name, cbe.month_end(year, month), flagged))
        else:
            out.append((f"user-{i + 1}", DEFAULT_EXPIRY, False))
    return out


def _revoked_names(users: list[tuple[str, int, bool]], count: int) -> list[str]:
    # flagged example users first, then the most recent enrollments
    order = [u for u in users if u[2]] + [u for u in reversed(users) if not u[2]]
    return sorted((u[0] for u in order[:count]), key=[u[0] for u in users].index)


def _run_cbe(cfg: ScenarioConfig, report: Report):
    users = _cbe_users(cfg.users)
    proto = cbe.CbeProtocol(
        cfg.ledger,
        group=cfg.group,
        m=cfg.tree_depth,
        seed=cfg.seed,
        users=[(name, expiry) for name, expiry, _ in users],
    )
    revoked = _revoked_names(users, cfg.revoke)
    day = cbe.to_day("2021-06-01")
    if revoked:
        proto.chain.execute_many(
            proto.request(name, min(day, proto.users[name].expiry)) for name in revoked
        )
    table = proto.table()
    reads = 1
    correct = bottom = True
    for period in range(1, cfg.periods + 1):
        for name, _, _ in users:
            cert = proto.certify(period, name)
            reads += 1
            message = f"{name}/{period}".encode()
            out = proto.decrypt(name, cert, proto.encrypt(name, period, message))
            if name in revoked:
                bottom &= cert is None and out is None
            else:
                correct &= out == message
    report.state = {
        "table": table.lines(),
        "revoked": revoked,
        "tree_depth": cfg.tree_depth,
    }
    report.verdicts["cbe.decrypt-correct"] = bool(correct)
    report.verdicts["cbe.revoked-bottom"] = bool(bottom)
    report.verdicts["cbe.table-revoked"] = sorted(
        r.user for r in table.rows if r.state == cbe.REVOKED
    ) == sorted(revoked)
    return proto.chain, reads


def _run_rbe(cfg: ScenarioConfig, report: Report):
    proto = rbe.RbeProtocol(cfg.ledger, seed=cfg.seed)
    idents = [f"id-{i + 1}".encode() for i in range(cfg.registrations)]
    receipts = proto.register(idents)
    merges = sum(dict(r.ops).get("merge", 0) for r in receipts if r is not None)
    forest = proto.forest()
    n = cfg.registrations
    # a tree of 2^b leaves has b + 1 levels
    expected_depths = tuple(sorted((b + 1 for b in range(n.bit_length()) if n >> b & 1), reverse=True))
    reads = 1
    correct = True
    for ident in idents:
        opening = proto.update(ident)
        reads += 1
        message = b"to " + ident
        correct &= proto.decrypt(ident, opening, proto.encrypt(ident, message)) == message
    report.state = {
        "depths": list(forest.depths),
        "merges": merges,
        "registrations": n,
        "roots": [[root.hex(), d] for root, d in proto.pp().roots],
    }
    report.verdicts["rbe.all-applied"] = all(r is not None and r.applied for r in receipts)
    report.verdicts["rbe.forest-law"] = tuple(sorted(forest.depths, reverse=True)) == expected_depths
    report.verdicts["rbe.merge-count"] = merges == n - bin(n).count("1")
    report.verdicts["rbe.decrypt-correct"] = bool(correct)
    return proto.chain, reads


def run_games(cfg: ScenarioConfig) -> list[dict]:
    out = []
    for protocol in cfg.game_protocols:
        for game in cfg.games:
            transcript = run_game(
                game,
                protocol,
                strategy=cfg.game_strategy,
                trials=cfg.game_trials,
                seed=cfg.seed,
                faults=cfg.game_faults,
                keep_witnesses=False,
            )
            out.append(transcript.summary())
    return out


def run_scenario(cfg: ScenarioConfig, games: bool = True) -> Report:
    report = Report(cfg.digest(), cfg.protocol, cfg.seed)
    table = cfg.gas_table()
    trace: list[dict[str, int]] = []
    active = cfg.users if cfg.protocol == "cbe" else cfg.registrations
    if active:
        runner = _run_cbe if cfg.protocol == "cbe" else _run_rbe
        chain, reads = runner(cfg, report)
        trace = chain_trace(chain)
        # off-chain reads are billed to the last block
        if trace and reads:
            trace[-1]["read"] = trace[-1].get("read", 0) + reads
        ledger_trace = chain.ledger.trace
        report.verdicts["ledger.persistence"] = bool(audit_persistence(ledger_trace))
        report.verdicts["ledger.liveness"] = bool(audit_liveness(ledger_trace))
        report.verdicts["ledger.honest-prefix"] = chain.ledger.honest_prefixes_agree()
    estimate = gas_estimate(trace, table)
    report.ops = dict(sorted(estimate.ops.items()))
    report.blocks = [
        {"block": h, "ops": dict(sorted(ops.items())), "gas": g}
        for h, (ops, g) in enumerate(zip(trace, estimate.per_block), start=1)
    ]
    report.gas = estimate.to_dict()
    report.trace = trace_lines(trace)
    report.verdicts["gas.additive"] = all(
        b["gas"] == sum(table.cost(op) * n for op, n in b["ops"].items()) for b in report.blocks
    )
    if games and cfg.games:
        report.games = run_games(cfg)
        if not cfg.game_faults:
            report.verdicts["games.no-wins"] = all(g["wins"] == 0 for g in report.games)
    return report


# -- command line -----------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scproto", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "run a CBE or RBE scenario"),
        ("games", "run the security game suite"),
        ("gas", "estimate gas from an op trace"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--seed", type=int, metavar="N")
        p.add_argument("--out", metavar="PATH")
        if name == "gas":
            p.add_argument("--trace", metavar="PATH", help="trace written by 'run'")
    return parser


def _load(args) -> ScenarioConfig:
    cfg = ScenarioConfig() if args.config is None else ScenarioConfig.from_file(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _emit(report: Report, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(report.text())
        return
    emit_report(report, out)
    write_trace([json.loads(line)["ops"] for line in report.trace], Path(out).with_suffix(".trace"))


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "gas":
            table = GasTable() if args.config is None else GasTable.from_file(args.config)
            trace = [] if args.trace is None else read_trace(args.trace)
            estimate = gas_estimate(trace, table)
            report = Report("", "gas", 0, ops=dict(estimate.ops), gas=estimate.to_dict())
            report.verdicts["gas.within-limit"] = not estimate.over_limit
        else:
            cfg = _load(args)
            if args.command == "games":
                if not cfg.games:
                    cfg = dataclasses.replace(cfg, games=("neqv", "nrep", "nfrm"))
                report = Report(cfg.digest(), "games", cfg.seed, games=run_games(cfg))
                if not cfg.game_faults:
                    report.verdicts["games.no-wins"] = all(g["wins"] == 0 for g in report.games)
            else:
                report = run_scenario(cfg)
            if args.out is None and cfg.output is not None:
                args.out = cfg.output
        _emit(report, args.out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    if not report.passed:
        failed = sorted(k for k, ok in report.verdicts.items() if not ok)
        print(f"invariant failures: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


__all__ = [
    "Report",
    "ScenarioConfig",
    "emit_report",
    "load_report",
    "main",
    "run_games",
    "run_scenario",
]


if __name__ == "__main__":
    sys.exit(main())

